"""Dense finite-difference reference solvers and analytic oracles.

The reference solvers reuse the operator words of the variational cost
models, so both sides discretize identically by construction; the only
differences are boundary handling and the linear-algebra path.  All solvers
return the full trajectory, shape (steps+1, points), starting from the
initial (or terminal) condition.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.stats import norm

from .core import DimensionError, normalize
from .costfn import (
    Bse1dProblem,
    Bse2dProblem,
    BuckmasterProblem,
    CostModel,
    KpzProblem,
)
from .operators import Diag, Shift


class SolverInstability(RuntimeError):
    """A classical solve hit a singular step matrix or non-finite values;
    carries the 1-based index of the offending step."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


def put_price_closed_form(spot, strike, rate, sigma_sq, t_to_maturity):
    """European put value under constant volatility; the payoff itself when
    no time remains."""
    spot = np.asarray(spot, dtype=float)
    if t_to_maturity <= 0:
        return np.maximum(strike - spot, 0.0)
    root = np.sqrt(sigma_sq * t_to_maturity)
    d1 = (np.log(spot / strike) + (rate + sigma_sq / 2) * t_to_maturity) / root
    d2 = d1 - root
    disc = strike * np.exp(-rate * t_to_maturity)
    return disc * norm.cdf(-d2) - spot * norm.cdf(-d1)


def put_fit_error_closed_form(m: int, strike: float, x0: float, length: float) -> float:
    """Continuum relative L2 error of the best (2**m)-coefficient Fourier
    truncation of the mirror-reflected put payoff max(K - e^x, 0).

    The payoff lives on the first half of a circle of circumference
    `length` starting at x0; the second half mirrors it about the midpoint.
    Coefficients and norms are elementary integrals of exponentials, so no
    grid enters and the value is independent of the register size n.
    """
    log_k = np.log(strike)
    mid = x0 + length / 2
    if not x0 < log_k < mid:
        raise ValueError("strike must lie inside the physical half-domain")

    def payoff_integral(omega):
        # int_{x0}^{log K} (K - e^x) e^{-i omega x} dx
        if omega == 0.0:
            return strike * (log_k - x0) - (strike - np.exp(x0))
        jw = -1j * omega
        first = strike * (np.exp(jw * log_k) - np.exp(jw * x0)) / jw
        second = (np.exp((1 + jw) * log_k) - np.exp((1 + jw) * x0)) / (1 + jw)
        return first - second

    def coeff(k):
        omega = 2 * np.pi * k / length
        forward = payoff_integral(omega)
        mirrored = np.exp(-2j * omega * mid) * payoff_integral(-omega)
        return (forward + mirrored) / length

    mean_square = (2 / length) * (
        strike**2 * (log_k - x0)
        - 2 * strike * (strike - np.exp(x0))
        + (strike**2 - np.exp(2 * x0)) / 2
    )
    kept = abs(coeff(0)) ** 2 + 2 * sum(abs(coeff(k)) ** 2 for k in range(1, 2**m))
    return float(np.sqrt(max(0.0, 1.0 - kept / mean_square)))


# ---------------------------------------------------------------------------
# matrix assembly from cost-model words


def dense_step_matrix(cost: CostModel, states: dict | None = None) -> np.ndarray:
    """Dense matrix of the cost model's step operator M, column by column.

    Inherits the periodic wraparound of the shift operators; diagonal
    factors are bound to the supplied snapshots at their full magnitude.
    """
    npts = cost.grid.size
    mat = np.empty((npts, npts), dtype=np.complex128)
    basis = np.zeros(npts, dtype=np.complex128)
    for j in range(npts):
        basis[j] = 1.0
        mat[:, j] = cost.apply_m(basis, states)
        basis[j] = 0.0
    return mat


def _word_offset_coefficients(cost: CostModel) -> tuple[dict, dict]:
    """Split the step words into (shift offsets) -> coefficient tables.

    Returns (linear, nonlinear): the nonlinear table collects words carrying
    a first-power diagonal factor on the left, realized as a row scaling by
    the bound snapshot.  Only the word shapes the pricing models produce are
    supported here.
    """
    linear: dict[tuple, float] = {}
    nonlinear: dict[tuple, float] = {}
    for w in cost.m_words:
        px = py = 0
        ndiag = 0
        for f in w.factors:
            if isinstance(f, Shift):
                if f.axis == "x":
                    px += f.power
                else:
                    py += f.power
            elif isinstance(f, Diag):
                ndiag += f.power
        if ndiag > 1:
            raise ValueError("row-scaling form needs at most one diagonal")
        table = nonlinear if ndiag else linear
        key = (px, py)
        table[key] = table.get(key, 0.0) + float(np.real(w.coeff))
    return linear, nonlinear


def _tridiagonal_rows(npts: int, offsets: dict, chi=None, chi_offsets=None):
    """Non-wrapping dense matrix from offset tables; out-of-range neighbor
    references are dropped (those rows get replaced by boundary pins)."""
    mat = np.zeros((npts, npts))
    rows = np.arange(npts)
    tables = [(offsets, None)]
    if chi_offsets:
        tables.append((chi_offsets, chi))
    for table, scaling in tables:
        for (px, _), cval in table.items():
            cols = rows + px
            ok = (cols >= 0) & (cols < npts)
            vals = np.full(npts, cval)
            if scaling is not None:
                vals = vals * scaling
            mat[rows[ok], cols[ok]] += vals[ok]
    return mat


def _chi_stencil_interior(values: np.ndarray, chi_offsets: dict) -> np.ndarray:
    """Auxiliary stencil on a non-periodic vector; endpoint entries are
    copies of their neighbors and only ever multiply pinned rows."""
    out = np.empty_like(values)
    acc = np.zeros(len(values) - 2)
    for (px, _), g in chi_offsets.items():
        acc += g * values[1 + px : len(values) - 1 + px]
    out[1:-1] = acc
    out[0] = out[1]
    out[-1] = out[-2]
    return out


# ---------------------------------------------------------------------------
# 1D pricing solver


def solve_bse1d_classical(
    problem: Bse1dProblem,
    boundary: str = "dirichlet_exact",
    steps: int = 10,
    terminal=None,
) -> np.ndarray:
    """Backward time evolution with the same semi-implicit scheme as the
    variational solver: the auxiliary stencil is evaluated on the previous
    step, the rest is solved implicitly.

    dirichlet_exact works on the physical half grid and pins both ends to
    the put asymptotics at the current time, strike*exp(-rate*(t0-t)) - S at
    the low end and 0 at the high end.  periodic_reflected works on the full
    doubled grid with wraparound, mirroring what the ansatz evolution sees.
    """
    full = problem.grid.size
    # target words of the chi fit are the stencil itself
    chi_offsets = {
        _shift_offset(w): float(np.real(w.coeff))
        for w, _ in problem.chi_cost().target_words
    }
    if boundary == "periodic_reflected":
        if terminal is None:
            terminal = problem.terminal_condition()
        state = np.asarray(terminal, dtype=float).copy()
        if state.shape != (full,):
            raise DimensionError("terminal length does not match the grid")
        return _evolve_bse1d_periodic(problem, state, steps)
    if boundary != "dirichlet_exact":
        raise ValueError(f"unknown boundary mode {boundary!r}")

    x = problem.physical_points()
    npts = full // 2
    if terminal is None:
        terminal = problem.payoff(x)
    state = np.asarray(terminal, dtype=float).copy()
    if state.shape != (npts,):
        raise DimensionError("terminal length does not match the half grid")

    out = [state.copy()]
    lu = None
    for k in range(1, steps + 1):
        t_new = problem.t0 + k * problem.tau
        cost = problem.step_cost(t_new)
        linear, nonlin = _word_offset_coefficients(cost)
        if nonlin:
            chi = _chi_stencil_interior(state, chi_offsets)
            mat = _tridiagonal_rows(npts, linear, chi, nonlin)
        elif lu is None:
            mat = _tridiagonal_rows(npts, linear)
        else:
            mat = None
        rhs = state.copy()
        rhs[0] = problem.strike * np.exp(-problem.rate * (problem.t0 - t_new)) - np.exp(
            x[0]
        )
        rhs[-1] = 0.0
        try:
            if mat is not None:
                mat[0, :] = 0.0
                mat[0, 0] = 1.0
                mat[-1, :] = 0.0
                mat[-1, -1] = 1.0
                if nonlin:
                    state = np.linalg.solve(mat, rhs)
                else:
                    lu = lu_factor(mat)
                    state = lu_solve(lu, rhs)
            else:
                state = lu_solve(lu, rhs)
        except np.linalg.LinAlgError as exc:
            raise SolverInstability(f"singular step matrix: {exc}", k) from exc
        if not np.all(np.isfinite(state)):
            raise SolverInstability("non-finite solution values", k)
        out.append(state.copy())
    return np.array(out)


def _shift_offset(word) -> tuple:
    px = py = 0
    for f in word.factors:
        if isinstance(f, Shift):
            if f.axis == "x":
                px += f.power
            else:
                py += f.power
    return (px, py)


def _evolve_bse1d_periodic(problem, state, steps) -> np.ndarray:
    chi_cost = problem.chi_cost()
    out = [state.copy()]
    lu = None
    for k in range(1, steps + 1):
        t_new = problem.t0 + k * problem.tau
        cost = problem.step_cost(t_new)
        nonlinear = problem.nonlin != 0.0
        if nonlinear:
            chi = chi_cost.target_vector({"u_prev": normalize(state)}).real
            mat = dense_step_matrix(cost, {"chi": normalize(chi)}).real
        elif lu is None:
            mat = dense_step_matrix(cost).real
        try:
            if nonlinear:
                state = np.linalg.solve(mat, state)
            else:
                if lu is None:
                    lu = lu_factor(mat)
                state = lu_solve(lu, state)
        except np.linalg.LinAlgError as exc:
            raise SolverInstability(f"singular step matrix: {exc}", k) from exc
        if not np.all(np.isfinite(state)):
            raise SolverInstability("non-finite solution values", k)
        out.append(state.copy())
    return np.array(out)


# ---------------------------------------------------------------------------
# 2D pricing solver


def solve_bse2d_classical(
    problem: Bse2dProblem,
    boundary: str = "dirichlet_exact",
    steps: int = 10,
    terminal=None,
) -> np.ndarray:
    """Backward Euler for the two-asset model on the flattened grid.

    dirichlet_exact works on the physical quadrant: edges where one asset
    price is smallest are pinned to the single-asset put on the surviving
    asset (the basket value in that limit), edges where one price is
    largest to zero.  periodic_reflected wraps on the full doubled grid.
    The step matrix is time independent, so its factorization is reused.
    """
    if boundary == "periodic_reflected":
        if terminal is None:
            terminal = problem.terminal_condition()
        state = np.asarray(terminal, dtype=float).copy()
        if state.shape != (problem.grid.size,):
            raise DimensionError("terminal length does not match the grid")
        mat = dense_step_matrix(problem.step_cost()).real
        return _backward_lu_evolve(mat, state, steps, pins=None)
    if boundary != "dirichlet_exact":
        raise ValueError(f"unknown boundary mode {boundary!r}")
    if problem.weight_x <= 0 or problem.weight_y <= 0:
        raise ValueError("edge pins assume strictly positive weights")

    nxp, nyp = problem.physical_shape()
    size = nxp * nyp
    x, y = problem.physical_axes()
    if terminal is None:
        terminal = problem.payoff(x[:, None], y[None, :]).reshape(-1)
    state = np.asarray(terminal, dtype=float).copy()
    if state.shape != (size,):
        raise DimensionError("terminal length does not match the quadrant")

    linear, nonlin = _word_offset_coefficients(problem.step_cost())
    if nonlin:
        raise ValueError("the two-asset model is linear")
    mat = np.zeros((size, size))
    for (px, py), cval in linear.items():
        ivalid = np.arange(max(0, -px), nxp - max(0, px))
        jvalid = np.arange(max(0, -py), nyp - max(0, py))
        rows = (ivalid[:, None] * nyp + jvalid[None, :]).reshape(-1)
        cols = ((ivalid[:, None] + px) * nyp + (jvalid[None, :] + py)).reshape(-1)
        mat[rows, cols] += cval
    edge = np.zeros((nxp, nyp), dtype=bool)
    edge[0, :] = edge[-1, :] = True
    edge[:, 0] = edge[:, -1] = True
    edge = edge.reshape(-1)
    mat[edge, :] = 0.0
    mat[edge, edge] = 1.0

    def pins(t_new):
        vals = np.zeros((nxp, nyp))
        remaining = problem.t0 - t_new
        vals[0, :] = put_price_closed_form(
            problem.weight_y * np.exp(y),
            problem.strike,
            problem.rate,
            problem.sigma_y**2,
            remaining,
        )
        vals[:, 0] = put_price_closed_form(
            problem.weight_x * np.exp(x),
            problem.strike,
            problem.rate,
            problem.sigma_x**2,
            remaining,
        )
        vals[-1, :] = 0.0
        vals[:, -1] = 0.0
        return edge, vals.reshape(-1)[edge]

    return _backward_lu_evolve(mat, state, steps, pins, problem.t0, problem.tau)


def _backward_lu_evolve(mat, state, steps, pins, t0=0.0, tau=0.0):
    out = [state.copy()]
    try:
        lu = lu_factor(mat)
    except np.linalg.LinAlgError as exc:
        raise SolverInstability(f"singular step matrix: {exc}", 1) from exc
    for k in range(1, steps + 1):
        rhs = state.copy()
        if pins is not None:
            where, values = pins(t0 + k * tau)
            rhs[where] = values
        state = lu_solve(lu, rhs)
        if not np.all(np.isfinite(state)):
            raise SolverInstability("non-finite solution values", k)
        out.append(state.copy())
    return np.array(out)


# ---------------------------------------------------------------------------
# explicit solvers


def _forward_step(problem, state: np.ndarray) -> np.ndarray:
    """One explicit step: the step cost's target words evaluated on the
    current state are exactly the updated function."""
    cost = problem.step_cost()
    states = {"u_prev": normalize(state)}
    if isinstance(problem, KpzProblem):
        chi = problem.chi_cost().target_vector(states).real
        states["chi"] = normalize(chi)
    return cost.target_vector(states).real


def _diffusion_number(problem, state: np.ndarray) -> float:
    """Explicit-scheme stability indicator tau * D_max / h^2; values at or
    beyond 1 amplify grid-scale modes."""
    q = 4**problem.grid.n / problem.grid.L**2
    if isinstance(problem, BuckmasterProblem):
        diffusivity = 4.0 * float(np.max(np.abs(state)) ** 3)
    else:
        diffusivity = problem.alpha
    return problem.tau * diffusivity * q


def solve_explicit_classical(problem, steps: int, initial=None) -> np.ndarray:
    """Forward Euler with periodic wraparound for the explicit problems.

    Timestep stability is the caller's responsibility; a warning is emitted
    when the diffusion number reaches 1 and the solve aborts with the step
    index once values stop being finite.
    """
    if not isinstance(problem, (BuckmasterProblem, KpzProblem)):
        raise TypeError("explicit solver covers the forward-Euler problems")
    if initial is None:
        initial = problem.default_initial()
    state = np.asarray(initial, dtype=float).copy()
    if state.shape != (problem.grid.size,):
        raise DimensionError("initial length does not match the grid")
    if _diffusion_number(problem, state) >= 1.0:
        warnings.warn(
            "explicit timestep exceeds the diffusive stability limit",
            RuntimeWarning,
            stacklevel=2,
        )
    out = [state.copy()]
    for k in range(1, steps + 1):
        try:
            state = _forward_step(problem, state)
        except (ValueError, FloatingPointError) as exc:
            # norm overflow inside the step shows up before the values do
            raise SolverInstability(f"diverging solution values: {exc}", k) from exc
        if not np.all(np.isfinite(state)):
            raise SolverInstability("non-finite solution values", k)
        out.append(state.copy())
    return np.array(out)


# ---------------------------------------------------------------------------
# error metric


def relative_error(quantum, classical, mask=None) -> float:
    """L2 norm of the difference over the L2 norm of the reference,
    restricted to the masked points (e.g. the physical half of a reflected
    domain)."""
    q = np.asarray(quantum).reshape(-1)
    c = np.asarray(classical).reshape(-1)
    if q.shape != c.shape:
        raise DimensionError(f"length mismatch: {q.shape} vs {c.shape}")
    if mask is not None:
        mask = np.asarray(mask)
        q = q[mask]
        c = c[mask]
    denom = np.linalg.norm(c)
    if denom == 0.0:
        raise ValueError("reference vector has zero norm")
    return float(np.linalg.norm(q - c) / denom)
