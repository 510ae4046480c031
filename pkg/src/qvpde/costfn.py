"""Per-timestep cost functionals and their expansion into expectation values.

A step cost has the form  C = || M u - t ||**2  where u = scale * psi is the
state being optimized, M is a sum of operator words, and the target t is a sum
of words applied to frozen states (the previous step, an auxiliary state).
Expanding the square gives a sum of scalar terms

    Re( gamma * <psi_L| W |psi_R> ) * prod_k scale_k**p_k

between unit-norm states, with every scale factor collected into the monomial
prefactor.  Each normalized expectation then has modulus <= 1 (shifts are
unitary, diagonal factors of unit snapshots are contractions), so it is
directly measurable by a two-outcome test; see sampling.

Terms related by Re<L|W|R> = Re<R|Wdag|L> are merged into one bucket keyed by
the lexicographically smaller orientation.  For snapshots flagged real the
diagonal factor equals its own adjoint and merges further.  The merged
coefficients come out real; the expanded sum reproduces the direct vector
computation to roundoff, which the tests pin down.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import Grid1D, Grid2D, ScaledState
from .operators import (
    Diag,
    OperatorWord,
    Shift,
    apply_word,
    canonical_word,
    expectation,
    word_adjoint,
    word_mul,
    word_signature,
)


@dataclass(frozen=True)
class CostTerm:
    """One merged expectation bucket of the expanded cost."""

    gamma: complex
    powers: tuple  # sorted ((state_key, power), ...) scale monomial
    word: OperatorWord  # unit coefficient; factors only
    left: str
    right: str

    @property
    def trivial(self) -> bool:
        """<psi|I|psi> is identically 1; no measurement needed."""
        return len(self.word.factors) == 0 and self.left == self.right


def _monomial_powers(word: OperatorWord, left: str, right: str) -> tuple:
    counts: dict[str, int] = {}
    counts[left] = counts.get(left, 0) + 1
    counts[right] = counts.get(right, 0) + 1
    for f in word.factors:
        if isinstance(f, Diag):
            counts[f.state_key] = counts.get(f.state_key, 0) + f.power
    return tuple(sorted(counts.items()))


def _normalize_real_diags(word: OperatorWord, real_keys) -> OperatorWord:
    fs = tuple(
        replace(f, conjugated=False)
        if isinstance(f, Diag) and f.state_key in real_keys
        else f
        for f in word.factors
    )
    return OperatorWord(word.coeff, fs)


class CostModel:
    """Expanded form of || M u - t ||**2 over a registry of named states.

    m_words: list of OperatorWord applied to the optimized state (key
    opt_key).  target_words: list of (OperatorWord, right_key) pairs; the
    target vector is the sum of each word applied to that state.  real_keys
    marks snapshots with real amplitudes (allows adjoint merging of their
    diagonal factors).  With target_norm_exact the ||t||**2 block is not
    expanded; it is computed directly from the frozen states at evaluation
    time (it never depends on the optimized parameters).
    """

    def __init__(
        self,
        grid,
        m_words,
        target_words,
        opt_key: str = "u",
        real_keys=(),
        target_norm_exact: bool = False,
    ):
        self.grid = grid
        self.m_words = tuple(m_words)
        self.target_words = tuple(target_words)
        self.opt_key = opt_key
        self.real_keys = frozenset(real_keys)
        self.target_norm_exact = target_norm_exact
        self.terms = self._expand()

    # -- construction -----------------------------------------------------

    def _expand(self):
        raw = []
        for wi in self.m_words:
            for wj in self.m_words:
                w = word_mul(word_adjoint(wi), wj)
                raw.append((w, self.opt_key, self.opt_key))
        for wi in self.m_words:
            for wj, rk in self.target_words:
                w = word_mul(word_adjoint(wi), wj)
                raw.append((replace(w, coeff=-w.coeff), self.opt_key, rk))
                wa = word_adjoint(w)
                raw.append((replace(wa, coeff=-wa.coeff), rk, self.opt_key))
        if not self.target_norm_exact:
            for wj, rj in self.target_words:
                for wk, rk in self.target_words:
                    w = word_mul(word_adjoint(wj), wk)
                    raw.append((w, rj, rk))

        buckets: dict[tuple, list] = {}
        for word, left, right in raw:
            word = canonical_word(_normalize_real_diags(word, self.real_keys))
            coeff = word.coeff
            bare = OperatorWord(1.0, word.factors)
            adj = canonical_word(
                _normalize_real_diags(word_adjoint(bare), self.real_keys)
            )
            key_fwd = (left, word_signature(bare), right)
            key_rev = (right, word_signature(adj), left)
            if key_fwd <= key_rev:
                entry = buckets.setdefault(key_fwd, [0j, bare, left, right])
                entry[0] += coeff
            else:
                entry = buckets.setdefault(key_rev, [0j, adj, right, left])
                entry[0] += np.conj(coeff)

        terms = []
        for gamma, bare, left, right in buckets.values():
            if abs(gamma) < 1e-14:
                continue
            powers = _monomial_powers(bare, left, right)
            terms.append(CostTerm(complex(gamma), powers, bare, left, right))
        # deterministic ordering for the sampling layer
        terms.sort(key=lambda t: (t.left, word_signature(t.word), t.right))
        return tuple(terms)

    # -- evaluation -------------------------------------------------------

    def apply_m(self, vec: np.ndarray, states: dict) -> np.ndarray:
        out = np.zeros_like(vec, dtype=np.complex128)
        for w in self.m_words:
            out += apply_word(w, vec, self.grid, states)
        return out

    def target_vector(self, states: dict) -> np.ndarray:
        out = np.zeros(self.grid.size, dtype=np.complex128)
        for w, rk in self.target_words:
            out += apply_word(w, states[rk].vector(), self.grid, states)
        return out

    def evaluate_direct(self, states: dict) -> float:
        """|| M u - t ||**2 computed on the raw vectors."""
        u = states[self.opt_key].vector()
        resid = self.apply_m(u, states) - self.target_vector(states)
        return float(np.linalg.norm(resid) ** 2)

    def _unit_registry(self, states: dict) -> dict:
        return {k: ScaledState(1.0, st.psi) for k, st in states.items()}

    def monomial(self, powers, states: dict) -> float:
        out = 1.0
        for key, p in powers:
            out *= states[key].scale ** p
        return out

    def expectation_values(self, states: dict) -> list[complex]:
        """Exact normalized expectation for every term (trivial ones too)."""
        unit = self._unit_registry(states)
        vals = []
        for t in self.terms:
            vals.append(
                expectation(t.word, unit[t.left], unit[t.right], self.grid, unit)
            )
        return vals

    def evaluate_terms(self, states: dict, values) -> float:
        """Assemble the cost from supplied expectation values (exact or
        estimated), adding the exact target-norm block if configured."""
        total = 0.0
        for t, z in zip(self.terms, values):
            total += (t.gamma * z).real * self.monomial(t.powers, states)
        if self.target_norm_exact:
            total += float(np.linalg.norm(self.target_vector(states)) ** 2)
        return total

    def evaluate_expanded(self, states: dict) -> float:
        return self.evaluate_terms(states, self.expectation_values(states))

    def count_expectations(self, include_trivial: bool = False) -> int:
        return sum(1 for t in self.terms if include_trivial or not t.trivial)


# ---------------------------------------------------------------------------
# problem-specific cost builders


def _shift1(p):
    return Shift(p, "x")


def black_scholes_1d_step_cost(
    grid: Grid1D,
    rate: float,
    sigma_sq: float,
    nonlin: float,
    tau: float,
    growth: float = 1.0,
) -> CostModel:
    """Implicit step for the 1D (optionally nonlinear) pricing equation.

    M = a I + b A + c Adag + eps D_chi (g+ A + g- Adag + g0 I), target = the
    previous solution.  The diagonal snapshot "chi" holds the trained
    auxiliary state approximating the curvature-minus-slope of the previous
    solution; growth carries the time-dependent factor of the nonlinearity.
    """
    s = 2 ** (grid.n - 1) / grid.L
    q = 4**grid.n / grid.L**2
    al = 1 - rate * tau
    be = (sigma_sq / 2 - rate) * tau
    ga = (sigma_sq / 2) * tau
    a = al - 2 * ga * q
    b = ga * q - be * s
    c = ga * q + be * s
    m_words = [
        OperatorWord(a, ()),
        OperatorWord(b, (_shift1(1),)),
        OperatorWord(c, (_shift1(-1),)),
    ]
    if nonlin != 0.0:
        eps = (sigma_sq / 2) * growth * nonlin**2 * tau
        gp, gm, g0 = q - s, q + s, -2 * q
        m_words += [
            OperatorWord(eps * gp, (Diag("chi"), _shift1(1))),
            OperatorWord(eps * gm, (Diag("chi"), _shift1(-1))),
            OperatorWord(eps * g0, (Diag("chi"),)),
        ]
    target = [(OperatorWord(1.0, ()), "u_prev")]
    return CostModel(grid, m_words, target, real_keys=("chi", "u_prev"))


def black_scholes_1d_chi_cost(grid: Grid1D) -> CostModel:
    """Auxiliary-state fit: chi should match (d2/dx2 - d/dx) of the previous
    solution."""
    s = 2 ** (grid.n - 1) / grid.L
    q = 4**grid.n / grid.L**2
    target = [
        (OperatorWord(q - s, (_shift1(1),)), "u_prev"),
        (OperatorWord(q + s, (_shift1(-1),)), "u_prev"),
        (OperatorWord(-2 * q, ()), "u_prev"),
    ]
    return CostModel(
        grid,
        [OperatorWord(1.0, ())],
        target,
        opt_key="chi",
        real_keys=("u_prev",),
    )


def black_scholes_2d_step_cost(
    grid: Grid2D,
    rate: float,
    sigma_x_sq: float,
    sigma_y_sq: float,
    corr: float,
    tau: float,
) -> CostModel:
    """Implicit step for the linear two-asset pricing equation."""
    sx = 2 ** (grid.nx - 1) / grid.Lx
    sy = 2 ** (grid.ny - 1) / grid.Ly
    qx = 4**grid.nx / grid.Lx**2
    qy = 4**grid.ny / grid.Ly**2
    al = 1 - rate * tau
    bx = (sigma_x_sq / 2 - rate) * tau
    by = (sigma_y_sq / 2 - rate) * tau
    gx = sigma_x_sq * tau / 2
    gy = sigma_y_sq * tau / 2
    gxy = corr * np.sqrt(sigma_x_sq * sigma_y_sq) * tau / 2
    Ax, Axd = Shift(1, "x"), Shift(-1, "x")
    Ay, Ayd = Shift(1, "y"), Shift(-1, "y")
    m_words = [
        OperatorWord(al - 2 * gx * qx - 2 * gy * qy, ()),
        OperatorWord(gx * qx - bx * sx, (Ax,)),
        OperatorWord(gx * qx + bx * sx, (Axd,)),
        OperatorWord(gy * qy - by * sy, (Ay,)),
        OperatorWord(gy * qy + by * sy, (Ayd,)),
        OperatorWord(gxy * sx * sy, (Ax, Ay)),
        OperatorWord(-gxy * sx * sy, (Ax, Ayd)),
        OperatorWord(-gxy * sx * sy, (Axd, Ay)),
        OperatorWord(gxy * sx * sy, (Axd, Ayd)),
    ]
    m_words = [w for w in m_words if w.coeff != 0.0]
    target = [(OperatorWord(1.0, ()), "u_prev")]
    return CostModel(grid, m_words, target, real_keys=("u_prev",))


def buckmaster_step_cost(grid: Grid1D, alpha: float, tau: float) -> CostModel:
    """Explicit step for the thin-film equation
    f_t = (f**4)_xx + alpha (f**3)_x; powers of f become diagonal factors of
    the previous snapshot acting on itself."""
    s = 2 ** (grid.n - 1) / grid.L
    q = 4**grid.n / grid.L**2
    D3 = Diag("u_prev", 3)
    D2 = Diag("u_prev", 2)
    target = [
        (OperatorWord(1.0, ()), "u_prev"),
        (OperatorWord(tau * q, (_shift1(1), D3)), "u_prev"),
        (OperatorWord(tau * q, (_shift1(-1), D3)), "u_prev"),
        (OperatorWord(-2 * tau * q, (D3,)), "u_prev"),
        (OperatorWord(tau * alpha * s, (_shift1(1), D2)), "u_prev"),
        (OperatorWord(-tau * alpha * s, (_shift1(-1), D2)), "u_prev"),
    ]
    return CostModel(
        grid,
        [OperatorWord(1.0, ())],
        target,
        real_keys=("u_prev",),
        target_norm_exact=True,
    )


def kpz_step_cost(grid: Grid1D, alpha: float, beta: float, tau: float) -> CostModel:
    """Explicit step for the interface-growth equation
    f_t = alpha f_xx + beta (f_x)**2, with the squared slope supplied by the
    auxiliary snapshot chi ~ f_x as a diagonal factor acting on itself."""
    q = 4**grid.n / grid.L**2
    target = [
        (OperatorWord(1 - 2 * alpha * tau * q, ()), "u_prev"),
        (OperatorWord(alpha * tau * q, (_shift1(1),)), "u_prev"),
        (OperatorWord(alpha * tau * q, (_shift1(-1),)), "u_prev"),
        (OperatorWord(beta * tau, (Diag("chi"),)), "chi"),
    ]
    return CostModel(
        grid,
        [OperatorWord(1.0, ())],
        target,
        real_keys=("u_prev", "chi"),
        target_norm_exact=True,
    )


def kpz_chi_cost(grid: Grid1D) -> CostModel:
    """Auxiliary-state fit: chi should match the slope of the previous
    solution."""
    s = 2 ** (grid.n - 1) / grid.L
    target = [
        (OperatorWord(s, (_shift1(1),)), "u_prev"),
        (OperatorWord(-s, (_shift1(-1),)), "u_prev"),
    ]
    return CostModel(
        grid,
        [OperatorWord(1.0, ())],
        target,
        opt_key="chi",
        real_keys=("u_prev",),
    )


# ---------------------------------------------------------------------------
# problem containers: one frozen record per PDE instance, holding the grid,
# the equation parameters, and the step schedule, with builders for the cost
# models used at each stage.


def mirror_reflect(values: np.ndarray) -> np.ndarray:
    """Double a vector by appending its reversal: [a,b,c] -> [a,b,c,c,b,a].

    Turns a Dirichlet problem on the half domain into a periodic one on the
    doubled domain; the reflection axis sits between the two middle points.
    """
    values = np.asarray(values)
    return np.concatenate([values, values[::-1]])


@dataclass(frozen=True)
class Bse1dProblem:
    """Backward evolution of the option-pricing equation in log price.

    The grid is the doubled (reflected) domain; the first half holds the
    physical points.  nonlin = 0 gives the constant-volatility model.  tau is
    negative: each step moves from t toward t + tau < t, starting at t0 (the
    maturity).  The volatility perturbation carries a growth factor
    exp(rate * (t0 - t)) evaluated at the new time of each step.
    """

    grid: Grid1D
    strike: float = 50.0
    rate: float = 0.3
    sigma0_sq: float = 0.04
    nonlin: float = 0.1
    t0: float = 3.0
    tau: float = -0.3

    scheme = "backward_euler_semi_implicit"

    def __post_init__(self):
        if not self.grid.reflected:
            raise ValueError("pricing problems need a reflected grid")

    # scheme prefactors; growth and eps depend on the time being stepped to
    @property
    def alpha_coeff(self) -> float:
        return 1.0 - self.rate * self.tau

    @property
    def beta_coeff(self) -> float:
        return (self.sigma0_sq / 2 - self.rate) * self.tau

    @property
    def gamma_coeff(self) -> float:
        return (self.sigma0_sq / 2) * self.tau

    def growth(self, t: float) -> float:
        return float(np.exp(self.rate * (self.t0 - t)))

    def eps(self, t: float) -> float:
        """Prefactor of the auxiliary-state diagonal in the step operator
        (the auxiliary state's own scale is not folded in here)."""
        return self.gamma_coeff * self.growth(t) * self.nonlin**2

    def step_cost(self, t_new: float) -> CostModel:
        return black_scholes_1d_step_cost(
            self.grid,
            self.rate,
            self.sigma0_sq,
            self.nonlin,
            self.tau,
            growth=self.growth(t_new),
        )

    def chi_cost(self) -> CostModel:
        return black_scholes_1d_chi_cost(self.grid)

    def physical_points(self) -> np.ndarray:
        return self.grid.points()[: self.grid.size // 2]

    def physical_mask(self) -> np.ndarray:
        mask = np.zeros(self.grid.size, dtype=bool)
        mask[: self.grid.size // 2] = True
        return mask

    def payoff(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(self.strike - np.exp(x), 0.0)

    def terminal_condition(self) -> np.ndarray:
        """Put payoff on the physical half, mirrored onto the full grid."""
        return mirror_reflect(self.payoff(self.physical_points()))


@dataclass(frozen=True)
class Bse2dProblem:
    """Backward evolution of the linear two-asset pricing equation.

    Both axes are reflected; the physical quadrant is the low half of each.
    The payoff is a put on the weighted sum of the two asset prices.
    """

    grid: Grid2D
    strike: float = 50.0
    rate: float = 0.3
    sigma_x: float = 0.2
    sigma_y: float = 0.2
    corr: float = 0.0
    weight_x: float = 1.0
    weight_y: float = 1.0
    t0: float = 3.0
    tau: float = -0.3

    scheme = "backward_euler"

    def __post_init__(self):
        if not (self.grid.reflected_x and self.grid.reflected_y):
            raise ValueError("pricing problems need a reflected grid")

    def step_cost(self) -> CostModel:
        return black_scholes_2d_step_cost(
            self.grid,
            self.rate,
            self.sigma_x**2,
            self.sigma_y**2,
            self.corr,
            self.tau,
        )

    def physical_shape(self) -> tuple:
        nx, ny = self.grid.shape
        return nx // 2, ny // 2

    def physical_axes(self) -> tuple:
        nxp, nyp = self.physical_shape()
        return (
            self.grid.x_axis().points()[:nxp],
            self.grid.y_axis().points()[:nyp],
        )

    def physical_mask(self) -> np.ndarray:
        nx, ny = self.grid.shape
        mask = np.zeros((nx, ny), dtype=bool)
        mask[: nx // 2, : ny // 2] = True
        return mask.reshape(-1)

    def payoff(self, x, y) -> np.ndarray:
        basket = self.weight_x * np.exp(x) + self.weight_y * np.exp(y)
        return np.maximum(self.strike - basket, 0.0)

    def terminal_condition(self) -> np.ndarray:
        """Payoff on the physical quadrant, mirrored along both axes,
        flattened with the x index most significant."""
        nx, ny = self.grid.shape
        x, y = self.physical_axes()
        quad = self.payoff(x[:, None], y[None, :])
        ix = np.minimum(np.arange(nx), nx - 1 - np.arange(nx))
        iy = np.minimum(np.arange(ny), ny - 1 - np.arange(ny))
        return quad[np.ix_(ix, iy)].reshape(-1)


@dataclass(frozen=True)
class BuckmasterProblem:
    """Explicit evolution of the thin-film equation
    f_t = (f^4)_xx + alpha_coeff * (f^3)_x on a periodic domain."""

    grid: Grid1D
    alpha_coeff: float = 1.0
    tau: float = 0.008

    scheme = "forward_euler"

    def step_cost(self) -> CostModel:
        return buckmaster_step_cost(self.grid, self.alpha_coeff, self.tau)

    def default_initial(self) -> np.ndarray:
        """Smooth positive profile (2 - sin x)/3."""
        x = self.grid.points()
        return (2.0 - np.sin(x)) / 3.0


@dataclass(frozen=True)
class KpzProblem:
    """Explicit evolution of the deterministic interface-growth equation
    f_t = alpha f_xx + beta (f_x)^2 on a periodic domain."""

    grid: Grid1D
    alpha: float = 0.5
    beta: float = 0.5
    tau: float = 0.02

    scheme = "forward_euler"

    def step_cost(self) -> CostModel:
        return kpz_step_cost(self.grid, self.alpha, self.beta, self.tau)

    def chi_cost(self) -> CostModel:
        return kpz_chi_cost(self.grid)

    def default_initial(self) -> np.ndarray:
        """Gaussian bump exp(-x^2)."""
        x = self.grid.points()
        return np.exp(-(x**2))
