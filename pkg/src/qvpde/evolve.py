"""Time-evolution driver: per-step training of auxiliary states and the
solution state, time bookkeeping, trajectory recording, error reporting.

Each step freezes the previous solution state, trains any auxiliary state
the cost needs (the curvature-minus-slope state for the nonlinear pricing
model, the slope state for the interface-growth model), then optimizes the
solution parameters against the step cost.  A dense mode replaces the
ansatz optimization with exact linear algebra, isolating scheme error from
representation and optimizer error.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .ansatz import FourierAnsatz
from .classical import (
    relative_error,
    solve_bse1d_classical,
    solve_bse2d_classical,
    solve_explicit_classical,
)
from .core import DimensionError, ParamVector, ScaledState, normalize
from .costfn import Bse1dProblem, Bse2dProblem, KpzProblem
from .optimize import TimestepResult, timestep_optimize


class EvolveError(RuntimeError):
    """A stage failed inside the evolution loop; carries the step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"step {step}: {message}")
        self.step = step


def reflect_for_dirichlet(samples: np.ndarray, grid) -> np.ndarray:
    """Mirror half-domain samples onto the doubled periodic grid:
    [1,2,3,4] -> [1,2,3,4,4,3,2,1]."""
    samples = np.asarray(samples)
    if not grid.reflected:
        raise ValueError("grid is not flagged as reflected")
    if samples.shape != (grid.size // 2,):
        raise DimensionError(
            f"expected {grid.size // 2} half-domain samples, got {samples.shape}"
        )
    return np.concatenate([samples, samples[::-1]])


@dataclass(frozen=True)
class StageConfig:
    """Optimizer settings for one training stage."""

    budget: int
    angle_halfwidth: float
    optimizer: str = "de"
    pop_size: int = 15
    scale_halfwidth: float | None = None


@dataclass
class EvolutionPlan:
    """Everything one evolution run needs.

    u_ansatz None selects the dense mode: states are raw vectors and every
    step is solved exactly, which pins down the scheme itself.  chi_ansatz
    is required whenever the problem trains an auxiliary state (nonlinear
    1D pricing: layered ansatz, optimized; interface growth: Fourier
    ansatz, fitted by the exact read-in formulas).
    """

    problem: object
    steps: int
    u_ansatz: object | None = None
    chi_ansatz: object | None = None
    u_stage: StageConfig | None = None
    chi_stage: StageConfig | None = None
    seed: int = 0
    initial: np.ndarray | None = None
    reference: str = "dirichlet_exact"


@dataclass
class StepRecord:
    index: int
    t_new: float
    u_cost: float
    u_evals: int
    chi_cost: float | None = None
    chi_evals: int | None = None
    u_params: ParamVector | None = None
    chi_params: ParamVector | None = None
    rel_error: float = 0.0
    wall_time: float = 0.0


@dataclass
class RunRecord:
    read_in_error: float
    steps: list[StepRecord] = field(default_factory=list)
    final_error: float = 0.0
    reference_mode: str = "dirichlet_exact"
    t_final: float = 0.0
    trajectory: np.ndarray | None = None
    reference_trajectory: np.ndarray | None = None

    @property
    def final_state(self) -> np.ndarray:
        return self.trajectory[-1]

    @property
    def reference_state(self) -> np.ndarray:
        return self.reference_trajectory[-1]


@dataclass
class EvolutionState:
    """Carried between steps: the current solution state and, in ansatz
    mode, the parameters that generate it."""

    state: ScaledState
    u_params: ParamVector | None = None
    chi_params: ParamVector | None = None


# ---------------------------------------------------------------------------
# problem wiring


def needs_chi(problem) -> bool:
    if isinstance(problem, Bse1dProblem):
        return problem.nonlin != 0.0
    return isinstance(problem, KpzProblem)


def initial_samples(problem) -> np.ndarray:
    if isinstance(problem, (Bse1dProblem, Bse2dProblem)):
        return problem.terminal_condition()
    return problem.default_initial()


def start_time(problem) -> float:
    return getattr(problem, "t0", 0.0)


def _step_cost_model(problem, t_new):
    if isinstance(problem, Bse1dProblem):
        return problem.step_cost(t_new)
    return problem.step_cost()


def _mask(problem) -> np.ndarray | None:
    if isinstance(problem, (Bse1dProblem, Bse2dProblem)):
        return problem.physical_mask()
    return None


def classical_reference(plan: EvolutionPlan) -> np.ndarray:
    """Trajectory of the configured classical reference; rows align with the
    quantum read-out after masking to the physical region."""
    problem, steps = plan.problem, plan.steps
    if isinstance(problem, Bse1dProblem):
        if plan.reference == "periodic_readin":
            terminal = _read_in_vector(plan)
            traj = solve_bse1d_classical(problem, "periodic_reflected", steps, terminal)
            return traj[:, _mask(problem)]
        traj = solve_bse1d_classical(problem, "dirichlet_exact", steps)
        return traj
    if isinstance(problem, Bse2dProblem):
        if plan.reference == "periodic_readin":
            terminal = _read_in_vector(plan)
            traj = solve_bse2d_classical(problem, "periodic_reflected", steps, terminal)
            return traj[:, _mask(problem)]
        return solve_bse2d_classical(problem, "dirichlet_exact", steps)
    initial = plan.initial if plan.initial is not None else initial_samples(problem)
    return solve_explicit_classical(problem, steps, initial)


def _read_in_vector(plan: EvolutionPlan) -> np.ndarray:
    init = plan.initial if plan.initial is not None else initial_samples(plan.problem)
    if plan.u_ansatz is None:
        return np.asarray(init, dtype=float)
    params = plan.u_ansatz.read_in(init)
    return plan.u_ansatz.prepare(params).vector().real


# ---------------------------------------------------------------------------
# stages


def _prepare(ansatz, params: ParamVector) -> ScaledState:
    return ansatz.prepare(params)


def _chi_target(problem, prev: ScaledState) -> np.ndarray:
    return problem.chi_cost().target_vector({"u_prev": prev}).real


def _train_chi(problem, prev: ScaledState, plan, carry, rng):
    """Fit the auxiliary state for this step.  Fourier ansatze use the
    exact read-in formulas (the stencil of a band-limited state is again
    band-limited); layered ansatze are optimized, warm-started from the
    previous step."""
    chi_model = problem.chi_cost()
    if isinstance(plan.chi_ansatz, FourierAnsatz):
        target = _chi_target(problem, prev)
        params = plan.chi_ansatz.read_in(target)
        state = plan.chi_ansatz.prepare(params)
        cost = chi_model.evaluate_direct({"chi": state, "u_prev": prev})
        return params, state, float(cost), 0
    stage = plan.chi_stage
    if stage is None:
        raise ValueError("auxiliary stage configuration missing")

    def cost_fn(pv: ParamVector) -> float:
        cand = _prepare(plan.chi_ansatz, pv)
        return chi_model.evaluate_direct({"chi": cand, "u_prev": prev})

    init = carry.chi_params
    if init is None:
        init = ParamVector(1.0, np.zeros(plan.chi_ansatz.n_params - 1))
    res: TimestepResult = timestep_optimize(
        cost_fn,
        init,
        stage.budget,
        rng,
        stage.angle_halfwidth,
        optimizer=stage.optimizer,
        scale_halfwidth=stage.scale_halfwidth,
        pop_size=stage.pop_size,
    )
    state = _prepare(plan.chi_ansatz, res.params)
    return res.params, state, float(res.cost), res.evals


def _train_u(problem, cost_model, states, plan, carry, rng):
    stage = plan.u_stage
    if stage is None:
        raise ValueError("solution stage configuration missing")

    def cost_fn(pv: ParamVector) -> float:
        cand = _prepare(plan.u_ansatz, pv)
        full = dict(states)
        full[cost_model.opt_key] = cand
        return cost_model.evaluate_direct(full)

    res: TimestepResult = timestep_optimize(
        cost_fn,
        carry.u_params,
        stage.budget,
        rng,
        stage.angle_halfwidth,
        optimizer=stage.optimizer,
        scale_halfwidth=stage.scale_halfwidth,
        pop_size=stage.pop_size,
    )
    return res.params, _prepare(plan.u_ansatz, res.params), float(res.cost), res.evals


def _dense_next(problem, cost_model, states, prev: ScaledState) -> ScaledState:
    """Exact minimizer of the step cost over unconstrained vectors."""
    target = cost_model.target_vector(states).real
    if problem.scheme == "forward_euler":
        return normalize(target)
    npts = cost_model.grid.size
    mat = np.empty((npts, npts))
    basis = np.zeros(npts, dtype=np.complex128)
    for j in range(npts):
        basis[j] = 1.0
        mat[:, j] = cost_model.apply_m(basis, states).real
        basis[j] = 0.0
    return normalize(np.linalg.solve(mat, target))


def step(plan: EvolutionPlan, carry: EvolutionState, index: int, rng) -> tuple:
    """One timestep: auxiliary stage(s), then the solution stage."""
    problem = plan.problem
    t_new = start_time(problem) + index * problem.tau
    began = time.perf_counter()
    prev = carry.state
    try:
        chi_params = carry.chi_params
        chi_state = None
        chi_cost = chi_evals = None
        if needs_chi(problem):
            if plan.u_ansatz is None:
                chi_state = normalize(_chi_target(problem, prev))
            else:
                chi_params, chi_state, chi_cost, chi_evals = _train_chi(
                    problem, prev, plan, carry, rng
                )
        cost_model = _step_cost_model(problem, t_new)
        states = {"u_prev": prev}
        if chi_state is not None:
            states["chi"] = chi_state
        if plan.u_ansatz is None:
            nxt = _dense_next(problem, cost_model, states, prev)
            states[cost_model.opt_key] = nxt
            record = StepRecord(
                index,
                t_new,
                u_cost=float(cost_model.evaluate_direct(states)),
                u_evals=0,
                chi_cost=chi_cost,
                chi_evals=chi_evals,
            )
            out = EvolutionState(nxt, None, chi_params)
        else:
            u_params, nxt, u_cost, u_evals = _train_u(
                problem, cost_model, states, plan, carry, rng
            )
            record = StepRecord(
                index,
                t_new,
                u_cost=u_cost,
                u_evals=u_evals,
                chi_cost=chi_cost,
                chi_evals=chi_evals,
                u_params=u_params,
                chi_params=chi_params,
            )
            out = EvolutionState(nxt, u_params, chi_params)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        raise EvolveError(str(exc), index) from exc
    record.wall_time = time.perf_counter() - began
    return out, record


def run(plan: EvolutionPlan) -> RunRecord:
    """Read in, iterate steps, read out, report errors.

    The per-step error column compares the read-out state after each step
    against the matching row of the configured classical reference; the
    read-in error always compares against the exact initial samples, so a
    zero-step run reports the pure representation error twice.
    """
    problem = plan.problem
    rng = np.random.default_rng(plan.seed)
    init = plan.initial if plan.initial is not None else initial_samples(problem)
    init = np.asarray(init, dtype=float)
    mask = _mask(problem)
    reference = classical_reference(plan)

    def masked(state: ScaledState) -> np.ndarray:
        vec = state.vector().real
        return vec if mask is None else vec[mask]

    if plan.u_ansatz is None:
        carry = EvolutionState(normalize(init))
    else:
        u_params = plan.u_ansatz.read_in(init)
        carry = EvolutionState(plan.u_ansatz.prepare(u_params), u_params)
    read_in_error = relative_error(masked(carry.state),
                                   init if mask is None else init[mask])

    record = RunRecord(read_in_error=read_in_error, reference_mode=plan.reference)
    rows = [masked(carry.state)]
    for k in range(1, plan.steps + 1):
        carry, step_rec = step(plan, carry, k, rng)
        rows.append(masked(carry.state))
        step_rec.rel_error = relative_error(rows[-1], reference[k])
        record.steps.append(step_rec)
    record.t_final = start_time(problem) + plan.steps * problem.tau
    record.trajectory = np.array(rows)
    record.reference_trajectory = reference
    record.final_error = relative_error(rows[-1], reference[-1])
    return record
