"""Gradient-free optimizers for the per-step costs.

The cost is exactly quadratic in the leading scale parameter, so the scale is
handled by a three-point line search with an exact vertex solve; the rotation
angles are handled by population methods (differential evolution by default,
particle swarm as an alternative).  Budgets count cost evaluations and are
respected exactly, so runs with equal seeds reproduce bit-identical traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ParamVector


@dataclass
class OptResult:
    x: np.ndarray
    cost: float
    evals: int
    trace: np.ndarray = field(default_factory=lambda: np.zeros(0))


def line_search_scale(f, x0: float = 1.0, rel_step: float = 0.5,
                      expand_iters: int = 30):
    """Minimize a scalar function that is quadratic (or nearly so) in its
    argument.  Three probes determine the parabola; positive curvature gives
    the vertex exactly, otherwise march downhill with doubling steps.

    Returns (best_x, best_cost, evaluations used).
    """
    h = rel_step * max(abs(x0), 1.0)
    xs = [x0 - h, x0, x0 + h]
    cs = [float(f(x)) for x in xs]
    evals = 3
    curvature = cs[0] - 2 * cs[1] + cs[2]
    if curvature > 1e-300:
        vertex = x0 + 0.5 * h * (cs[0] - cs[2]) / curvature
        cv = float(f(vertex))
        evals += 1
        xs.append(vertex)
        cs.append(cv)
        j = int(np.argmin(cs))
        return xs[j], cs[j], evals
    # non-convex or flat sample: walk downhill, doubling the step
    j = int(np.argmin(cs))
    x, c = xs[j], cs[j]
    if cs[0] == cs[1] == cs[2]:
        return x0, cs[1], evals
    d = -1.0 if cs[0] < cs[2] else 1.0
    step = h
    for _ in range(expand_iters):
        x2 = x + d * step
        c2 = float(f(x2))
        evals += 1
        if c2 < c:
            x, c = x2, c2
            step *= 2
        else:
            break
    return x, c, evals


def differential_evolution(f, lower, upper, budget: int, rng,
                           x0: np.ndarray | None = None, pop_size: int = 15,
                           F: float = 0.8, CR: float = 0.9) -> OptResult:
    """DE/rand/1/bin with greedy selection and a hard evaluation budget.

    x0, when given, replaces the first population member (warm start).  The
    trace records the best cost seen after every evaluation.
    """
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    dim = lower.shape[0]
    pop = lower + rng.random((pop_size, dim)) * (upper - lower)
    if x0 is not None:
        pop[0] = np.clip(x0, lower, upper)

    costs = np.full(pop_size, np.inf)
    trace = []
    evals = 0
    best_x, best_c = pop[0].copy(), np.inf

    def record(x, c):
        nonlocal best_x, best_c
        if c < best_c:
            best_c, best_x = c, x.copy()
        trace.append(best_c)

    for i in range(pop_size):
        if evals >= budget:
            break
        costs[i] = float(f(pop[i]))
        evals += 1
        record(pop[i], costs[i])

    while evals < budget:
        for i in range(pop_size):
            if evals >= budget:
                break
            choices = [j for j in range(pop_size) if j != i]
            r1, r2, r3 = rng.choice(choices, size=3, replace=False)
            mutant = pop[r1] + F * (pop[r2] - pop[r3])
            mutant = np.clip(mutant, lower, upper)
            cross = rng.random(dim) < CR
            cross[rng.integers(dim)] = True  # forced coordinate
            trial = np.where(cross, mutant, pop[i])
            c = float(f(trial))
            evals += 1
            record(trial, c)
            if c <= costs[i]:
                pop[i] = trial
                costs[i] = c

    return OptResult(best_x, best_c, evals, np.asarray(trace))


def particle_swarm(f, lower, upper, budget: int, rng,
                   x0: np.ndarray | None = None, pop_size: int = 15,
                   inertia: float = 0.729, c_cog: float = 1.49445,
                   c_soc: float = 1.49445) -> OptResult:
    """Global-best particle swarm with clamped positions."""
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    dim = lower.shape[0]
    span = upper - lower
    pos = lower + rng.random((pop_size, dim)) * span
    if x0 is not None:
        pos[0] = np.clip(x0, lower, upper)
    vel = (rng.random((pop_size, dim)) - 0.5) * span * 0.1

    pbest = pos.copy()
    pbest_c = np.full(pop_size, np.inf)
    gbest = pos[0].copy()
    gbest_c = np.inf
    trace = []
    evals = 0

    while evals < budget:
        for i in range(pop_size):
            if evals >= budget:
                break
            c = float(f(pos[i]))
            evals += 1
            if c < pbest_c[i]:
                pbest_c[i] = c
                pbest[i] = pos[i].copy()
            if c < gbest_c:
                gbest_c = c
                gbest = pos[i].copy()
            trace.append(gbest_c)
        r1 = rng.random((pop_size, dim))
        r2 = rng.random((pop_size, dim))
        vel = (
            inertia * vel
            + c_cog * r1 * (pbest - pos)
            + c_soc * r2 * (gbest - pos)
        )
        pos = np.clip(pos + vel, lower, upper)

    return OptResult(gbest, gbest_c, evals, np.asarray(trace))


OPTIMIZERS = {"de": differential_evolution, "pso": particle_swarm}


@dataclass
class TimestepResult:
    params: ParamVector
    cost: float
    evals: int
    trace: np.ndarray


def timestep_optimize(cost, init: ParamVector, budget: int, rng,
                      angle_halfwidth: float, optimizer: str = "de",
                      scale_halfwidth: float | None = None,
                      pop_size: int = 15) -> TimestepResult:
    """One variational step: line-search the scale at the initial angles,
    search angles and scale jointly within local bounds, then re-polish the
    scale at the final angles.

    cost maps a ParamVector to the step cost; budget covers all evaluations.
    """
    x0 = init.scale if init.scale != 0.0 else 1.0
    ls_x, ls_c, ls_evals = line_search_scale(
        lambda s: cost(ParamVector(s, init.angles)), x0=x0
    )

    half = scale_halfwidth
    if half is None:
        half = max(0.3 * abs(ls_x), 1e-3)
    lower = np.concatenate(([ls_x - half], init.angles - angle_halfwidth))
    upper = np.concatenate(([ls_x + half], init.angles + angle_halfwidth))
    flat0 = np.concatenate(([ls_x], init.angles))

    polish_reserve = 8
    search_budget = max(budget - ls_evals - polish_reserve, 0)
    run = OPTIMIZERS[optimizer]
    res = run(
        lambda v: cost(ParamVector.from_flat(v)),
        lower,
        upper,
        search_budget,
        rng,
        x0=flat0,
        pop_size=pop_size,
    )

    if res.evals > 0 and res.cost <= ls_c:
        best = ParamVector.from_flat(res.x)
        best_c = res.cost
    else:
        best = ParamVector(ls_x, init.angles.copy())
        best_c = ls_c

    px, pc, p_evals = line_search_scale(
        lambda s: cost(ParamVector(s, best.angles)), x0=best.scale, rel_step=0.2
    )
    if pc < best_c:
        best = ParamVector(px, best.angles)
        best_c = pc

    return TimestepResult(
        best, best_c, ls_evals + res.evals + p_evals, res.trace
    )
