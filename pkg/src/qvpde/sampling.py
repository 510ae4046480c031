"""Shot-noise simulation of Hadamard-test measurements.

Estimates are drawn analytically from the binomial law of the test: the
ancilla measures 1 with probability (1+v)/2 where v is the normalized
circuit value, so an M-shot estimate is 2k/M - 1 with k ~ B(M, (1+v)/2).
No circuits are simulated here; prefactors and state scales are applied
after sampling, which is exactly why large finite-difference coefficients
amplify shot noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ScaledState


class MitigationError(RuntimeError):
    pass


def hadamard_estimate(true_value, shots, rng):
    """M-shot estimate of a normalized expectation value in [-1, 1].

    Accepts a scalar or an array of values (one independent draw each).
    shots=inf substitutes the exact value.  Unbiased with standard error
    sqrt((1 - v**2)/M).
    """
    v = np.asarray(true_value, dtype=float)
    if np.any(np.abs(v) > 1.0 + 1e-9):
        raise ValueError("normalized expectation must lie in [-1, 1]")
    v = np.clip(v, -1.0, 1.0)
    if np.isinf(shots):
        return float(v) if v.ndim == 0 else v
    m = int(shots)
    if m < 1:
        raise ValueError("shot count must be >= 1")
    k = rng.binomial(m, (1.0 + v) / 2.0)
    out = 2.0 * np.asarray(k, dtype=float) / m - 1.0
    return float(out) if v.ndim == 0 else out


@dataclass(frozen=True)
class ShotEstimator:
    """Shot budget plus an optional multiplicative damping of every
    circuit's signal (the single-number noise model used for mitigation
    studies)."""

    shots: float
    seed: int | None = None
    noise: float | None = None

    def __post_init__(self):
        if not np.isinf(self.shots) and int(self.shots) < 1:
            raise ValueError("shot count must be >= 1")

    def stream(self):
        return np.random.default_rng(self.seed)

    def _damp(self, v):
        return v if self.noise is None else self.noise * v

    def estimate(self, true_value, rng):
        """Real-part Hadamard test under the configured noise."""
        return hadamard_estimate(self._damp(true_value), self.shots, rng)

    def estimate_complex(self, true_value: complex, rng) -> complex:
        """Real and imaginary parts from independent tests (the imaginary
        part uses the phase-rotated ancilla variant); one shot budget each."""
        z = complex(true_value)
        re = hadamard_estimate(self._damp(z.real), self.shots, rng)
        im = hadamard_estimate(self._damp(z.imag), self.shots, rng)
        return complex(re, im)


def estimate_cost_sampled(cost_model, states, shots, rng, noise=None):
    """Cost with every measured expectation replaced by an M-shot estimate.

    Norm terms <psi|psi> are identities, not circuits, and stay exact; so
    does the frozen target-norm block of explicit-scheme costs.  Sampling
    happens on normalized circuit values; bucket prefactors and state
    scales multiply afterward.  shots=inf reproduces the expanded analytic
    cost exactly.
    """
    damp = 1.0 if noise is None else noise
    values = cost_model.expectation_values(states)
    sampled = []
    for term, z in zip(cost_model.terms, values):
        if term.trivial:
            sampled.append(z)
            continue
        re = hadamard_estimate(damp * z.real, shots, rng)
        im = 0.0
        if abs(term.gamma.imag) > 1e-12:
            im = hadamard_estimate(damp * z.imag, shots, rng)
        sampled.append(complex(re, im))
    return cost_model.evaluate_terms(states, sampled)


def perturbed_cost_states(problem, seed=0) -> dict:
    """Unit-scale evaluation point for noise studies: the previous state is
    the problem's initial profile, the optimized state is pushed a fixed
    10% off it along a seeded orthogonal direction so the cost is nonzero
    but comparable across register sizes."""
    f0 = np.asarray(problem.default_initial(), dtype=float)
    psi0 = f0 / np.linalg.norm(f0)
    rng = np.random.default_rng([seed, problem.grid.n])
    g = rng.standard_normal(psi0.shape[0])
    g -= np.dot(psi0, g) * psi0
    g /= np.linalg.norm(g)
    psi = psi0 + 0.1 * g
    psi /= np.linalg.norm(psi)
    return {
        "u": ScaledState(1.0, psi),
        "u_prev": ScaledState(1.0, psi0),
    }


def scaling_experiment(problem_factory, ns, shots_list, trials, seed=0):
    """Fractional cost-estimation error across register sizes and shot
    budgets; returns one row per (n, shots, trial).

    Each trial is an independent stream derived from the experiment seed
    and the cell indices, so rows can be generated in any order or in
    parallel without changing the table.
    """
    rows = []
    for n in ns:
        problem = problem_factory(n)
        cost = problem.step_cost()
        states = perturbed_cost_states(problem, seed)
        exact = cost.evaluate_expanded(states)
        for si, shots in enumerate(shots_list):
            for trial in range(trials):
                rng = np.random.default_rng([seed, n, si, trial])
                est = estimate_cost_sampled(cost, states, shots, rng)
                rows.append(
                    {
                        "n": n,
                        "shots": shots,
                        "trial": trial,
                        "estimate": est,
                        "exact": exact,
                        "fractional_error": abs(est - exact) / abs(exact),
                    }
                )
    return rows


def summarize_scaling(rows):
    """Per-n line fit of log(mean fractional error) against log(shots).

    The reported intercept is the fitted line's value at the centroid of
    the log-shot grid (the log geometric-mean error), not the
    extrapolation to one shot; differences of it across n measure the
    error growth at fixed shot budget without the huge variance the
    out-of-range extrapolation would add."""
    by_n: dict[int, dict[float, list]] = {}
    for r in rows:
        by_n.setdefault(r["n"], {}).setdefault(r["shots"], []).append(
            r["fractional_error"]
        )
    out = {}
    for n, cells in sorted(by_n.items()):
        shots = np.array(sorted(cells))
        mean_err = np.array([np.mean(cells[s]) for s in shots])
        x = np.log(shots)
        slope, _ = np.polyfit(x, np.log(mean_err), 1)
        out[n] = {
            "slope": slope,
            "intercept": float(np.mean(np.log(mean_err))),
            "mean_error": dict(zip(shots, mean_err)),
        }
    return out


def damping_mitigated_estimate(estimator: ShotEstimator, target_value,
                               calibration_value, rng):
    """Divide out the damping factor measured on a calibration circuit
    whose true value is known and shares the noise channel.

    Draw order is calibration first, then target.  A calibration estimate
    statistically indistinguishable from zero means the channel destroyed
    the signal and no factor can be extracted.
    """
    if calibration_value == 0:
        raise MitigationError("calibration value must be nonzero")
    cal = estimator.estimate(calibration_value, rng)
    floor = 0.0 if np.isinf(estimator.shots) else 3.0 / np.sqrt(estimator.shots)
    if abs(cal) <= floor:
        raise MitigationError("calibration estimate vanished; damping factor undefined")
    damping = cal / calibration_value
    target = estimator.estimate(target_value, rng)
    return target / damping
