"""Gate-level circuit construction and exact statevector simulation.

Used to validate the fast vectorized evaluation path at small n: the same
expectation values are produced by explicit Hadamard-test circuits built
from elementary gates, cyclic-shift (adder) blocks, and ancilla-register
diagonal gates.  This module is a verifier; it makes no attempt to
optimize circuits.

Qubit 0 is the most significant bit of the grid index, matching the
ansatz register convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import Diag, OperatorWord, Shift


class CircuitError(ValueError):
    pass


@dataclass
class Gate:
    """One gate: a named primitive or a dense unitary block, acting on
    `targets`, optionally conditioned on every qubit in `controls`."""

    name: str
    targets: tuple
    controls: tuple = ()
    angle: float | None = None
    matrix: np.ndarray | None = None

    def qubits(self):
        return self.targets + self.controls


@dataclass
class Circuit:
    n_qubits: int
    gates: list = field(default_factory=list)
    ancilla: tuple = ()  # qubit indices serving as work space

    def add(self, name, targets, controls=(), angle=None, matrix=None):
        g = Gate(name, tuple(targets), tuple(controls), angle, matrix)
        for q in g.qubits():
            if not 0 <= q < self.n_qubits:
                raise CircuitError(f"qubit {q} out of range")
        if len(set(g.qubits())) != len(g.qubits()):
            raise CircuitError("overlapping targets and controls")
        self.gates.append(g)
        return self

    def extend(self, other: "Circuit", offset: int = 0):
        for g in other.gates:
            self.add(g.name, tuple(q + offset for q in g.targets),
                     tuple(q + offset for q in g.controls), g.angle, g.matrix)
        return self


def _gate_matrix(gate: Gate) -> np.ndarray:
    a = gate.angle
    if gate.name == "h":
        return np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    if gate.name == "x":
        return np.array([[0.0, 1.0], [1.0, 0.0]])
    if gate.name == "ry":
        c, s = np.cos(a / 2), np.sin(a / 2)
        return np.array([[c, -s], [s, c]])
    if gate.name == "rz":
        return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])
    if gate.name == "phase":
        return np.diag([1.0, np.exp(1j * a)])
    if gate.name == "swap":
        m = np.eye(4)
        return m[[0, 2, 1, 3]]
    if gate.name == "u":
        return gate.matrix
    raise CircuitError(f"unknown gate {gate.name!r}")


def apply_circuit(circuit: Circuit, state: np.ndarray | None = None) -> np.ndarray:
    """Exact statevector simulation; returns the final state."""
    n = circuit.n_qubits
    if state is None:
        psi = np.zeros(2**n, dtype=np.complex128)
        psi[0] = 1.0
    else:
        psi = np.asarray(state, dtype=np.complex128).copy()
        if psi.shape != (2**n,):
            raise CircuitError("state length does not match qubit count")
    tensor = psi.reshape((2,) * n) if n > 1 else psi.reshape(2)
    for g in circuit.gates:
        mat = np.asarray(_gate_matrix(g), dtype=np.complex128)
        t = len(g.targets)
        if mat.shape != (2**t, 2**t):
            raise CircuitError("block size does not match target count")
        view = tensor
        # restrict to the all-ones slice of the control qubits
        idx = [slice(None)] * n
        for c in g.controls:
            idx[c] = 1
        sub = view[tuple(idx)]
        # move target axes to the front of the remaining ones
        remaining = [q for q in range(n) if q not in g.controls]
        pos = [remaining.index(q) for q in g.targets]
        sub_t = np.moveaxis(sub, pos, range(t))
        shape = sub_t.shape
        flat = sub_t.reshape(2**t, -1)
        out = mat @ flat
        np.copyto(sub_t, out.reshape(shape))
    return tensor.reshape(-1)


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    n = circuit.n_qubits
    dim = 2**n
    cols = np.empty((dim, dim), dtype=np.complex128)
    basis = np.zeros(dim, dtype=np.complex128)
    for k in range(dim):
        basis[k] = 1.0
        cols[:, k] = apply_circuit(circuit, basis)
        basis[k] = 0.0
    return cols


# ---------------------------------------------------------------------------
# library blocks


def qft_gates(circuit: Circuit, qubits, inverse=False):
    """Textbook QFT on the given qubits (big-endian): H and controlled
    phases, then the reversing swaps."""
    qs = list(qubits)
    w = len(qs)
    seq = []
    for i in range(w):
        seq.append(("h", (qs[i],), (), None))
        for j in range(i + 1, w):
            seq.append(("phase", (qs[i],), (qs[j],), np.pi / 2 ** (j - i)))
    for i in range(w // 2):
        seq.append(("swap", (qs[i], qs[w - 1 - i]), (), None))
    if inverse:
        seq = [(nm, tg, ct, None if an is None else -an) for nm, tg, ct, an in reversed(seq)]
    for nm, tg, ct, an in seq:
        circuit.add(nm, tg, ct, an)
    return circuit


def build_adder_circuit(width: int, variant: str = "qft_phase",
                        power: int = 1, ancilla: int | None = None) -> Circuit:
    """Cyclic shift |k> -> |k-power mod 2^width|.

    qft_phase: QFT, one phase rotation per qubit, inverse QFT; no ancilla,
    O(width^2) two-qubit gates.  toffoli_ancilla: ripple borrow chain with
    width-2 work qubits and O(width) gates; power is realized by
    repetition.
    """
    if width < 1:
        raise CircuitError("width must be >= 1")
    if variant == "qft_phase":
        circ = Circuit(width)
        qft_gates(circ, range(width))
        for rep in range(abs(power)):
            sign = -1.0 if power > 0 else 1.0
            for q in range(width):
                weight = 2 ** (width - 1 - q)
                circ.add("phase", (q,), angle=sign * 2 * np.pi * weight / 2**width)
        qft_gates(circ, range(width), inverse=True)
        return circ
    if variant != "toffoli_ancilla":
        raise CircuitError(f"unknown adder variant {variant!r}")
    need = max(0, width - 2)
    if ancilla is not None and ancilla < need:
        raise CircuitError(f"adder of width {width} needs {need} ancilla qubits")
    circ = Circuit(width + need, ancilla=tuple(range(width, width + need)))
    for _ in range(abs(power)):
        if width == 1:
            circ.add("x", (0,))
        else:
            _ripple_shift(circ, width, decrement=power > 0)
    return circ


def _ripple_shift(circ: Circuit, width: int, decrement: bool):
    """Increment of the width-qubit register (qubit 0 most significant);
    a decrement is the bit-complemented increment."""
    lsb = width - 1
    if decrement:
        for q in range(width):
            circ.add("x", (q,))
    if width >= 2:
        chain = []  # ancilla holding the AND of the lowest bits
        for i, a in enumerate(circ.ancilla):
            low = lsb - 1 - i
            ctrl = (lsb, low) if i == 0 else (chain[-1], low)
            circ.add("x", (a,), controls=ctrl)
            chain.append(a)
        # unwind: flip each bit only after the ancilla depending on it is
        # uncomputed, so the chain inputs are still pristine
        top_ctrl = chain[-1] if chain else lsb
        circ.add("x", (0,), controls=(top_ctrl,))
        for i in reversed(range(len(chain))):
            a = chain[i]
            low = lsb - 1 - i
            ctrl = (lsb, low) if i == 0 else (chain[i - 1], low)
            circ.add("x", (a,), controls=ctrl)
            below = chain[i - 1] if i > 0 else lsb
            circ.add("x", (low,), controls=(below,))
    circ.add("x", (lsb,))
    if decrement:
        for q in range(width):
            circ.add("x", (q,))


def state_prep_block(psi: np.ndarray) -> np.ndarray:
    """Unitary completion sending |0...0> to the given unit vector."""
    psi = np.asarray(psi, dtype=np.complex128)
    dim = psi.shape[0]
    nrm = np.linalg.norm(psi)
    if abs(nrm - 1.0) > 1e-9:
        raise CircuitError("state must be unit norm")
    e0 = np.zeros(dim, dtype=np.complex128)
    e0[0] = 1.0
    if np.allclose(psi, e0, atol=1e-14):
        return np.eye(dim, dtype=np.complex128)
    phase = psi[0] / abs(psi[0]) if abs(psi[0]) > 1e-14 else 1.0
    v = e0 - psi / phase
    house = np.eye(dim, dtype=np.complex128) - 2.0 * np.outer(v, v.conj()) / np.vdot(v, v).real
    return phase * house


# ---------------------------------------------------------------------------
# Hadamard test


def build_hadamard_test(word: OperatorWord, left_prep: np.ndarray,
                        right_prep: np.ndarray, n: int, diag_preps: dict,
                        part: str = "real") -> Circuit:
    """Interference circuit whose ancilla-0 bias P(0) - P(1) equals the
    real (or imaginary) part of <left| word |right> on unit states.

    left_prep/right_prep are unit statevectors on the n main qubits;
    diag_preps maps each Diagonal factor's state key to its unit vector,
    loaded on a dedicated n-qubit work register and linked to the main
    register by a Toffoli pairing per qubit.
    """
    if part not in ("real", "imag"):
        raise CircuitError(f"unknown part {part!r}")
    diag_count = sum(f.power for f in word.factors if isinstance(f, Diag))
    total = 1 + n + diag_count * n
    circ = Circuit(total, ancilla=tuple(range(1 + n, total)))
    main = tuple(range(1, 1 + n))
    circ.add("h", (0,))
    # branch 0 carries the left state, branch 1 the word applied to right
    circ.add("x", (0,))
    circ.add("u", main, controls=(0,), matrix=state_prep_block(left_prep))
    circ.add("x", (0,))
    circ.add("u", main, controls=(0,), matrix=state_prep_block(right_prep))
    reg = 1 + n
    for f in reversed(word.factors):
        if isinstance(f, Shift):
            if f.axis != "x":
                raise CircuitError("only 1D words are supported here")
            adder = build_adder_circuit(n, "qft_phase", power=f.power)
            for g in adder.gates:
                circ.add(g.name, tuple(main[q] for q in g.targets),
                         (0,) + tuple(main[q] for q in g.controls), g.angle, g.matrix)
        elif isinstance(f, Diag):
            if f.conjugated:
                raise CircuitError("conjugated diagonal factors are not supported")
            psi = diag_preps[f.state_key]
            for _ in range(f.power):
                work = tuple(range(reg, reg + n))
                reg += n
                circ.add("u", work, controls=(0,), matrix=state_prep_block(psi))
                for i in range(n):
                    circ.add("x", (work[i],), controls=(0, main[i]))
        else:
            raise CircuitError(f"unsupported factor {f!r}")
    if part == "imag":
        circ.add("phase", (0,), angle=-np.pi / 2)
    circ.add("h", (0,))
    return circ


def hadamard_test_value(circuit: Circuit) -> float:
    """P(0) - P(1) on the test ancilla (qubit 0)."""
    out = apply_circuit(circuit)
    probs = np.abs(out) ** 2
    half = probs.reshape(2, -1)
    return float(half[0].sum() - half[1].sum())


def simulated_expectation(word: OperatorWord, left: np.ndarray, right: np.ndarray,
                          n: int, diag_preps: dict) -> complex:
    re = hadamard_test_value(build_hadamard_test(word, left, right, n, diag_preps, "real"))
    im = hadamard_test_value(build_hadamard_test(word, left, right, n, diag_preps, "imag"))
    return complex(re, im)


# ---------------------------------------------------------------------------
# shortcut equivalence


def verify_shortcut(plan, steps: int | None = None) -> dict:
    """Every expectation of every per-step cost, computed by the gate-level
    Hadamard test and by the vectorized shortcut; reports the worst
    deviation.  The plan is evolved in dense mode so the evaluation points
    are deterministic."""
    from .core import normalize
    from .evolve import EvolutionState, initial_samples, needs_chi, step as evolve_step

    problem = plan.problem
    n = problem.grid.n
    count = steps if steps is not None else plan.steps
    carry = EvolutionState(normalize(np.asarray(initial_samples(problem), dtype=float)))
    rng = np.random.default_rng(0)
    worst = 0.0
    checked = 0
    for k in range(1, count + 1):
        t_new = getattr(problem, "t0", 0.0) + k * problem.tau
        models = []
        states = {"u_prev": carry.state}
        if needs_chi(problem):
            chi_model = problem.chi_cost()
            states["chi"] = normalize(chi_model.target_vector(states).real)
            models.append((chi_model, dict(states)))
        try:
            cost = problem.step_cost(t_new)
        except TypeError:
            cost = problem.step_cost()
        carry, _ = evolve_step(plan, carry, k, rng)
        states[cost.opt_key] = carry.state
        models.append((cost, states))
        for model, st in models:
            shortcut = model.expectation_values(st)
            registry = {key: s.psi for key, s in st.items()}
            for term, direct in zip(model.terms, shortcut):
                circ_val = simulated_expectation(
                    term.word, st[term.left].psi, st[term.right].psi, n, registry
                )
                worst = max(worst, abs(circ_val - direct))
                checked += 1
    return {"max_deviation": worst, "expectations_checked": checked, "steps": count}


def gate_counts(circuit: Circuit):
    """(qubits, one-qubit gates, multi-qubit gates, greedy depth)."""
    one = two = 0
    frontier = [0] * circuit.n_qubits
    for g in circuit.gates:
        if len(g.qubits()) == 1:
            one += 1
        else:
            two += 1
        level = 1 + max(frontier[q] for q in g.qubits())
        for q in g.qubits():
            frontier[q] = level
    depth = max(frontier) if circuit.gates else 0
    return circuit.n_qubits, one, two, depth


def to_netlist(circuit: Circuit) -> str:
    """One gate per line: name, targets, controls, angle."""
    lines = [f"qubits {circuit.n_qubits}"]
    for g in circuit.gates:
        tg = ",".join(str(q) for q in g.targets)
        ct = ",".join(str(q) for q in g.controls) or "-"
        an = "-" if g.angle is None else f"{g.angle:.12g}"
        lines.append(f"{g.name} {tg} {ct} {an}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# hardware demonstration circuits


def so4_block(circ: Circuit, q0: int, q1: int, lam1: float, lam2: float,
              controls=()):
    circ.add("ry", (q0,), controls, lam1)
    circ.add("ry", (q1,), controls, lam2)
    circ.add("x", (q1,), (q0,) + tuple(controls))
    return circ


def hardware_adder_demo(lam1: float, lam2: float) -> Circuit:
    """Three-qubit Hadamard test of the shift expectation on a two-qubit
    real ansatz state; the controlled shift is a Toffoli and a CNOT."""
    circ = Circuit(3)
    circ.add("h", (0,))
    so4_block(circ, 1, 2, lam1, lam2)
    circ.add("x", (1,), (0, 2))
    circ.add("x", (2,), (0,))
    circ.add("h", (0,))
    return circ


def hardware_adder_demo_state(lam1: float, lam2: float) -> np.ndarray:
    prep = Circuit(2)
    so4_block(prep, 0, 1, lam1, lam2)
    return apply_circuit(prep).real


def hardware_diag_demo(lam: float, theta: float) -> Circuit:
    """Three-qubit Hadamard test of a diagonal-gate expectation between
    one-qubit real states."""
    circ = Circuit(3)
    circ.add("h", (0,))
    circ.add("ry", (1,), (), lam)
    circ.add("ry", (2,), (0,), theta)
    circ.add("x", (2,), (0, 1))
    circ.add("h", (0,))
    return circ
