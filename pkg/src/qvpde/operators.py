"""Cyclic-shift / diagonal operator algebra and finite-difference derivatives.

The primitive operators are

* the shift ("adder") A mapping basis state |k> to |k-1 mod 2**n>, so that on
  amplitude vectors (A psi)_k = psi_{k+1}; signed powers give A**p, negative
  powers the adjoint;
* the diagonal operator D_beta multiplying amplitudes pointwise by another
  state's amplitudes (scale included); D is not unitary and implements
  nonlinear terms.

Words are scalar-weighted ordered products of these primitives and are applied
matrix-free (index rolls and elementwise products, never dense matrices) so
they are cheap inside optimizer loops.  Periodic central differences are

    d/dx   = (2**(n-1)/L) (A - A^dag)
    d2/dx2 = (4**n/L**2) (A + A^dag - 2 I)
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import DimensionError, Grid1D, Grid2D, ScaledState


@dataclass(frozen=True)
class Shift:
    """A**power along one axis; power may be negative (adjoint) or zero."""

    power: int
    axis: str = "x"


@dataclass(frozen=True)
class Diag:
    """D_beta**power, beta referenced by key into a snapshot table.

    The snapshot is frozen when the word is built; ``conjugated`` applies the
    elementwise conjugate of beta (the adjoint of D for complex snapshots).
    """

    state_key: str
    power: int = 1
    conjugated: bool = False

    def __post_init__(self):
        if self.power < 1:
            raise ValueError("diagonal power must be >= 1")


@dataclass(frozen=True)
class OperatorWord:
    """coeff times an ordered product of factors; rightmost factor acts first."""

    coeff: complex
    factors: tuple = ()


@dataclass(frozen=True)
class OperatorSum:
    """Linear combination of words over a shared grid."""

    grid: object
    words: tuple

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        return OperatorSum(self.grid, self.words + other.words)

    def scaled(self, c: complex) -> "OperatorSum":
        return OperatorSum(
            self.grid, tuple(replace(w, coeff=w.coeff * c) for w in self.words)
        )


def _axis_n(grid, axis: str) -> int:
    if isinstance(grid, Grid1D):
        if axis != "x":
            raise DimensionError(f"axis {axis!r} invalid for a 1D grid")
        return grid.n
    return {"x": grid.nx, "y": grid.ny}[axis]


def apply_shift(vec: np.ndarray, power: int, axis: str, grid) -> np.ndarray:
    """(A**p vec)_k = vec_{k+p mod 2**n} along the chosen axis."""
    n = _axis_n(grid, axis)
    p = power % (2**n)
    if p == 0:
        return vec.copy()
    if isinstance(grid, Grid1D):
        return np.roll(vec, -p)
    shaped = vec.reshape(grid.shape)
    rolled = np.roll(shaped, -p, axis=0 if axis == "x" else 1)
    return rolled.reshape(-1)


def apply_diagonal(
    beta: ScaledState, alpha: np.ndarray, power: int = 1, conjugated: bool = False
) -> np.ndarray:
    """Pointwise multiply alpha by (scale*beta_k)**power.

    Note D^dag D != I in general; the diagonal operator is not unitary.
    """
    if beta.dim != alpha.shape[0]:
        raise DimensionError(f"length mismatch: {beta.dim} vs {alpha.shape[0]}")
    if power < 1:
        raise ValueError("diagonal power must be >= 1")
    b = beta.vector()
    if conjugated:
        b = np.conj(b)
    return b**power * alpha


def identity_sum(grid) -> OperatorSum:
    return OperatorSum(grid, (OperatorWord(1.0, ()),))


def d_dx(grid, axis: str = "x") -> OperatorSum:
    """Periodic central difference (f_{k+1} - f_{k-1})/(2h) as a word sum."""
    n = _axis_n(grid, axis)
    L = grid.L if isinstance(grid, Grid1D) else (grid.Lx if axis == "x" else grid.Ly)
    s = 2 ** (n - 1) / L
    return OperatorSum(
        grid,
        (
            OperatorWord(s, (Shift(1, axis),)),
            OperatorWord(-s, (Shift(-1, axis),)),
        ),
    )


def d2_dx2(grid, axis: str = "x") -> OperatorSum:
    """Periodic 3-point stencil (f_{k+1} - 2 f_k + f_{k-1})/h**2."""
    n = _axis_n(grid, axis)
    L = grid.L if isinstance(grid, Grid1D) else (grid.Lx if axis == "x" else grid.Ly)
    q = 4**n / L**2
    return OperatorSum(
        grid,
        (
            OperatorWord(q, (Shift(1, axis),)),
            OperatorWord(q, (Shift(-1, axis),)),
            OperatorWord(-2 * q, ()),
        ),
    )


def d2_dxdy(grid: Grid2D) -> OperatorSum:
    """Mixed derivative: the composition of the two axis-local stencils."""
    if not isinstance(grid, Grid2D):
        raise DimensionError("mixed derivative requires a 2D grid")
    sx = 2 ** (grid.nx - 1) / grid.Lx
    sy = 2 ** (grid.ny - 1) / grid.Ly
    words = []
    for px, cx in ((1, sx), (-1, -sx)):
        for py, cy in ((1, sy), (-1, -sy)):
            words.append(OperatorWord(cx * cy, (Shift(px, "x"), Shift(py, "y"))))
    return OperatorSum(grid, tuple(words))


def apply_word(
    word: OperatorWord, vec: np.ndarray, grid, states: dict | None = None
) -> np.ndarray:
    """Apply one word's factors right-to-left, then the scalar coefficient."""
    out = vec
    for factor in reversed(word.factors):
        if isinstance(factor, Shift):
            out = apply_shift(out, factor.power, factor.axis, grid)
        elif isinstance(factor, Diag):
            if states is None or factor.state_key not in states:
                raise KeyError(f"no snapshot bound for {factor.state_key!r}")
            out = apply_diagonal(
                states[factor.state_key], out, factor.power, factor.conjugated
            )
        else:
            raise TypeError(f"unknown factor {factor!r}")
    if word.coeff != 1.0:
        out = word.coeff * out
    return out if out is not vec else vec.copy()


def apply_sum(
    op: OperatorSum, state: ScaledState, states: dict | None = None
) -> np.ndarray:
    """Sum of words applied to the represented vector scale*psi."""
    vec = state.vector()
    if len(op.words) == 0:
        return np.zeros_like(vec)
    out = np.zeros_like(vec)
    for word in op.words:
        out += apply_word(word, vec, op.grid, states)
    return out


def apply_sum_to_vector(
    op: OperatorSum, vec: np.ndarray, states: dict | None = None
) -> np.ndarray:
    out = np.zeros_like(vec, dtype=np.complex128)
    for word in op.words:
        out += apply_word(word, vec.astype(np.complex128), op.grid, states)
    return out


def expectation(
    word: OperatorWord,
    left: ScaledState,
    right: ScaledState,
    grid,
    states: dict | None = None,
) -> complex:
    """<left| word |right> with both scale factors and the word coefficient."""
    if left.dim != right.dim:
        raise DimensionError(f"length mismatch: {left.dim} vs {right.dim}")
    applied = apply_word(word, right.vector(), grid, states)
    return complex(np.conj(left.scale) * np.vdot(left.psi, applied))


def factor_adjoint(factor):
    if isinstance(factor, Shift):
        return Shift(-factor.power, factor.axis)
    return replace(factor, conjugated=not factor.conjugated)


def word_adjoint(word: OperatorWord) -> OperatorWord:
    """Reverse factor order and adjoint each factor; conjugate the scalar."""
    return OperatorWord(
        np.conj(word.coeff), tuple(factor_adjoint(f) for f in reversed(word.factors))
    )


def word_mul(a: OperatorWord, b: OperatorWord) -> OperatorWord:
    return OperatorWord(a.coeff * b.coeff, a.factors + b.factors)


def _commuting_swap(f1, f2) -> bool:
    # Shifts on distinct axes commute; diagonals always commute with each
    # other.  A shift never commutes with a diagonal.
    if isinstance(f1, Shift) and isinstance(f2, Shift):
        return f1.axis > f2.axis
    if isinstance(f1, Diag) and isinstance(f2, Diag):
        return (f1.state_key, f1.conjugated) > (f2.state_key, f2.conjugated)
    return False


def canonical_word(word: OperatorWord) -> OperatorWord:
    """Sort commuting neighbours, then merge adjacent like factors."""
    factors = list(word.factors)
    changed = True
    while changed:
        changed = False
        for i in range(len(factors) - 1):
            if _commuting_swap(factors[i], factors[i + 1]):
                factors[i], factors[i + 1] = factors[i + 1], factors[i]
                changed = True
        merged = []
        for f in factors:
            if merged:
                g = merged[-1]
                if (
                    isinstance(g, Shift)
                    and isinstance(f, Shift)
                    and g.axis == f.axis
                ):
                    merged[-1] = Shift(g.power + f.power, g.axis)
                    changed = True
                    continue
                if (
                    isinstance(g, Diag)
                    and isinstance(f, Diag)
                    and g.state_key == f.state_key
                    and g.conjugated == f.conjugated
                ):
                    merged[-1] = Diag(g.state_key, g.power + f.power, g.conjugated)
                    changed = True
                    continue
            merged.append(f)
        factors = [
            f for f in merged if not (isinstance(f, Shift) and f.power == 0)
        ]
    return OperatorWord(word.coeff, tuple(factors))


def word_signature(word: OperatorWord) -> tuple:
    """Hashable identity of the factor string (coefficient excluded)."""
    sig = []
    for f in word.factors:
        if isinstance(f, Shift):
            sig.append(("A", f.axis, f.power))
        else:
            sig.append(("D", f.state_key, f.power, f.conjugated))
    return tuple(sig)
