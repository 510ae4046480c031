import numpy as np
import pytest

from qvpde.core import Grid1D, Grid2D, ScaledState, normalize
from qvpde.operators import (
    Diag,
    OperatorWord,
    Shift,
    apply_diagonal,
    apply_shift,
    apply_sum_to_vector,
    apply_word,
    canonical_word,
    d2_dx2,
    d2_dxdy,
    d_dx,
    expectation,
    word_adjoint,
    word_mul,
    word_signature,
)


def dense_shift(N, p):
    # (A**p f)_k = f_{k+p mod N}
    M = np.zeros((N, N))
    for k in range(N):
        M[k, (k + p) % N] = 1.0
    return M


def dense_word(word, grid, states=None):
    N = grid.size
    M = np.zeros((N, N), dtype=np.complex128)
    for j in range(N):
        e = np.zeros(N, dtype=np.complex128)
        e[j] = 1.0
        M[:, j] = apply_word(word, e, grid, states)
    return M


def test_shift_basis_example():
    g = Grid1D(n=2, L=1.0)
    psi = np.array([1.0, 0, 0, 0])
    out = apply_shift(psi, 1, "x", g)
    np.testing.assert_allclose(out, [0, 0, 0, 1])
    back = apply_shift(out, -1, "x", g)
    np.testing.assert_allclose(back, psi)


def test_shift_uniform_invariant():
    g = Grid1D(n=3, L=1.0)
    u = np.full(8, 1 / np.sqrt(8))
    for p in (-3, -1, 1, 2, 8):
        np.testing.assert_allclose(apply_shift(u, p, "x", g), u)


def test_shift_matches_dense():
    rng = np.random.default_rng(3)
    g = Grid1D(n=4, L=2.0)
    f = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    for p in range(-16, 17):
        np.testing.assert_allclose(
            apply_shift(f, p, "x", g), dense_shift(16, p) @ f
        )


def test_shift_power_wraps():
    g = Grid1D(n=3, L=1.0)
    f = np.arange(8.0)
    np.testing.assert_allclose(apply_shift(f, 8, "x", g), f)
    np.testing.assert_allclose(apply_shift(f, 11, "x", g), apply_shift(f, 3, "x", g))


def test_shift_2d_axes_commute():
    rng = np.random.default_rng(5)
    g = Grid2D(nx=3, ny=2, Lx=1.0, Ly=1.0)
    f = rng.standard_normal(g.size)
    xy = apply_shift(apply_shift(f, 1, "x", g), 2, "y", g)
    yx = apply_shift(apply_shift(f, 2, "y", g), 1, "x", g)
    np.testing.assert_allclose(xy, yx)
    # x shift moves whole rows of the flattened layout
    shaped = f.reshape(8, 4)
    np.testing.assert_allclose(
        apply_shift(f, 1, "x", g).reshape(8, 4), np.roll(shaped, -1, axis=0)
    )


def test_diagonal_apply():
    beta = normalize(np.array([1.0, 2.0, 3.0, 4.0]))
    alpha = np.array([1.0, 1.0, 1.0, 1.0], dtype=np.complex128)
    np.testing.assert_allclose(
        apply_diagonal(beta, alpha), [1.0, 2.0, 3.0, 4.0]
    )
    np.testing.assert_allclose(
        apply_diagonal(beta, alpha, power=2), [1.0, 4.0, 9.0, 16.0]
    )


def test_diagonal_not_unitary():
    beta = normalize(np.array([1.0, 0.5, 0.25, 0.0]))
    alpha = np.ones(4, dtype=np.complex128)
    twice = apply_diagonal(beta, apply_diagonal(beta, alpha, conjugated=True))
    assert not np.allclose(twice, alpha)


def test_diagonal_conjugate():
    v = np.array([1 + 1j, 1 - 2j, 0.5j, 1.0])
    beta = normalize(v)
    alpha = np.ones(4, dtype=np.complex128)
    np.testing.assert_allclose(
        apply_diagonal(beta, alpha, conjugated=True), np.conj(beta.vector())
    )


def test_d_dx_stencil_oracle():
    rng = np.random.default_rng(11)
    g = Grid1D(n=5, L=3.0)
    N, h = g.size, g.h
    f = rng.standard_normal(N)
    out = apply_sum_to_vector(d_dx(g), f)
    expect = np.array([(f[(k + 1) % N] - f[(k - 1) % N]) / (2 * h) for k in range(N)])
    np.testing.assert_allclose(out, expect)


def test_d2_dx2_stencil_oracle():
    rng = np.random.default_rng(12)
    g = Grid1D(n=5, L=3.0)
    N, h = g.size, g.h
    f = rng.standard_normal(N)
    out = apply_sum_to_vector(d2_dx2(g), f)
    expect = np.array(
        [(f[(k + 1) % N] - 2 * f[k] + f[(k - 1) % N]) / h**2 for k in range(N)]
    )
    np.testing.assert_allclose(out, expect)


def test_derivatives_accurate_on_smooth_function():
    g = Grid1D(n=9, L=2 * np.pi)
    x = g.points()
    f = np.sin(x)
    d1 = apply_sum_to_vector(d_dx(g), f).real
    d2 = apply_sum_to_vector(d2_dx2(g), f).real
    assert np.max(np.abs(d1 - np.cos(x))) < 1e-4
    assert np.max(np.abs(d2 + np.sin(x))) < 1e-3


def test_d2_dxdy_matches_composition():
    rng = np.random.default_rng(13)
    g = Grid2D(nx=3, ny=3, Lx=2.0, Ly=5.0)
    f = rng.standard_normal(g.size)
    mixed = apply_sum_to_vector(d2_dxdy(g), f)
    composed = apply_sum_to_vector(
        d_dx(g, "x"), apply_sum_to_vector(d_dx(g, "y"), f)
    )
    np.testing.assert_allclose(mixed, composed)


def test_d2_dxdy_kronecker_oracle():
    rng = np.random.default_rng(14)
    g = Grid2D(nx=2, ny=3, Lx=1.5, Ly=2.5)
    sx = 2 ** (g.nx - 1) / g.Lx
    sy = 2 ** (g.ny - 1) / g.Ly
    Dx = sx * (dense_shift(4, 1) - dense_shift(4, -1))
    Dy = sy * (dense_shift(8, 1) - dense_shift(8, -1))
    M = np.kron(Dx, Dy)  # x block is more significant in the flattened index
    f = rng.standard_normal(g.size)
    np.testing.assert_allclose(apply_sum_to_vector(d2_dxdy(g), f), M @ f)


def test_word_apply_order():
    # factors act right to left: (A D) f shifts after the pointwise product
    g = Grid1D(n=2, L=1.0)
    beta = normalize(np.array([1.0, 2.0, 3.0, 4.0]))
    states = {"b": beta}
    f = np.array([1.0, 0.0, 0.0, 0.0], dtype=np.complex128)
    w_ad = OperatorWord(1.0, (Shift(1), Diag("b")))
    w_da = OperatorWord(1.0, (Diag("b"), Shift(1)))
    np.testing.assert_allclose(
        apply_word(w_ad, f, g, states), apply_shift(beta.vector() * f, 1, "x", g)
    )
    np.testing.assert_allclose(
        apply_word(w_da, f, g, states),
        beta.vector() * apply_shift(f, 1, "x", g),
    )
    assert not np.allclose(
        apply_word(w_ad, f, g, states), apply_word(w_da, f, g, states)
    )


def test_word_adjoint_dense_check():
    rng = np.random.default_rng(21)
    g = Grid1D(n=3, L=1.0)
    beta = normalize(rng.standard_normal(8) + 1j * rng.standard_normal(8))
    states = {"b": beta}
    for _ in range(10):
        nf = rng.integers(1, 4)
        factors = []
        for _ in range(nf):
            if rng.random() < 0.5:
                factors.append(Shift(int(rng.integers(-2, 3))))
            else:
                factors.append(Diag("b", int(rng.integers(1, 3)), bool(rng.integers(2))))
        w = OperatorWord(complex(rng.standard_normal(), rng.standard_normal()), tuple(factors))
        M = dense_word(w, g, states)
        Madj = dense_word(word_adjoint(w), g, states)
        np.testing.assert_allclose(Madj, M.conj().T, atol=1e-12)


def test_word_mul_dense_check():
    rng = np.random.default_rng(22)
    g = Grid1D(n=3, L=1.0)
    beta = normalize(rng.standard_normal(8))
    states = {"b": beta}
    a = OperatorWord(2.0, (Shift(1), Diag("b")))
    b = OperatorWord(0.5j, (Shift(-2),))
    Mab = dense_word(word_mul(a, b), g, states)
    np.testing.assert_allclose(
        Mab, dense_word(a, g, states) @ dense_word(b, g, states), atol=1e-12
    )


def test_canonical_word_merges_shifts():
    w = OperatorWord(1.0, (Shift(1), Shift(1)))
    assert canonical_word(w).factors == (Shift(2),)
    w = OperatorWord(1.0, (Shift(1), Shift(-1)))
    assert canonical_word(w).factors == ()
    w = OperatorWord(1.0, (Shift(2, "y"), Shift(1, "x")))
    assert canonical_word(w).factors == (Shift(1, "x"), Shift(2, "y"))


def test_canonical_word_merges_diagonals():
    w = OperatorWord(1.0, (Diag("b"), Diag("b")))
    assert canonical_word(w).factors == (Diag("b", 2),)
    w = OperatorWord(1.0, (Diag("c"), Diag("b")))
    assert canonical_word(w).factors == (Diag("b"), Diag("c"))
    # conjugated and plain copies of the same snapshot stay separate
    w = OperatorWord(1.0, (Diag("b", 1, True), Diag("b")))
    assert len(canonical_word(w).factors) == 2


def test_canonical_word_keeps_shift_diag_order():
    w = OperatorWord(1.0, (Shift(1), Diag("b")))
    assert canonical_word(w).factors == (Shift(1), Diag("b"))
    w = OperatorWord(1.0, (Diag("b"), Shift(1)))
    assert canonical_word(w).factors == (Diag("b"), Shift(1))


def test_canonical_word_numeric_equivalence():
    rng = np.random.default_rng(23)
    g = Grid1D(n=3, L=1.0)
    states = {
        "b": normalize(rng.standard_normal(8) + 1j * rng.standard_normal(8)),
        "c": normalize(rng.standard_normal(8)),
    }
    pool = [
        Shift(1),
        Shift(-1),
        Shift(2),
        Diag("b"),
        Diag("b", 1, True),
        Diag("c"),
    ]
    for _ in range(30):
        factors = tuple(pool[i] for i in rng.integers(0, len(pool), size=4))
        w = OperatorWord(1.0, factors)
        cw = canonical_word(w)
        np.testing.assert_allclose(
            dense_word(w, g, states), dense_word(cw, g, states), atol=1e-12
        )


def test_word_signature_distinguishes_conjugation():
    assert word_signature(OperatorWord(1.0, (Diag("b"),))) != word_signature(
        OperatorWord(1.0, (Diag("b", 1, True),))
    )
    assert word_signature(OperatorWord(2.0, (Shift(1),))) == word_signature(
        OperatorWord(-1.0, (Shift(1),))
    )


def test_expectation_against_dense():
    rng = np.random.default_rng(31)
    g = Grid1D(n=3, L=2.0)
    beta = normalize(rng.standard_normal(8))
    states = {"b": beta}
    for _ in range(10):
        lv = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        rv = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        left, right = normalize(lv), normalize(rv)
        w = OperatorWord(1.5 - 0.5j, (Shift(1), Diag("b"), Shift(-1)))
        val = expectation(w, left, right, g, states)
        assert np.isclose(val, np.vdot(lv, dense_word(w, g, states) @ rv))


def test_expectation_adjoint_symmetry():
    # Re<l|W|r> = Re<r|W^dag|l> underpins the merging of expansion terms
    rng = np.random.default_rng(32)
    g = Grid1D(n=3, L=1.0)
    states = {"b": normalize(rng.standard_normal(8) + 1j * rng.standard_normal(8))}
    w = OperatorWord(1.0, (Shift(1), Diag("b", 2), Shift(1)))
    for _ in range(10):
        left = normalize(rng.standard_normal(8) + 1j * rng.standard_normal(8))
        right = normalize(rng.standard_normal(8) + 1j * rng.standard_normal(8))
        a = expectation(w, left, right, g, states)
        b = expectation(word_adjoint(w), right, left, g, states)
        assert np.isclose(a, np.conj(b))


def test_shift_norm_preserving_diag_not():
    rng = np.random.default_rng(33)
    g = Grid1D(n=4, L=1.0)
    f = rng.standard_normal(16) + 1j * rng.standard_normal(16)
    assert np.isclose(
        np.linalg.norm(apply_shift(f, 3, "x", g)), np.linalg.norm(f)
    )
    beta = normalize(np.abs(rng.standard_normal(16)) + 0.1)
    g2 = apply_diagonal(beta, f)
    assert np.linalg.norm(g2) < beta.scale * np.max(np.abs(beta.psi)) * np.linalg.norm(f) + 1e-9
