import numpy as np
import pytest

from qvpde.ansatz import (
    BrickworkAnsatz,
    FourierAnsatz,
    cascade_angles,
    cascade_state,
    layer_pairs,
)
from qvpde.core import Grid1D, Grid2D, ParamVector


def random_unit(rng, dim):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# cascade encoding


def rotation_cascade_oracle(y, z, alpha, m):
    """Dense uniformly-controlled-rotation network, built independently."""

    def ry(t):
        c, s = np.cos(t / 2), np.sin(t / 2)
        return np.array([[c, -s], [s, c]], dtype=np.complex128)

    def rz(t):
        return np.diag([np.exp(-1j * t / 2), np.exp(1j * t / 2)])

    state = np.zeros(2**m, dtype=np.complex128)
    state[0] = 1.0
    for t in range(m):
        for gate in (ry, rz):
            angles = (y if gate is ry else z)[2**t - 1 : 2 ** (t + 1) - 1]
            blocks = [
                np.kron(gate(a), np.eye(2 ** (m - t - 1))) for a in angles
            ]
            size = blocks[0].shape[0]
            M = np.zeros((2**m, 2**m), dtype=np.complex128)
            for j, B in enumerate(blocks):
                M[j * size : (j + 1) * size, j * size : (j + 1) * size] = B
            state = M @ state
    return np.exp(1j * alpha) * state


def test_cascade_matches_dense_rotation_network():
    rng = np.random.default_rng(41)
    for m in (1, 2, 3):
        y = rng.uniform(-np.pi, np.pi, 2**m - 1)
        z = rng.uniform(-np.pi, np.pi, 2**m - 1)
        alpha = rng.uniform(-np.pi, np.pi)
        np.testing.assert_allclose(
            cascade_state(y, z, alpha),
            rotation_cascade_oracle(y, z, alpha, m),
            atol=1e-12,
        )


def test_cascade_roundtrip():
    rng = np.random.default_rng(42)
    for m in (1, 2, 3, 4, 5):
        for _ in range(5):
            v = random_unit(rng, 2**m)
            y, z, alpha = cascade_angles(v)
            np.testing.assert_allclose(cascade_state(y, z, alpha), v, atol=1e-10)


def test_cascade_roundtrip_with_zeros():
    v = np.zeros(8, dtype=np.complex128)
    v[3] = 1j
    y, z, alpha = cascade_angles(v)
    np.testing.assert_allclose(cascade_state(y, z, alpha), v, atol=1e-12)


def test_cascade_conjugation():
    # negating the phase angles conjugates the encoded vector
    rng = np.random.default_rng(43)
    v = random_unit(rng, 8)
    y, z, alpha = cascade_angles(v)
    np.testing.assert_allclose(cascade_state(y, -z, -alpha), np.conj(v), atol=1e-12)


# ---------------------------------------------------------------------------
# Fourier ansatz


def test_param_counts_pinned():
    a = FourierAnsatz(Grid1D(n=8, L=1.0), m=6, kind="real")
    assert a.n_params == 129
    b = FourierAnsatz(Grid2D(nx=6, ny=6, Lx=1.0, Ly=1.0), kind="complex2d", mx=3, my=3)
    assert b.n_params == 513
    c = FourierAnsatz(Grid1D(n=6, L=1.0), m=3, kind="complex")
    assert c.n_params == 2**5 + 1


def test_mode_budget_enforced():
    with pytest.raises(ValueError):
        FourierAnsatz(Grid1D(n=4, L=1.0), m=3, kind="real")
    FourierAnsatz(Grid1D(n=5, L=1.0), m=3, kind="real")


def test_real_kind_cosine_frozen():
    g = Grid1D(n=4, L=2 * np.pi)
    a = FourierAnsatz(g, m=2, kind="real")
    f = np.cos(g.points())
    params = a.read_in(f)
    st = a.prepare(params)
    assert np.isclose(st.scale, np.sqrt(8.0))  # ||cos samples|| = sqrt(N/2)
    np.testing.assert_allclose(st.vector().real, f, atol=1e-12)
    np.testing.assert_allclose(st.vector().imag, 0.0, atol=1e-12)


def test_real_kind_constant():
    g = Grid1D(n=5, L=1.0)
    a = FourierAnsatz(g, m=2, kind="real")
    params = a.read_in(np.ones(32))
    st = a.prepare(params)
    np.testing.assert_allclose(st.vector().real, 1.0, atol=1e-12)


def test_real_kind_output_always_real():
    rng = np.random.default_rng(44)
    g = Grid1D(n=6, L=3.0)
    a = FourierAnsatz(g, m=4, kind="real")
    for _ in range(10):
        params = ParamVector(1.0, rng.uniform(-np.pi, np.pi, a.n_angles))
        st = a.prepare(params)
        assert np.max(np.abs(st.psi.imag)) < 1e-12


def test_read_in_matches_truncation_oracle():
    rng = np.random.default_rng(45)
    g = Grid1D(n=6, L=2 * np.pi, x0=-np.pi)
    a = FourierAnsatz(g, m=4, kind="real")
    x = g.points()
    f = np.exp(-(x**2)) + 0.3 * np.sin(2 * x) + rng.standard_normal(64) * 0.01
    params = a.read_in(f)
    st = a.prepare(params)
    # independent truncation: mask the spectrum, keep modes |k| < 16
    spec = np.fft.fft(f)
    mask = np.zeros(64)
    mask[0] = 1
    for k in range(1, 16):
        mask[k] = 1
        mask[64 - k] = 1
    expect = np.fft.ifft(spec * mask)
    np.testing.assert_allclose(st.vector(), expect, atol=1e-10)


def test_read_in_exact_on_bandlimited():
    rng = np.random.default_rng(46)
    g = Grid1D(n=6, L=5.0)
    a = FourierAnsatz(g, m=3, kind="real")
    x = g.points()
    f = np.zeros(64)
    for k in range(8):
        f += rng.standard_normal() * np.cos(2 * np.pi * k * x / 5.0)
        if k:
            f += rng.standard_normal() * np.sin(2 * np.pi * k * x / 5.0)
    st = a.prepare(a.read_in(f))
    np.testing.assert_allclose(st.vector().real, f, atol=1e-9)


def test_complex_kind_roundtrip():
    rng = np.random.default_rng(47)
    g = Grid1D(n=6, L=1.0)
    a = FourierAnsatz(g, m=3, kind="complex")
    x = np.arange(64) / 64
    f = np.zeros(64, dtype=np.complex128)
    for k in list(range(8)) + list(range(-8, 0)):
        f += (rng.standard_normal() + 1j * rng.standard_normal()) * np.exp(
            2j * np.pi * k * x
        )
    st = a.prepare(a.read_in(f))
    np.testing.assert_allclose(st.vector(), f, atol=1e-9)


def test_complex2d_roundtrip_and_truncation():
    rng = np.random.default_rng(48)
    g = Grid2D(nx=4, ny=4, Lx=1.0, Ly=1.0)
    a = FourierAnsatz(g, kind="complex2d", mx=1, my=1)
    f = rng.standard_normal(g.size)
    st = a.prepare(a.read_in(f))
    spec = np.fft.fft2(f.reshape(16, 16))
    mask = np.zeros((16, 16))
    for kx in (0, 1, -2 % 16, -1 % 16):
        for ky in (0, 1, -2 % 16, -1 % 16):
            mask[kx, ky] = 1
    expect = np.fft.ifft2(spec * mask).reshape(-1)
    np.testing.assert_allclose(st.vector(), expect, atol=1e-10)


def test_coefficients_approx_grid_independent():
    # same target read in on two grid resolutions: coefficients agree up to
    # the aliasing error of the coarser sampling
    f = lambda x: np.exp(-((x - 1.0) ** 2))
    cs = []
    for n in (6, 9):
        g = Grid1D(n=n, L=4.0, x0=-1.0)
        a = FourierAnsatz(g, m=3, kind="real")
        x = g.points()
        p = a.read_in(f(x))
        # normalize away the sample-count factor in the scale
        cs.append(a.coefficients(p) / np.sqrt(g.size))
    np.testing.assert_allclose(cs[0], cs[1], atol=5e-3)


def test_zero_samples_read_in():
    g = Grid1D(n=5, L=1.0)
    a = FourierAnsatz(g, m=2, kind="real")
    p = a.read_in(np.zeros(32))
    assert p.scale == 0.0
    st = a.prepare(p)
    np.testing.assert_allclose(st.vector(), 0.0)


# ---------------------------------------------------------------------------
# brickwork ansatz


def test_brickwork_param_count_pinned():
    assert BrickworkAnsatz(n=8, depth=6).n_params == 253


def test_layer_pairs_cover():
    assert layer_pairs(5) == [(0, 1), (2, 3), (1, 2), (3, 4)]
    for n in range(2, 9):
        assert len(layer_pairs(n)) == n - 1


def test_brickwork_zero_angles_identity():
    a = BrickworkAnsatz(n=4, depth=3)
    st = a.prepare(ParamVector(2.0, np.zeros(a.n_angles)))
    expect = np.zeros(16)
    expect[0] = 2.0
    np.testing.assert_allclose(st.vector(), expect)


def test_brickwork_unit_and_real():
    rng = np.random.default_rng(51)
    a = BrickworkAnsatz(n=5, depth=2)
    for _ in range(5):
        p = ParamVector(1.0, rng.uniform(-np.pi, np.pi, a.n_angles))
        st = a.prepare(p)
        assert np.isclose(np.linalg.norm(st.psi), 1.0)
        assert np.max(np.abs(st.psi.imag)) < 1e-12


def so4_block(th):
    def ry(t):
        c, s = np.cos(t / 2), np.sin(t / 2)
        return np.array([[c, -s], [s, c]])

    cx = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    B = np.kron(ry(th[0]), ry(th[1]))
    B = cx @ B
    B = np.kron(ry(th[2]), ry(th[3])) @ B
    B = cx @ B
    B = np.kron(ry(th[4]), ry(th[5])) @ B
    return B


def test_brickwork_single_block_dense():
    rng = np.random.default_rng(52)
    th = rng.uniform(-np.pi, np.pi, 6)
    a = BrickworkAnsatz(n=2, depth=1)
    st = a.prepare(ParamVector(1.0, th))
    e0 = np.zeros(4)
    e0[0] = 1.0
    np.testing.assert_allclose(st.psi, so4_block(th) @ e0, atol=1e-12)


def test_brickwork_layer_dense_three_qubits():
    rng = np.random.default_rng(53)
    th = rng.uniform(-np.pi, np.pi, 12)
    a = BrickworkAnsatz(n=3, depth=1)
    st = a.prepare(ParamVector(1.0, th))
    U_a = np.kron(so4_block(th[:6]), np.eye(2))  # pair (0,1) first
    U_b = np.kron(np.eye(2), so4_block(th[6:]))  # then pair (1,2)
    e0 = np.zeros(8)
    e0[0] = 1.0
    np.testing.assert_allclose(st.psi, U_b @ U_a @ e0, atol=1e-12)


def test_brickwork_extension_preserves_state():
    rng = np.random.default_rng(54)
    a = BrickworkAnsatz(n=4, depth=2)
    p = ParamVector(1.5, rng.uniform(-1, 1, a.n_angles))
    before = a.prepare(p).vector()
    grown, p2 = a.extended(p, 5)
    assert grown.n_angles == 6 * 3 * 5
    np.testing.assert_allclose(grown.prepare(p2).vector(), before, atol=1e-14)
