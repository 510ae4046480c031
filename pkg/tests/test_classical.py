import numpy as np
import pytest
from scipy.integrate import quad

from qvpde.classical import (
    SolverInstability,
    dense_step_matrix,
    put_price_closed_form,
    relative_error,
    solve_bse1d_classical,
    solve_bse2d_classical,
    solve_explicit_classical,
)
from qvpde.core import DimensionError, Grid1D, Grid2D, normalize
from qvpde.costfn import Bse1dProblem, Bse2dProblem, BuckmasterProblem, KpzProblem

L_REF = 4 * np.log(135.0)
X0_REF = -np.log(135.0)


def bse_grid(n):
    return Grid1D(n, L_REF, X0_REF, reflected=True)


def lognormal_put_oracle(spot, strike, rate, sigma_sq, T):
    # discounted expectation of the payoff under the pricing measure
    vol = np.sqrt(sigma_sq)

    def integrand(z):
        sT = spot * np.exp((rate - sigma_sq / 2) * T + vol * np.sqrt(T) * z)
        return max(strike - sT, 0.0) * np.exp(-(z**2) / 2) / np.sqrt(2 * np.pi)

    val, _ = quad(integrand, -12, 12, limit=200)
    return np.exp(-rate * T) * val


def test_put_formula_matches_lognormal_integral():
    for spot, T in [(50.0, 3.0), (20.0, 1.0), (80.0, 0.5), (0.5, 3.0)]:
        got = put_price_closed_form(spot, 50.0, 0.3, 0.04, T)
        want = lognormal_put_oracle(spot, 50.0, 0.3, 0.04, T)
        assert got == pytest.approx(want, abs=1e-8)


def test_put_formula_parity_and_terminal():
    spot = np.array([10.0, 50.0, 120.0])
    # parity: put - call = K e^{-rT} - S; call from the same formula pieces
    put = put_price_closed_form(spot, 50.0, 0.3, 0.04, 2.0)
    call = put + spot - 50.0 * np.exp(-0.3 * 2.0)
    assert np.all(call >= 0)
    assert np.allclose(
        put_price_closed_form(spot, 50.0, 0.3, 0.04, 0.0),
        np.maximum(50.0 - spot, 0.0),
    )


def test_linear_converges_to_closed_form():
    errs = {}
    for n in (8, 10):
        prob = Bse1dProblem(bse_grid(n), nonlin=0.0, tau=-0.03)
        traj = solve_bse1d_classical(prob, "dirichlet_exact", steps=100)
        x = prob.physical_points()
        exact = put_price_closed_form(np.exp(x), 50.0, 0.3, 0.04, 3.0)
        errs[n] = relative_error(traj[-1], exact)
    assert errs[10] < 0.01
    assert errs[10] <= errs[8]


def test_linear_error_shrinks_with_timestep():
    prob_c = Bse1dProblem(bse_grid(9), nonlin=0.0, tau=-0.03)
    prob_f = Bse1dProblem(bse_grid(9), nonlin=0.0, tau=-0.0075)
    x = prob_c.physical_points()
    exact = put_price_closed_form(np.exp(x), 50.0, 0.3, 0.04, 3.0)
    err_c = relative_error(solve_bse1d_classical(prob_c, steps=100)[-1], exact)
    err_f = relative_error(solve_bse1d_classical(prob_f, steps=400)[-1], exact)
    # first order in the timestep
    assert err_c / err_f == pytest.approx(4.0, rel=0.25)


def test_first_nonlinear_step_bump_near_strike():
    lin = Bse1dProblem(bse_grid(8), nonlin=0.0)
    nl = Bse1dProblem(bse_grid(8))
    v_lin = solve_bse1d_classical(lin, "dirichlet_exact", steps=1)[-1]
    v_nl = solve_bse1d_classical(nl, "dirichlet_exact", steps=1)[-1]
    diff = v_nl - v_lin
    x = nl.physical_points()
    assert diff.max() > 0
    assert abs(x[np.argmax(diff)] - np.log(50.0)) < 0.5
    # one-sided: the increase dwarfs any decrease
    assert diff.max() > 3 * abs(diff.min())


def test_single_step_small_tau_consistency():
    g = bse_grid(8)
    devs = []
    for tau in (1e-3, 5e-4):
        prob = Bse1dProblem(g, tau=-tau)
        v0 = prob.terminal_condition()
        stepped = solve_bse1d_classical(prob, "periodic_reflected", steps=1)[-1]
        chi = prob.chi_cost().target_vector({"u_prev": normalize(v0)}).real
        mat = dense_step_matrix(
            prob.step_cost(prob.t0 - tau), {"chi": normalize(chi)}
        ).real
        op_v = (v0 - mat @ v0) / (-tau)
        dev = np.linalg.norm(stepped - (v0 + (-tau) * op_v)) / np.linalg.norm(v0)
        devs.append(dev)
    assert devs[0] < 1e-4
    assert devs[0] / devs[1] == pytest.approx(4.0, rel=0.2)


def test_periodic_linear_matches_independent_circulant():
    n = 6
    prob = Bse1dProblem(bse_grid(n), nonlin=0.0)
    traj = solve_bse1d_classical(prob, "periodic_reflected", steps=3)
    npts = 2**n
    s = 2 ** (n - 1) / L_REF
    q = 4**n / L_REF**2
    be = (0.04 / 2 - 0.3) * prob.tau
    ga = (0.04 / 2) * prob.tau
    a = 1 - 0.3 * prob.tau - 2 * ga * q
    b = ga * q - be * s
    c = ga * q + be * s
    mat = np.zeros((npts, npts))
    idx = np.arange(npts)
    mat[idx, idx] = a
    mat[idx, (idx + 1) % npts] = b
    mat[idx, (idx - 1) % npts] = c
    v = prob.terminal_condition()
    for k in range(3):
        v = np.linalg.solve(mat, v)
        assert np.allclose(traj[k + 1], v, atol=1e-10)


def test_periodic_tracks_dirichlet_reference():
    # boundary treatment is the dominant difference between the two modes
    prob = Bse1dProblem(bse_grid(8))
    half = prob.physical_mask()
    per = solve_bse1d_classical(prob, "periodic_reflected", steps=10)[-1]
    dir_ = solve_bse1d_classical(prob, "dirichlet_exact", steps=10)[-1]
    assert relative_error(per[half], dir_) < 0.05


def grid2d(n):
    return Grid2D(n, n, L_REF, L_REF, X0_REF, X0_REF, True, True)


def test_2d_solution_symmetric_in_assets():
    prob = Bse2dProblem(grid2d(4))
    v_dir = solve_bse2d_classical(prob, "dirichlet_exact", steps=3)[-1]
    nxp, nyp = prob.physical_shape()
    v_dir = v_dir.reshape(nxp, nyp)
    assert np.abs(v_dir - v_dir.T).max() < 1e-10
    v_per = solve_bse2d_classical(prob, "periodic_reflected", steps=3)[-1]
    v_per = v_per.reshape(prob.grid.shape)
    assert np.abs(v_per - v_per.T).max() < 1e-10


def test_2d_single_asset_limit_matches_1d():
    prob2 = Bse2dProblem(grid2d(4), weight_y=0.0)
    term_x = np.maximum(50.0 - np.exp(bse_grid(4).points()), 0.0)
    term = np.tile(term_x[:, None], (1, 16)).reshape(-1)
    traj2 = solve_bse2d_classical(prob2, "periodic_reflected", steps=3, terminal=term)
    prob1 = Bse1dProblem(bse_grid(4), nonlin=0.0)
    traj1 = solve_bse1d_classical(prob1, "periodic_reflected", steps=3, terminal=term_x)
    v2 = traj2[-1].reshape(16, 16)
    assert np.abs(v2 - v2[:, :1]).max() < 1e-10  # stays flat along y
    assert np.abs(v2[:, 0] - traj1[-1]).max() < 1e-10


def test_2d_dirichlet_needs_positive_weights():
    with pytest.raises(ValueError):
        solve_bse2d_classical(Bse2dProblem(grid2d(3), weight_y=0.0), steps=1)


def test_buckmaster_constant_stays_stationary():
    prob = BuckmasterProblem(Grid1D(5, 2 * np.pi, -np.pi))
    traj = solve_explicit_classical(prob, 50, initial=np.full(32, 0.7))
    assert np.abs(traj - 0.7).max() < 1e-12


def test_kpz_pure_diffusion_matches_spectral_oracle():
    prob = KpzProblem(Grid1D(5, 5.0, -2.5), beta=0.0)
    traj = solve_explicit_classical(prob, 200)
    f0 = prob.default_initial()
    theta = 2 * np.pi * np.fft.fftfreq(32)
    q = 4**5 / 5.0**2
    mult = (1 + prob.alpha * prob.tau * q * (2 * np.cos(theta) - 2)) ** 200
    want = np.fft.ifft(mult * np.fft.fft(f0)).real
    assert np.abs(traj[-1] - want).max() < 1e-6


def test_explicit_presets_run_clean():
    with warnings_as_errors():
        buck = solve_explicit_classical(BuckmasterProblem(Grid1D(5, 2 * np.pi, -np.pi)), 250)
        kpz = solve_explicit_classical(KpzProblem(Grid1D(5, 5.0, -2.5)), 200)
    assert np.isfinite(buck).all() and np.isfinite(kpz).all()
    # smoothing dynamics: extremes contract, positivity is kept
    assert buck[-1].min() > 0
    assert buck[-1].max() < buck[0].max()
    assert kpz[-1].max() < kpz[0].max()
    assert kpz[-1].min() > kpz[0].min()


class warnings_as_errors:
    def __enter__(self):
        import warnings

        self._cm = warnings.catch_warnings()
        self._cm.__enter__()
        warnings.simplefilter("error")

    def __exit__(self, *exc):
        return self._cm.__exit__(*exc)


def test_unstable_timestep_warns_then_raises():
    prob = KpzProblem(Grid1D(5, 5.0, -2.5), tau=0.2)
    with pytest.warns(RuntimeWarning):
        with pytest.raises(SolverInstability) as info:
            solve_explicit_classical(prob, 200)
    assert info.value.step >= 1


def test_explicit_step_truncation_is_second_order():
    errs = {}
    for n in (5, 6):
        grid = Grid1D(n, 5.0, -2.5)
        prob = KpzProblem(grid, tau=0.005)  # stays stable on the finer grid
        x = grid.points()
        f = np.exp(-(x**2))
        stepped = solve_explicit_classical(prob, 1, initial=f)[-1]
        fx = -2 * x * f
        fxx = (4 * x**2 - 2) * f
        exact = f + prob.tau * (prob.alpha * fxx + prob.beta * fx**2)
        inner = np.abs(x) < 1.5  # away from the periodic wrap of the tails
        errs[n] = np.linalg.norm((stepped - exact)[inner])
    assert errs[5] / errs[6] == pytest.approx(4.0, rel=0.3)


def test_trajectory_shapes_and_start():
    prob = Bse1dProblem(bse_grid(6))
    term = prob.terminal_condition()
    traj = solve_bse1d_classical(prob, "periodic_reflected", steps=4)
    assert traj.shape == (5, 64)
    assert np.array_equal(traj[0], term)
    custom = np.cos(np.linspace(0, np.pi, 32))
    traj = solve_bse1d_classical(prob, "dirichlet_exact", steps=2, terminal=custom)
    assert traj.shape == (3, 32)
    assert np.array_equal(traj[0], custom)


def test_relative_error_metric():
    v = np.linspace(1.0, 2.0, 17)
    assert relative_error(v, v) == 0.0
    assert relative_error(1.01 * v, v) == pytest.approx(0.01)
    mask = np.zeros(17, dtype=bool)
    mask[:5] = True
    w = v.copy()
    w[10] = 99.0  # outside the mask, must not matter
    assert relative_error(w, v, mask) == 0.0
    with pytest.raises(ValueError):
        relative_error(v, np.zeros(17))
    with pytest.raises(DimensionError):
        relative_error(v, v[:-1])


def test_unknown_boundary_mode_rejected():
    with pytest.raises(ValueError):
        solve_bse1d_classical(Bse1dProblem(bse_grid(5)), "clamped", steps=1)
    with pytest.raises(ValueError):
        solve_bse2d_classical(Bse2dProblem(grid2d(3)), "clamped", steps=1)
