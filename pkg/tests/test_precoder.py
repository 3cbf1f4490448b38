import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfce.errors import DimensionMismatch
from cfce.experiment import build_setup
from cfce.power_control import distortion
from cfce.precoder import classical_precode, prox_sq_inf, relaxed_objective, solve_relaxed, time_domain
from cfce.scenario import SolverParams, SystemConfig, derive_gamma, rng_stream
from cfce.waveform import CEAlphabet, build_symbol_grid, stack_grids

from conftest import crandn
from oracles import cvx_relaxed, random_instance


def scalar_instance(h, s):
    grid = build_symbol_grid(1, [0], 1, np.random.default_rng(0))
    grid.s[0, 0] = s
    return np.array([[[h]]], dtype=complex), grid


# relaxed_objective

def test_objective_at_zero(rng):
    H, grid = random_instance(rng, 4, 2, 8, 6)
    assert relaxed_objective(np.zeros((4, 8), complex), H, grid, 3.0) == pytest.approx(6 * 2)


def test_objective_single_sample():
    h, s, b, g = 0.7 - 0.2j, (1 + 1j) / np.sqrt(2), 0.3 + 0.4j, 2.5
    H, grid = scalar_instance(h, s)
    assert relaxed_objective(np.array([[b]]), H, grid, g) == pytest.approx(abs(s - h * b) ** 2 + g * abs(b) ** 2)


def test_objective_least_squares_residual(rng):
    # K > M so the per-subcarrier LS residual is nonzero
    H, grid = random_instance(rng, 2, 3, 8, 6)
    B = np.zeros((2, 8), complex)
    resid = 0.0
    for nu in grid.occupied:
        b, res, *_ = np.linalg.lstsq(H[nu], grid.s[nu], rcond=None)
        B[:, nu] = b
        resid += float(res[0])
    assert relaxed_objective(B, H, grid, 0.0) == pytest.approx(resid, rel=1e-10)


def test_objective_dimension_check(rng):
    H, grid = random_instance(rng, 2, 1, 8, 6)
    with pytest.raises(DimensionMismatch):
        relaxed_objective(np.zeros((3, 8), complex), H, grid, 1.0)
    with pytest.raises(DimensionMismatch):
        relaxed_objective(np.zeros((2, 8), complex), H[:4], grid, 1.0)


# prox of the squared infinity norm

def test_prox_scalar():
    v = np.array([1.5 - 2.0j])
    assert np.allclose(prox_sq_inf(v, 0.3), v / (1 + 2 * 0.3))


def test_prox_zero():
    assert np.array_equal(prox_sq_inf(np.zeros(5, complex), 0.7), np.zeros(5))


def test_prox_matches_convex_oracle(rng):
    import cvxpy as cp

    v = crandn(rng, 8)
    u = cp.Variable(8, complex=True)
    cp.Problem(cp.Minimize(0.5 * cp.sum_squares(u - v) + 0.3 * cp.square(cp.norm(u, "inf")))).solve(
        solver=cp.CLARABEL, tol_gap_abs=1e-12, tol_gap_rel=1e-12, tol_feas=1e-12)
    assert np.max(np.abs(prox_sq_inf(v, 0.3) - u.value)) < 1e-6


def test_prox_negative_weight():
    with pytest.raises(ValueError):
        prox_sq_inf(np.ones(2, complex), -1.0)


@given(st.integers(1, 40), st.floats(0.0, 20.0), st.integers(0, 2**32 - 1))
def test_prox_nonexpansive_and_phase_preserving(n, lam, seed):
    rng = np.random.default_rng(seed)
    u, v = crandn(rng, n), crandn(rng, n)
    pu, pv = prox_sq_inf(u, lam), prox_sq_inf(v, lam)
    assert np.linalg.norm(pu - pv) <= np.linalg.norm(u - v) * (1 + 1e-12) + 1e-12
    # every entry is u scaled by a factor in [0, 1]
    ratio = pu / u
    assert np.allclose(ratio.imag, 0, atol=1e-12)
    assert np.all((ratio.real >= -1e-12) & (ratio.real <= 1 + 1e-12))


# solve_relaxed

def test_ridge_closed_form():
    h, s, g = 1.3 + 0.4j, (-1 + 1j) / np.sqrt(2), 0.8
    H, grid = scalar_instance(h, s)
    r = solve_relaxed(H, grid, g, SolverParams(max_iters=2000, tol=1e-12))
    b = np.conj(h) * s / (abs(h) ** 2 + g)
    assert r.objective == pytest.approx(relaxed_objective(np.array([[b]]), H, grid, g), rel=1e-12)
    # objective-based stopping pins the iterate only to about sqrt(tol)
    assert r.B_bar[0, 0] == pytest.approx(b, abs=1e-6)


def test_zero_penalty_reaches_least_squares(rng):
    H, grid = random_instance(rng, 4, 2, 8, 6)
    r = solve_relaxed(H, grid, 0.0, SolverParams(max_iters=5000, tol=1e-12))
    # K <= M: every occupied subcarrier can be fitted exactly
    assert relaxed_objective(r.B_bar, H, grid, 0.0) <= 1e-5


@pytest.mark.parametrize("gamma", [0.1, 1.0, 10.0])
def test_matches_convex_oracle(rng, gamma):
    H, grid = random_instance(rng, 4, 2, 8, 6)
    r = solve_relaxed(H, grid, gamma)
    f_star, _ = cvx_relaxed(H, grid, gamma)
    assert r.objective <= f_star * (1 + 1e-4)
    assert relaxed_objective(r.B_bar, H, grid, gamma) == pytest.approx(r.objective, rel=1e-10)


def test_trace_finite_and_best_monotone(rng):
    H, grid = random_instance(rng, 4, 2, 8, 6, scale=3.0)
    r = solve_relaxed(H, grid, 2.0, SolverParams(max_iters=80, tol=1e-14))
    tr = np.asarray(r.objective_trace)
    assert np.all(np.isfinite(tr)) and tr.size == r.iterations == 80 and not r.converged
    assert np.all(np.diff(r.best_trace) <= 0)
    assert r.objective <= tr[0]


@given(st.floats(0.05, 20.0), st.integers(0, 2**32 - 1))
@settings(max_examples=25)
def test_homogeneity(c, seed):
    rng = np.random.default_rng(seed)
    H, grid = random_instance(rng, 2, 1, 8, 6)
    B = crandn(rng, 2, 8)
    assert relaxed_objective(c * B, H, grid.scaled(c), 1.5) == pytest.approx(
        c**2 * relaxed_objective(B, H, grid, 1.5), rel=1e-10)


def test_solution_scales_with_symbols(rng):
    H, grid = random_instance(rng, 4, 2, 8, 6)
    params = SolverParams(max_iters=3000, tol=1e-13)
    a = solve_relaxed(H, grid, 1.0, params)
    b = solve_relaxed(H, grid.scaled(2.5), 1.0, params)
    assert np.allclose(b.B_bar, 2.5 * a.B_bar, atol=1e-6 * np.abs(b.B_bar).max())


def test_scaled_result_solves_scaled_problem(rng):
    H, grid = random_instance(rng, 4, 2, 8, 6)
    c = 4.0
    a = solve_relaxed(H, grid, 1.0)
    b = solve_relaxed(H / c, grid, 1.0 / c**2)
    assert np.allclose(a.scaled(c).B_bar, b.B_bar, atol=1e-9 * np.abs(b.B_bar).max())


def test_batch_equals_members(rng):
    H, _ = random_instance(rng, 4, 2, 8, 6)
    occ = [0, 1, 2, 5, 6, 7]
    grids = [build_symbol_grid(2, occ, 8, rng) for _ in range(5)]
    batch = solve_relaxed(H, stack_grids(grids), 1.0)
    assert batch.batched and batch.B_bar.shape == (5, 4, 8)
    for j, g in enumerate(grids):
        one = solve_relaxed(H, g, 1.0)
        assert np.allclose(batch.B_bar[j], one.B_bar, atol=1e-12)
        assert batch.iterations[j] == one.iterations
        assert batch.member(j).objective == pytest.approx(one.objective, rel=1e-12)


def test_batch_with_member_channels(rng):
    occ = [0, 1, 2, 5, 6, 7]
    grids = [build_symbol_grid(2, occ, 8, rng) for _ in range(3)]
    Hs = np.stack([random_instance(rng, 4, 2, 8, 6)[0] for _ in range(3)])
    batch = solve_relaxed(Hs, stack_grids(grids), 0.5)
    for j in range(3):
        assert np.allclose(batch.B_bar[j], solve_relaxed(Hs[j], grids[j], 0.5).B_bar, atol=1e-12)
    with pytest.raises(DimensionMismatch):
        solve_relaxed(Hs, grids[0], 0.5)


def test_warm_start_checks_shape(rng):
    H, grid = random_instance(rng, 2, 1, 8, 6)
    r = solve_relaxed(H, grid, 1.0)
    again = solve_relaxed(H, grid, 1.0, warm_start=r.state)
    assert again.iterations <= r.iterations
    with pytest.raises(DimensionMismatch):
        solve_relaxed(H, grid, 1.0, warm_start=np.zeros((3, 8)))


def test_negative_gamma(rng):
    H, grid = random_instance(rng, 2, 1, 8, 6)
    with pytest.raises(ValueError):
        solve_relaxed(H, grid, -1.0)


# classical_precode

def desk_instance(P_ant, setup_id=1):
    cfg = SystemConfig(P_ant=P_ant)
    H = build_setup(cfg, setup_id).channel.freq(cfg.S)
    grid = build_symbol_grid(cfg.K, cfg.occupied_set, cfg.S, rng_stream(0, setup_id, "symbols", 0))
    return cfg, H, grid


@pytest.mark.parametrize("p", [1, 2, 3])
def test_classical_is_constant_envelope(p):
    cfg, H, grid = desk_instance(1e-4)
    r = classical_precode(H, grid, cfg, dac_bits=p)
    pts = CEAlphabet(p).points
    assert np.all(np.min(np.abs(r.X.reshape(-1, 1) - pts), axis=1) == 0)
    assert np.allclose(np.abs(r.transmitted), np.sqrt(cfg.P_ant), rtol=1e-15, atol=0)
    assert np.all(r.rho == np.sqrt(cfg.P_ant))
    assert r.beta >= 0
    assert np.allclose(r.X_bar, np.fft.fft(r.X, axis=-1, norm="ortho"))


def test_classical_reuses_relaxed_solution():
    cfg, H, grid = desk_instance(1e-4)
    relaxed = solve_relaxed(H, grid, derive_gamma(cfg, 1.0, cfg.P_ant), cfg.solver_params)
    a = classical_precode(H, grid, cfg, dac_bits=2)
    b = classical_precode(H, grid, cfg, dac_bits=2, relaxed=relaxed)
    assert np.array_equal(a.X, b.X) and a.beta == b.beta


def test_fine_quantization_approaches_relaxed_distortion():
    # noise-limited regime, where the relaxed optimum is almost exactly
    # constant envelope
    cfg, H, grid = desk_instance(1e-8)
    r = classical_precode(H, grid, cfg, dac_bits=12)
    d_quant = distortion(H, r.rho, r.beta, r.X_bar, grid, 1.0)
    f_relaxed = relaxed_objective(r.B_bar, H, grid, derive_gamma(cfg, 1.0, cfg.P_ant))
    assert abs(d_quant / f_relaxed - 1) < 0.01


def test_classical_beta_nonnegative_random(rng):
    cfg = SystemConfig(L=1, N=2, K=1, S=8, occupied_set=(1, 2, 6, 7), T=1, P_ant=1.0)
    for _ in range(10):
        H = crandn(rng, 8, 1, 2)
        grid = build_symbol_grid(1, cfg.occupied_set, 8, rng)
        assert classical_precode(H, grid, cfg, dac_bits=1).beta >= 0
