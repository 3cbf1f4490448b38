import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfce.channel import ChannelRealization
from cfce.errors import DimensionMismatch, EmptyInput
from cfce.experiment import build_setup
from cfce.link_eval import (BerReport, aggregate_sorted, demap, draw_noise, evaluate_setup, evaluate_setup_all,
                            noiseless_receive, precode, simulate_downlink, transmit_time_domain)
from cfce.power_control import PowerState, PrecodeResult, antenna_gains
from cfce.scenario import SystemConfig, rng_stream
from cfce.waveform import build_symbol_grid, dft, idft, qpsk_map

from conftest import crandn


def signal_result(X_bar, rho, beta=1.0):
    return PrecodeResult(B_bar=X_bar, X=idft(X_bar), X_bar=X_bar, power=PowerState(np.asarray(rho, float), beta))


@pytest.fixture(scope="module")
def fixed_link():
    # one precoded symbol over a fixed desk channel
    cfg = SystemConfig(P_ant=1e-4)
    H = build_setup(cfg, 3).channel.freq(cfg.S)
    grid = build_symbol_grid(cfg.K, cfg.occupied_set, cfg.S, rng_stream(0, 3, "symbols", 0))
    return cfg, H, grid, precode("baseline", H, grid, cfg, 2)


def bit_errors(H, res, grid, sigma2, rng, draws):
    errs = 0
    for _ in range(draws):
        soft = simulate_downlink(H, res, sigma2, rng, grid.occupied)
        errs += int(np.sum(demap(soft) != grid.bits))
    return errs, draws * grid.bits.size


# channel model equivalence

def test_frequency_domain_matches_cyclic_prefix_oracle(rng):
    cfg = SystemConfig()
    for sid in range(10):
        taps = build_setup(cfg, sid).channel.taps
        X = np.exp(2j * np.pi * rng.random((cfg.M, cfg.S)))
        rho = rng.uniform(0, 1, cfg.L)
        res = signal_result(dft(X), rho)
        H = ChannelRealization(taps, cfg.N).freq(cfg.S)
        freq = noiseless_receive(H, res, np.arange(cfg.S))
        ref = transmit_time_domain(taps, X, rho).T
        assert np.linalg.norm(freq - ref) <= 1e-8 * np.linalg.norm(ref)


def test_prefix_oracle_single_tap(rng):
    taps = crandn(rng, 1, 2, 3)
    X = crandn(rng, 3, 8)
    out = transmit_time_domain(taps, X, np.ones(3))
    assert np.allclose(out, dft(taps[0] @ X))


# simulate_downlink

def test_noiseless_inversion_returns_symbols(rng):
    S, K, M, N = 8, 2, 4, 2
    occ = np.array([1, 2, 3, 5, 6])
    grid = build_symbol_grid(K, occ, S, rng)
    H = crandn(rng, S, K, M)
    rho = np.array([0.5, 2.0])
    X_bar = np.zeros((M, S), complex)
    P = antenna_gains(rho, N)
    for nu in occ:
        X_bar[:, nu] = np.linalg.pinv(H[nu] * P) @ grid.s[nu]
    out = simulate_downlink(H, signal_result(X_bar, rho), 0.0, rng, occ)
    assert np.allclose(out, grid.s_occ, atol=1e-12)


def test_zero_power_gives_scaled_noise(rng):
    H = crandn(rng, 8, 2, 4)
    res = signal_result(crandn(rng, 4, 8), np.zeros(2), beta=0.3)
    occ = [0, 4, 5]
    out = simulate_downlink(H, res, 2.0, np.random.default_rng(11), occ)
    assert np.allclose(out, 0.3 * draw_noise(np.random.default_rng(11), (3, 2), 2.0))


def test_noise_calibration():
    w = draw_noise(np.random.default_rng(0), 200_000, 0.37)
    assert np.mean(np.abs(w) ** 2) == pytest.approx(0.37, rel=0.02)
    assert abs(np.mean(w.real * w.imag)) < 0.01 * 0.37
    assert np.var(w.real) == pytest.approx(0.37 / 2, rel=0.02)


def test_dimension_check(rng):
    res = signal_result(crandn(rng, 4, 8), np.ones(2))
    with pytest.raises(DimensionMismatch):
        noiseless_receive(crandn(rng, 8, 2, 6), res, [0])


def test_ber_grows_with_noise(fixed_link):
    cfg, H, grid, res = fixed_link
    rng = np.random.default_rng(5)
    e1, n = bit_errors(H, res, grid, 1.0, rng, 320)
    e2, _ = bit_errors(H, res, grid, 2.0, rng, 320)
    assert n >= 100_000
    sd = np.sqrt(n * (e1 / n) * (1 - e1 / n) + n * (e2 / n) * (1 - e2 / n))
    assert e2 >= e1 - 3 * sd
    assert e1 > 0


def test_pure_noise_limit(fixed_link):
    cfg, H, grid, res = fixed_link
    rng = np.random.default_rng(6)
    per_ue = np.zeros(cfg.K)
    draws = 130
    for _ in range(draws):
        soft = simulate_downlink(H, res, 1e14, rng, grid.occupied)
        per_ue += np.sum(demap(soft) != grid.bits, axis=(0, 2))
    n = draws * 2 * cfg.S_I
    assert n >= 10_000
    assert np.all(np.abs(per_ue / n - 0.5) <= 3 * np.sqrt(0.25 / n))


# evaluate_setup

def test_fine_phases_noiseless_is_error_free():
    cfg = SystemConfig(P_ant=1e-4, ofdm_symbols_per_setup=4)
    rep = evaluate_setup(build_setup(cfg, 0).channel, cfg, "baseline", 0, dac_bits=12, sigma2=0.0)
    assert np.all(rep.per_ue_errors == 0)
    assert np.all(rep.per_ue_bits == 4 * 2 * cfg.S_I)


def test_evaluation_is_deterministic():
    cfg = SystemConfig(P_ant=1e-4, ofdm_symbols_per_setup=2)
    ch = build_setup(cfg, 1).channel
    a = evaluate_setup(ch, cfg, "power_control", 1)
    b = evaluate_setup(ch, cfg, "power_control", 1)
    assert np.array_equal(a.per_ue_errors, b.per_ue_errors)
    assert np.array_equal(a.rho_history, b.rho_history)


def test_batched_setup_matches_symbol_loop():
    cfg = SystemConfig(P_ant=1e-4, ofdm_symbols_per_setup=2)
    ch = build_setup(cfg, 0).channel
    H = ch.freq(cfg.S)
    reps = evaluate_setup_all(ch, cfg, ("baseline", "power_control"), (1, 2), 0)
    assert [(r.dac_bits, r.scheme) for r in reps] == [(1, "baseline"), (1, "power_control"),
                                                       (2, "baseline"), (2, "power_control")]
    for rep in reps:
        errs = np.zeros(cfg.K, dtype=np.int64)
        for sym in range(2):
            g = build_symbol_grid(cfg.K, cfg.occupied_set, cfg.S, rng_stream(0, 0, "symbols", sym))
            res = precode(rep.scheme, H, g, cfg, rep.dac_bits)
            soft = simulate_downlink(H, res, 1.0, rng_stream(0, 0, "noise", sym), g.occupied)
            errs += np.sum(demap(soft) != g.bits, axis=(0, 2))
            assert np.allclose(rep.rho_history[sym], res.rho, rtol=1e-12, atol=1e-18)
        assert np.array_equal(rep.per_ue_errors, errs)


def test_frozen_powers_hold_across_symbols():
    cfg = SystemConfig(P_ant=1e-4, ofdm_symbols_per_setup=3, freeze_rho=True)
    rep = evaluate_setup(build_setup(cfg, 0).channel, cfg, "power_control", 0)
    assert rep.rho_history.shape == (3, cfg.L)
    assert np.all(rep.rho_history == rep.rho_history[0])


def test_unknown_scheme():
    cfg = SystemConfig(ofdm_symbols_per_setup=1)
    with pytest.raises(ValueError):
        evaluate_setup(build_setup(cfg, 0).channel, cfg, "greedy", 0)


def test_demap_round_trip():
    bits = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)
    assert np.array_equal(demap(qpsk_map(bits)), bits)
    assert tuple(demap(np.array((1 + 1j) / np.sqrt(2)))) == (0, 0)
    assert tuple(demap(np.array(-3 - 0.1j))) == (1, 1)


# aggregate_sorted

def report(ber, setup=0):
    ber = np.asarray(ber, float)
    bits = np.full(ber.size, 1000)
    return BerReport(setup, "baseline", 2, np.round(ber * 1000).astype(int), bits)


def test_aggregate_examples():
    assert np.allclose(aggregate_sorted([report([0.1, 0.3, 0.2])]).mean_ber_by_rank, [0.3, 0.2, 0.1])
    curve = aggregate_sorted([report([0.1, 0.3]), report([0.2, 0.0], 1)])
    assert np.allclose(curve.mean_ber_by_rank, [0.25, 0.05])
    assert curve.n_setups == 2 and curve.bits_per_ue == 1000


def test_aggregate_errors():
    with pytest.raises(EmptyInput):
        aggregate_sorted([])
    with pytest.raises(DimensionMismatch):
        aggregate_sorted([report([0.1]), report([0.1, 0.2])])


@given(st.lists(st.lists(st.integers(0, 1000), min_size=3, max_size=3), min_size=1, max_size=12))
def test_aggregate_non_increasing(rows):
    curve = aggregate_sorted([report(np.array(r) / 1000, j) for j, r in enumerate(rows)])
    assert np.all(np.diff(curve.mean_ber_by_rank) <= 1e-15)
