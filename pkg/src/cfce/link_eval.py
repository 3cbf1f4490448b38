"""Downlink link simulation, QPSK detection and per-UE BER accounting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .errors import DimensionMismatch, EmptyInput
from .power_control import PowerState, PrecodeResult, alternating_precode, antenna_gains
from .precoder import RelaxedPrecoder, classical_precode, solve_relaxed
from .scenario import SystemConfig, derive_gamma, rng_stream
from .waveform import SymbolGrid, build_symbol_grid, demap_qpsk, dft, stack_grids

SCHEMES = ("baseline", "power_control")


@dataclass
class BerReport:
    setup_id: int
    scheme: str
    dac_bits: int
    per_ue_errors: np.ndarray
    per_ue_bits: np.ndarray
    # (symbols, L) transmit amplitudes actually used; rho**2 / P_ant is the power map
    rho_history: np.ndarray = field(repr=False, default=None)
    fallbacks: int = 0

    @property
    def per_ue_ber(self) -> np.ndarray:
        return self.per_ue_errors / self.per_ue_bits

    @property
    def sorted_ber(self) -> np.ndarray:
        return np.sort(self.per_ue_ber)[::-1]


@dataclass
class SortedBerCurve:
    mean_ber_by_rank: np.ndarray
    n_setups: int
    bits_per_ue: int


def noiseless_receive(H_bar: np.ndarray, result: PrecodeResult, occupied) -> np.ndarray:
    """H_bar[nu] P x_bar[nu] on the occupied subcarriers, shape (..., S_I, K)."""
    occupied = np.asarray(occupied)
    S, K, M = H_bar.shape[-3:]
    if result.X_bar.shape[-2:] != (M, S):
        raise DimensionMismatch(f"signal {result.X_bar.shape} does not match channel {H_bar.shape}")
    rho = np.asarray(result.rho, dtype=float)
    gains = antenna_gains(rho, M // rho.shape[-1])
    x = gains[..., :, None] * result.X_bar[..., occupied]
    return np.einsum("...nkm,...mn->...nk", np.take(H_bar, occupied, axis=-3), x)


def draw_noise(rng: np.random.Generator, shape, sigma2: float) -> np.ndarray:
    return np.sqrt(sigma2 / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate_downlink(H_bar, result: PrecodeResult, sigma2: float, rng: np.random.Generator, occupied) -> np.ndarray:
    """Soft estimates beta * y_bar[nu] for nu in the occupied set, (S_I, K).

    Noise is drawn only on occupied subcarriers.
    """
    y = noiseless_receive(H_bar, result, occupied)
    if sigma2 > 0:
        y = y + draw_noise(rng, y.shape, sigma2)
    return np.asarray(result.beta)[..., None, None] * y if np.ndim(result.beta) else result.beta * y


def transmit_time_domain(taps: np.ndarray, X: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Explicit cyclic-prefix transmission through the tapped delay line.

    Prepends a T-sample prefix to each antenna row of diag(rho kron 1_N) X,
    convolves linearly with the taps, strips the prefix and returns the
    unitary DFT of the received block, shape (K, S).
    """
    n_taps, K, M = taps.shape
    T = n_taps - 1
    S = X.shape[1]
    x = antenna_gains(rho, M // np.asarray(rho).size)[:, None] * X
    tx = np.concatenate([x[:, S - T:], x], axis=1) if T else x
    rx = np.zeros((K, S + T), dtype=complex)
    for n in range(S + T):
        for t in range(min(n, T) + 1):
            rx[:, n] += taps[t] @ tx[:, n - t]
    return dft(rx[:, T:])


def demap(soft: np.ndarray) -> np.ndarray:
    return demap_qpsk(soft)


def precode(scheme: str, H_bar, grid, config: SystemConfig, dac_bits: int, rho_init=None, update_rho=True) -> PrecodeResult:
    if scheme == "baseline":
        return classical_precode(H_bar, grid, config, 1.0, dac_bits=dac_bits)
    if scheme == "power_control":
        return alternating_precode(H_bar, grid, config, 1.0, dac_bits=dac_bits,
                                   rho_init=rho_init, update_rho=update_rho)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def setup_grids(config: SystemConfig, setup_id: int) -> SymbolGrid:
    """All OFDM symbols of a setup as one batched grid (scheme independent)."""
    return stack_grids(
        build_symbol_grid(config.K, config.occupied_set, config.S,
                          rng_stream(config.master_seed, setup_id, "symbols", sym))
        for sym in range(config.ofdm_symbols_per_setup))


def setup_noise(config: SystemConfig, setup_id: int, sigma2: float) -> np.ndarray:
    """Receiver noise for every symbol of a setup, (symbols, S_I, K)."""
    shape = (config.S_I, config.K)
    return np.stack([draw_noise(rng_stream(config.master_seed, setup_id, "noise", sym), shape, sigma2)
                     for sym in range(config.ofdm_symbols_per_setup)])


def _power_control_batch(H_bar, grid, config, p, sigma2, baseline_relaxed):
    first = None
    if baseline_relaxed is not None:
        # the full-power first iteration is the baseline problem in scaled units
        first = baseline_relaxed.scaled(1.0 / np.sqrt(config.P_ant))
    if not config.freeze_rho:
        return alternating_precode(H_bar, grid, config, sigma2, dac_bits=p, first_relaxed=first)
    # powers are set on the first symbol and held for the rest of the setup
    lead = alternating_precode(H_bar, grid.take(np.arange(1)), config, sigma2, dac_bits=p,
                               first_relaxed=None if first is None else _member_batch(first, 0))
    if grid.batch_size == 1:
        return lead
    rest = alternating_precode(H_bar, grid.take(np.arange(1, grid.batch_size)), config, sigma2, dac_bits=p,
                               rho_init=lead.rho[0], update_rho=False)
    return _concat_results(lead, rest)


def _member_batch(relaxed: RelaxedPrecoder, j: int) -> RelaxedPrecoder:
    return RelaxedPrecoder(relaxed.B_bar[j:j + 1], relaxed.objective_trace[j:j + 1], relaxed.iterations[j:j + 1],
                           relaxed.converged[j:j + 1], relaxed.state[j:j + 1])


def _concat_results(a: PrecodeResult, b: PrecodeResult) -> PrecodeResult:
    cat = np.concatenate
    return PrecodeResult(cat([a.B_bar, b.B_bar]), cat([a.X, b.X]), cat([a.X_bar, b.X_bar]),
                         PowerState(cat([a.rho, b.rho]), cat([a.beta, b.beta])),
                         a.objective_trace + b.objective_trace, a.solver_runs + b.solver_runs,
                         cat([np.atleast_1d(a.fallback), np.atleast_1d(b.fallback)]))


def evaluate_setup_all(channel: ChannelRealization, config: SystemConfig, schemes, dac_bits, setup_id: int,
                       sigma2: float = 1.0, keep_results: bool = False):
    """BER reports for every (DAC resolution, scheme) pair of one setup.

    All OFDM symbols are precoded as one batch.  The baseline relaxed solve
    does not depend on the DAC resolution, so it is done once and shared;
    it also serves, rescaled, as the full-power first iteration of the
    power-control loop.  Results are identical to symbol-by-symbol runs.
    """
    for scheme in schemes:
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    H_bar = channel.freq(config.S)
    grid = setup_grids(config, setup_id)
    noise = setup_noise(config, setup_id, sigma2) if sigma2 > 0 else None
    base_relaxed = solve_relaxed(H_bar, grid, derive_gamma(config, 1.0, config.P_ant), config.solver_params)
    reports, results = [], []
    for p in dac_bits:
        for scheme in schemes:
            if scheme == "baseline":
                res = classical_precode(H_bar, grid, config, 1.0, dac_bits=p, relaxed=base_relaxed)
            else:
                res = _power_control_batch(H_bar, grid, config, p, 1.0, base_relaxed)
            y = noiseless_receive(H_bar, res, grid.occupied)
            if noise is not None:
                y = y + noise
            soft = np.asarray(res.beta)[:, None, None] * y
            errors = np.sum(demap(soft) != grid.bits, axis=(0, 1, 3))
            n_bits = np.full(config.K, 2 * grid.S_I * grid.batch_size, dtype=np.int64)
            reports.append(BerReport(setup_id, scheme, p, errors.astype(np.int64), n_bits, np.array(res.rho),
                                     int(np.sum(res.fallback))))
            if keep_results:
                results.append(res)
    return (reports, results) if keep_results else reports


def evaluate_setup(channel: ChannelRealization, config: SystemConfig, scheme: str, setup_id: int,
                   dac_bits: int | None = None, sigma2: float = 1.0) -> BerReport:
    """Run ``ofdm_symbols_per_setup`` precoded OFDM symbols over one channel.

    Channel taps are in normalized units (noise power one).  Symbols and
    noise use streams keyed by (seed, setup, symbol) that do not depend on
    the scheme or the DAC resolution, so all schemes see the same data and
    noise.  ``sigma2`` only scales the injected noise, not the precoder
    design, and exists for stress tests.
    """
    p = config.dac_bits if dac_bits is None else dac_bits
    return evaluate_setup_all(channel, config, (scheme,), (p,), setup_id, sigma2)[0]


def aggregate_sorted(reports) -> SortedBerCurve:
    reports = list(reports)
    if not reports:
        raise EmptyInput("no BER reports to aggregate")
    K = {len(r.per_ue_ber) for r in reports}
    if len(K) != 1:
        raise DimensionMismatch(f"reports disagree on K: {sorted(K)}")
    stacked = np.stack([r.sorted_ber for r in reports])
    return SortedBerCurve(stacked.mean(axis=0), len(reports), int(reports[0].per_ue_bits[0]))
