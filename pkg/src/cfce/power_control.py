"""Alternating optimization of precoder, receive scale and per-AP amplitudes.

Each outer iteration (1) folds the AP amplitudes into an effective channel,
(2) solves the relaxed problem on it with unit antenna power, (3) quantizes
to the unit-amplitude alphabet, (4) sets the receive scale in closed form
and (5) sweeps the per-AP amplitudes once in index order.  Steps (4) and
(5) never increase the distortion; step (3) can.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch
from .precoder import (RelaxedPrecoder, _occupied_channel, classical_precode,
                       solve_relaxed, time_domain)
from .scenario import SystemConfig, derive_gamma
from .waveform import CEAlphabet, SymbolGrid, dft, quantize_ce


@dataclass
class PowerState:
    rho: np.ndarray  # (..., L) amplitudes in [0, sqrt(P_ant)]
    beta: float | np.ndarray

    @property
    def p(self) -> np.ndarray:
        return self.rho**2


@dataclass
class PrecodeResult:
    """Precoder output; batched results carry a leading member axis."""

    B_bar: np.ndarray
    X: np.ndarray  # (..., M, S) unit-modulus quantized samples
    X_bar: np.ndarray
    power: PowerState
    # (outer_iteration, stage, distortion), stage in {"precode", "beta", "rho"}
    objective_trace: list = field(default_factory=list)
    solver_runs: list = field(default_factory=list, repr=False)
    fallback: bool | np.ndarray = False

    @property
    def rho(self) -> np.ndarray:
        return self.power.rho

    @property
    def beta(self):
        return self.power.beta

    @property
    def batched(self) -> bool:
        return self.X.ndim == 3

    @property
    def transmitted(self) -> np.ndarray:
        """Radiated time-domain samples diag(rho kron 1_N) X; |x_m[n]| = rho_l."""
        rho = np.asarray(self.rho, dtype=float)
        return antenna_gains(rho, self.X.shape[-2] // rho.shape[-1])[..., :, None] * self.X

    def member(self, j: int) -> "PrecodeResult":
        return PrecodeResult(
            self.B_bar[j], self.X[j], self.X_bar[j], PowerState(self.rho[j], float(self.beta[j])),
            list(self.objective_trace[j]), [r.member(j) for r in self.solver_runs],
            bool(np.asarray(self.fallback).reshape(-1)[j]) if np.ndim(self.fallback) else bool(self.fallback),
        )


def antenna_gains(rho: np.ndarray, N: int) -> np.ndarray:
    return np.repeat(np.asarray(rho, dtype=float), N, axis=-1)


def effective_channel(H_bar: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """H_bar[nu] diag(rho kron 1_N).

    ``H_bar`` is (..., K, M) and ``rho`` is (L,), or (B, L) together with a
    (S, K, M) channel to give one effective channel per member (B, S, K, M).
    """
    rho = np.asarray(rho, dtype=float)
    M = H_bar.shape[-1]
    L = rho.shape[-1] if rho.ndim else 0
    if rho.ndim not in (1, 2) or L == 0 or M % L:
        raise DimensionMismatch(f"AP amplitudes {rho.shape} do not tile {M} antennas")
    gains = antenna_gains(rho, M // L)
    if rho.ndim == 2:
        return H_bar[None] * gains[:, None, None, :]
    return H_bar * gains


def update_beta(u: np.ndarray, s: np.ndarray, sigma2: float):
    """Closed-form receive scale max(0, b/a) for noiseless receptions ``u``.

    ``u`` and ``s`` are (..., S_I, K) over the occupied subcarriers.
    """
    n, K = s.shape[-2:]
    a = np.sum(u.real**2 + u.imag**2, axis=(-2, -1)) + sigma2 * n * K
    b = np.sum((np.conj(u) * s).real, axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = np.where(a > 0, np.maximum(0.0, b / np.where(a > 0, a, 1.0)), 0.0)
    return float(beta) if beta.ndim == 0 else beta


def ap_contribution(H_occ: np.ndarray, X_occ: np.ndarray, N: int) -> np.ndarray:
    """a[l, nu] = H_l[nu] x_l[nu]; H_occ is (n, K, M), X_occ is (..., M, n).

    Returns (..., L, n, K).
    """
    n, K, M = H_occ.shape
    if X_occ.shape[-2:] != (M, n) or M % N:
        raise DimensionMismatch(f"channel {H_occ.shape} and signal {X_occ.shape} blocks disagree (N={N})")
    L = M // N
    Xr = X_occ.reshape(X_occ.shape[:-2] + (L, N, n))
    return np.einsum("nkjd,...jdn->...jnk", H_occ.reshape(n, K, L, N), Xr)


def update_rho_l(l: int, a: np.ndarray, rho: np.ndarray, beta: float, s: np.ndarray, P_ant: float) -> float:
    """Box-projected minimizer of the distortion over rho_l alone."""
    if beta <= 0:
        return float(rho[l])
    al = a[l]
    A = beta**2 * float(np.vdot(al, al).real)
    if A == 0.0:
        return 0.0
    others = np.tensordot(rho, a, axes=1) - rho[l] * al
    e = s - beta * others
    B = beta * float(np.vdot(al, e).real)
    return min(np.sqrt(P_ant), max(0.0, B / A))


def distortion(H_bar, rho, beta, X_bar, grid: SymbolGrid, sigma2: float):
    """sum_{nu in I} ||s - beta H P x||^2 + sigma^2 S_I K beta^2."""
    occ = grid.occupied
    H_occ = _occupied_channel(H_bar, occ)
    if X_bar.shape[-2:] != (H_occ.shape[-1], grid.S):
        raise DimensionMismatch(f"signal shape {X_bar.shape} does not match channel")
    rho = np.asarray(rho, dtype=float)
    x = antenna_gains(rho, H_occ.shape[-1] // rho.shape[-1])[..., :, None] * X_bar[..., occ]
    u = np.einsum("...nkm,...mn->...nk", H_occ, x)
    beta = np.asarray(beta, dtype=float)
    r = grid.s_occ - beta[..., None, None] * u
    out = np.sum(r.real**2 + r.imag**2, axis=(-2, -1)) + sigma2 * grid.S_I * grid.K * beta**2
    return float(out) if np.ndim(out) == 0 else out


def alternating_precode(
    H_bar: np.ndarray,
    grid: SymbolGrid,
    config: SystemConfig,
    sigma2: float = 1.0,
    *,
    dac_bits: int | None = None,
    rho_init: np.ndarray | None = None,
    update_rho: bool = True,
    outer_iters: int | None = None,
    first_relaxed: RelaxedPrecoder | None = None,
) -> PrecodeResult:
    """Alternating CE precoding with per-AP power control.

    The relaxed solver always runs with unit antenna power; physical power
    enters only through ``rho`` and its bound sqrt(P_ant).  Later solves
    are warm-started from the previous solver state.  ``first_relaxed`` may
    supply the first solve (on the effective channel for ``rho_init``).
    Members whose receive scale ends at zero fall back to the classical
    baseline and are flagged.
    """
    p = config.dac_bits if dac_bits is None else dac_bits
    n_outer = config.outer_iters if outer_iters is None else outer_iters
    batched = grid.batched
    g = grid.as_batch()
    Bn = g.batch_size
    rho_max = np.sqrt(config.P_ant)
    if rho_init is None:
        rho = np.full((Bn, config.L), rho_max)
    else:
        rho = np.clip(np.broadcast_to(np.asarray(rho_init, dtype=float), (Bn, config.L)), 0.0, rho_max).copy()
    gamma = derive_gamma(config, sigma2, 1.0)
    alphabet = CEAlphabet(p, 1.0)
    occ = g.occupied
    s = g.s_occ
    H_occ = _occupied_channel(H_bar, occ)

    traces = [[] for _ in range(Bn)]
    runs = []
    state = None
    beta = None
    for it in range(n_outer):
        H_eff = effective_channel(H_bar, rho)
        if it == 0 and first_relaxed is not None:
            relaxed = first_relaxed
            if not batched:
                relaxed = RelaxedPrecoder(relaxed.B_bar[None], [relaxed.objective_trace], np.array([relaxed.iterations]),
                                          np.array([relaxed.converged]), relaxed.state[None])
        else:
            relaxed = solve_relaxed(H_eff, g, gamma, config.solver_params, warm_start=state)
        runs.append(relaxed)
        state = relaxed.state
        X = quantize_ce(time_domain(relaxed.B_bar), alphabet)
        X_bar = dft(X)
        if config.rho_from_quantized:
            x_used = X_bar[..., occ]
        else:
            peak = np.max(np.abs(time_domain(relaxed.B_bar)), axis=(-2, -1))
            x_used = relaxed.B_bar[..., occ] / np.where(peak > 0, peak, 1.0)[:, None, None]
        if beta is not None:
            for j, v in enumerate(distortion(H_bar[None], rho, beta, X_bar, g, sigma2)):
                traces[j].append((it, "precode", float(v)))

        a = ap_contribution(H_occ, x_used, config.N)  # (B, L, n, K)
        u = np.einsum("bl,blnk->bnk", rho, a)
        beta = np.atleast_1d(update_beta(u, s, sigma2))
        for j, v in enumerate(distortion(H_bar[None], rho, beta, X_bar, g, sigma2)):
            traces[j].append((it, "beta", float(v)))

        if update_rho:
            rho = kernels.rho_sweep_batch(a, s, rho, beta, rho_max)
            for j, v in enumerate(distortion(H_bar[None], rho, beta, X_bar, g, sigma2)):
                if beta[j] > 0:
                    traces[j].append((it, "rho", float(v)))

    fallback = beta == 0.0
    result = PrecodeResult(B_bar=relaxed.B_bar, X=X, X_bar=X_bar, power=PowerState(rho, beta),
                           objective_trace=traces, solver_runs=runs, fallback=fallback)
    if fallback.any():
        idx = np.flatnonzero(fallback)
        base = classical_precode(H_bar, g.take(idx), config, sigma2, dac_bits=p)
        result.B_bar = result.B_bar.copy()
        result.X = X.copy()
        result.X_bar = X_bar.copy()
        result.B_bar[idx] = base.B_bar
        result.X[idx] = base.X
        result.X_bar[idx] = base.X_bar
        result.power.rho[idx] = base.rho
        result.power.beta[idx] = base.beta
    return result if batched else result.member(0)
