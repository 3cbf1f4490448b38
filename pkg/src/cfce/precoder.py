"""Relaxed l2/l_inf^2 constant-envelope precoding and the max-power baseline.

The relaxed problem is

    minimize_B   sum_{nu in I} ||s[nu] - H[nu] b[nu]||^2 + gamma * ||vec(B F^H)||_inf^2

over the frequency-domain precoder ``B`` (M x S).  It is solved with
Douglas-Rachford splitting: the data-fit prox is a ridge solve per occupied
subcarrier, the penalty prox is a magnitude clip in the time domain, and
the two are coupled through the unitary DFT.

Every routine here also accepts a batch of independent OFDM symbols (a
batched :class:`SymbolGrid`, optionally with one channel per member).
Members that meet the stopping rule are frozen, so a batched solve returns
the same iterates as solving each member on its own.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch
from .scenario import SolverParams, SystemConfig, derive_gamma
from .waveform import CEAlphabet, SymbolGrid, dft, idft, quantize_ce

log = logging.getLogger(__name__)


@dataclass
class RelaxedPrecoder:
    """Solver output.  For a batch every field gains a leading member axis
    and ``objective_trace`` is a list of per-member lists."""

    B_bar: np.ndarray  # (M, S) best iterate, frequency domain
    objective_trace: list
    iterations: int | np.ndarray
    converged: bool | np.ndarray
    state: np.ndarray = field(repr=False)  # DRS auxiliary variable, time domain

    @property
    def batched(self) -> bool:
        return self.B_bar.ndim == 3

    @property
    def best_trace(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.objective_trace))

    @property
    def objective(self):
        if self.batched:
            return np.array([min(t) for t in self.objective_trace])
        return float(np.min(self.objective_trace))

    def member(self, j: int) -> "RelaxedPrecoder":
        return RelaxedPrecoder(self.B_bar[j], list(self.objective_trace[j]), int(self.iterations[j]),
                               bool(self.converged[j]), self.state[j])

    def scaled(self, c: float) -> "RelaxedPrecoder":
        """Solution of the problem with channel H/c and penalty gamma/c^2."""
        tr = [[v for v in t] for t in self.objective_trace] if self.batched else list(self.objective_trace)
        return RelaxedPrecoder(self.B_bar * c, tr, self.iterations, self.converged, self.state * c)


def _occupied_channel(H_bar: np.ndarray, occ: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.take(H_bar, occ, axis=-3))


def _check_dims(B_bar, H_bar, grid):
    S, K, M = H_bar.shape[-3:]
    if grid.s.shape[-2:] != (S, K):
        raise DimensionMismatch(f"symbol grid {grid.s.shape} does not match channel (S={S}, K={K})")
    if H_bar.ndim == 4 and (not grid.batched or H_bar.shape[0] != grid.batch_size):
        raise DimensionMismatch(f"per-member channels {H_bar.shape} need a batch of {H_bar.shape[0]} grids")
    if B_bar is not None and B_bar.shape[-2:] != (M, S):
        raise DimensionMismatch(f"precoder shape {B_bar.shape} != (..., {M}, {S})")


def relaxed_objective(B_bar: np.ndarray, H_bar: np.ndarray, grid: SymbolGrid, gamma: float):
    _check_dims(B_bar, H_bar, grid)
    occ = grid.occupied
    resid = grid.s_occ - np.einsum("...nkm,...mn->...nk", _occupied_channel(H_bar, occ), B_bar[..., occ])
    peak = np.max(np.abs(idft(B_bar)), axis=(-2, -1))
    out = np.sum(np.abs(resid) ** 2, axis=(-2, -1)) + gamma * peak**2
    return float(out) if np.ndim(out) == 0 else out


def prox_sq_inf(v: np.ndarray, weight: float) -> np.ndarray:
    """argmin_u ||u - v||^2 / 2 + weight * ||u||_inf^2 (entrywise magnitude clip)."""
    if weight < 0:
        raise ValueError("prox weight must be nonnegative")
    return kernels.sq_inf_prox(v, weight)


class _DataFitProx:
    """Prox of tau * sum_nu ||s - H b||^2 on the occupied subcarriers.

    Solves (I + c H^H H) b = v + c H^H s with c = 2 tau in the K x K
    matrix-inversion-lemma form b = v - W H v + offset, W = H^H (I/c + H H^H)^{-1}.
    The data-fit residual follows from H v at no extra product:
    s - H b = s' - G H v with G = I - H W and s' = s - H offset.
    ``H`` is (n, K, M) shared by the batch, or (B, n, K, M) per member.  A
    shared channel keeps the batch as the trailing axis so each subcarrier
    is one small matrix product over all members.
    """

    def __init__(self, H: np.ndarray, s: np.ndarray, tau: float):
        c = 2.0 * tau
        K = H.shape[-2]
        Hh = np.conj(np.swapaxes(H, -1, -2))
        W = Hh @ (c * np.linalg.inv(np.eye(K) + c * (H @ Hh)))
        self.shared = H.ndim == 3
        self.H = H
        self.W = W
        self.G = np.eye(K) - H @ W
        d = c * (Hh @ s[..., None])[..., 0]  # (B, n, M)
        offset = d - (W @ (H @ d[..., None]))[..., 0]
        s_res = s - (H @ offset[..., None])[..., 0]
        if self.shared:
            self.offset = np.ascontiguousarray(offset.transpose(1, 2, 0))  # (n, M, B)
            self.s_res = np.ascontiguousarray(s_res.transpose(1, 2, 0))  # (n, K, B)
            self.s = np.ascontiguousarray(s.transpose(1, 2, 0))
        else:
            self.offset = offset[..., None]
            self.s_res = s_res[..., None]
            self.s = s[..., None]

    def __call__(self, v: np.ndarray):
        """v is (B, M, n).  Returns x as (B, M, n) and, per member, the data
        fit ||r||^2 and Re<r, s> for the residual r = s - H x."""
        if self.shared:
            vt = v.transpose(2, 1, 0)  # (n, M, B)
            hv = self.H @ vt
            x = vt - self.W @ hv + self.offset
            r = self.s_res - self.G @ hv
            ax = (0, 1)
            xo = x.transpose(2, 1, 0)
        else:
            vt = np.swapaxes(v, -1, -2)[..., None]  # (B, n, M, 1)
            hv = self.H @ vt
            x = vt - self.W @ hv + self.offset
            r = self.s_res - self.G @ hv
            ax = (-3, -2, -1)
            xo = np.swapaxes(x[..., 0], -1, -2)
        fit = np.sum(r.real**2 + r.imag**2, axis=ax)
        rs = np.sum(r.real * self.s.real + r.imag * self.s.imag, axis=ax)
        return xo, fit, rs

    def subset(self, keep: np.ndarray) -> "_DataFitProx":
        out = object.__new__(_DataFitProx)
        out.shared = self.shared
        if self.shared:
            out.H, out.W, out.G = self.H, self.W, self.G
            out.offset = np.ascontiguousarray(self.offset[..., keep])
            out.s_res = np.ascontiguousarray(self.s_res[..., keep])
            out.s = np.ascontiguousarray(self.s[..., keep])
        else:
            out.H, out.W, out.G = self.H[keep], self.W[keep], self.G[keep]
            out.offset, out.s_res, out.s = self.offset[keep], self.s_res[keep], self.s[keep]
        return out


def _prox_step(H: np.ndarray, gamma: float, n_entries: int, step_size: float) -> float:
    # With many samples sharing the peak, the penalty's curvature per
    # sample is about 2*gamma/n_entries; that sets the step.  Without a
    # penalty the channel gain does.
    if gamma > 0:
        return step_size * n_entries / (2.0 * gamma)
    K = H.shape[-2]
    gain = float(np.mean(np.sum(np.abs(H) ** 2, axis=(-2, -1)))) / K
    return step_size / gain if gain > 0 else step_size


# consecutive iterations the objective must stay flat before stopping
PATIENCE = 3


def solve_relaxed(
    H_bar: np.ndarray,
    grid: SymbolGrid,
    gamma: float,
    params: SolverParams = SolverParams(),
    warm_start: np.ndarray | None = None,
) -> RelaxedPrecoder:
    """Douglas-Rachford iterations for the relaxed precoding problem.

    ``H_bar`` is (S, K, M), or (B, S, K, M) for per-member channels of a
    batched grid.  Returns the best iterate seen; ``converged`` is False
    when ``max_iters`` ran out first (not an error).
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    _check_dims(None, H_bar, grid)
    single = not grid.batched
    g = grid.as_batch()
    S, K, M = H_bar.shape[-3:]
    Bn = g.batch_size
    occ = g.occupied
    H = _occupied_channel(H_bar, occ)

    tau = _prox_step(H, gamma, M * S, params.step_size)
    prox_f = _DataFitProx(H, g.s_occ, tau)
    lam_g = tau * gamma
    relax = params.over_relaxation
    tol = params.tol

    if warm_start is None:
        z_all = np.zeros((Bn, M, S), dtype=complex)
    else:
        z_all = np.array(warm_start, dtype=complex)
        if single and z_all.shape == (M, S):
            z_all = z_all[None]
        if z_all.shape != (Bn, M, S):
            raise DimensionMismatch(f"warm start shape {np.shape(warm_start)} does not match ({Bn}, {M}, {S})")

    trace = np.full((params.max_iters, Bn), np.nan)
    best = np.zeros((Bn, M, S), dtype=complex)
    best_obj = np.full(Bn, np.inf)
    prev = np.full(Bn, np.nan)
    calm = np.zeros(Bn, dtype=np.int64)  # consecutive flat iterations
    iters = np.zeros(Bn, dtype=np.int64)
    converged = np.zeros(Bn, dtype=bool)
    active = np.arange(Bn)  # member id of each row still being iterated
    live = np.ones(Bn, dtype=bool)  # rows not yet frozen
    z = z_all.copy()

    for it in range(1, params.max_iters + 1):
        x_bar = dft(z)
        x_occ, fit, rs = prox_f(x_bar[..., occ])
        x_bar[..., occ] = x_occ
        x_t = idft(x_bar)
        step2, x2, peak2, grad_l1 = kernels.drs_time_step(x_t, z, lam_g, relax)

        obj = fit + gamma * peak2
        ids = active[live]
        trace[it - 1, ids] = obj[live]
        iters[ids] = it
        better = live & (obj < best_obj[active])
        if better.any():
            best[active[better]] = x_bar[better]
            best_obj[active[better]] = obj[better]

        scale = np.maximum(np.abs(obj), 1e-300)
        if it > 1:
            flat = (np.abs(prev[active] - obj) <= tol * scale) & (step2 <= tol * np.maximum(x2, 1e-300))
            calm[active] = np.where(flat, calm[active] + 1, 0)
        done = live & (calm[active] >= PATIENCE)
        if gamma > 0:
            # (z - x) / tau is a gradient of the data fit at x; it is a dual
            # point, and the Fenchel bound certifies obj - optimum <= gap
            lower = 2.0 * rs - fit - (grad_l1 / tau) ** 2 / (4.0 * gamma)
            done |= live & (obj - lower <= tol * scale)
        if done.any():
            converged[active[done]] = True
            z_all[active[done]] = z[done]
            live &= ~done
            if not live.any():
                break
            # frozen rows keep iterating harmlessly until enough pile up to
            # pay for a copy
            if np.count_nonzero(~live) * 4 >= live.size:
                active = active[live]
                z = np.ascontiguousarray(z[live])
                prox_f = prox_f.subset(live)
                obj = obj[live]
                live = np.ones(active.size, dtype=bool)
        prev[active] = obj
    if live.any():
        z_all[active[live]] = z[live]
        log.debug("relaxed solver hit max_iters=%d on %d of %d problems", params.max_iters, live.sum(), Bn)

    traces = [list(trace[: iters[j], j]) for j in range(Bn)]
    if single:
        return RelaxedPrecoder(best[0], traces[0], int(iters[0]), bool(converged[0]), z_all[0])
    return RelaxedPrecoder(best, traces, iters, converged, z_all)


def time_domain(B_bar: np.ndarray) -> np.ndarray:
    """Time-domain waveform B = B_bar F^H."""
    return idft(B_bar)


def classical_precode(H_bar: np.ndarray, grid: SymbolGrid, config: SystemConfig, sigma2: float = 1.0, *,
                      dac_bits: int | None = None, relaxed: RelaxedPrecoder | None = None):
    """Maximum-power baseline: every antenna transmits at sqrt(P_ant).

    Returns a :class:`~cfce.power_control.PrecodeResult` whose ``X`` is the
    unit-amplitude quantized waveform; the physical amplitude sqrt(P_ant)
    is carried by ``rho``.  A precomputed ``relaxed`` solution (it does not
    depend on the DAC resolution) may be passed to skip the solve.
    """
    from .power_control import PowerState, PrecodeResult, update_beta

    p = config.dac_bits if dac_bits is None else dac_bits
    if relaxed is None:
        gamma = derive_gamma(config, sigma2, config.P_ant)
        relaxed = solve_relaxed(H_bar, grid, gamma, config.solver_params)
    X = quantize_ce(time_domain(relaxed.B_bar), CEAlphabet(p, 1.0))
    X_bar = dft(X)
    rho_max = np.sqrt(config.P_ant)
    occ = grid.occupied
    u = rho_max * np.einsum("...nkm,...mn->...nk", _occupied_channel(H_bar, occ), X_bar[..., occ])
    beta = update_beta(u, grid.s_occ, sigma2)
    rho = np.full(X.shape[:-2] + (config.L,), rho_max)
    return PrecodeResult(B_bar=relaxed.B_bar, X=X, X_bar=X_bar, power=PowerState(rho, beta),
                         objective_trace=[] if not grid.batched else [[] for _ in range(grid.batch_size)],
                         solver_runs=[relaxed])
