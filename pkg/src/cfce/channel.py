"""Large-scale fading, local-scattering correlation and tapped-delay channels."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, FactorizationFailure
from .scenario import SetupGeometry

PATHLOSS_AT_1M_DB = -30.5
PATHLOSS_EXPONENT_DB = 36.7
QUADRATURE_NODES = 41

# Relative tolerance used when clamping tiny negative eigenvalues.
PSD_SLACK = 1e-10


@dataclass(frozen=True)
class LargeScale:
    beta_kl: np.ndarray  # (K, L) linear gains

    @property
    def db(self) -> np.ndarray:
        return 10.0 * np.log10(self.beta_kl)


@dataclass(frozen=True)
class CorrelationSet:
    R: np.ndarray  # (K, L, N, N)


@dataclass(frozen=True)
class PowerDelayProfile:
    p_tilde: np.ndarray  # (T+1,)


@dataclass
class ChannelRealization:
    """Time-domain taps H[t], each K x M with column block l holding AP l."""

    taps: np.ndarray  # (T+1, K, M)
    N: int
    _freq: np.ndarray | None = None
    _freq_S: int | None = None

    @property
    def K(self) -> int:
        return self.taps.shape[1]

    @property
    def M(self) -> int:
        return self.taps.shape[2]

    @property
    def L(self) -> int:
        return self.M // self.N

    @property
    def T(self) -> int:
        return self.taps.shape[0] - 1

    def freq(self, S: int) -> np.ndarray:
        if self._freq is None or self._freq_S != S:
            self._freq = frequency_response(self, S)
            self._freq_S = S
        return self._freq

    def scaled(self, factor: float) -> "ChannelRealization":
        return ChannelRealization(self.taps * factor, self.N)


def pathloss_db(d: np.ndarray) -> np.ndarray:
    return PATHLOSS_AT_1M_DB - PATHLOSS_EXPONENT_DB * np.log10(d)


def large_scale_fading(geometry: SetupGeometry, shadow_std_db: float, rng: np.random.Generator) -> LargeScale:
    d = geometry.distances()
    z = rng.normal(0.0, shadow_std_db, size=d.shape) if shadow_std_db > 0 else np.zeros_like(d)
    return LargeScale(10.0 ** ((pathloss_db(d) + z) / 10.0))


def local_scattering_ula(N: int, azimuth: float, asd_rad: float, nodes: int = QUADRATURE_NODES) -> np.ndarray:
    """Unit-gain correlation of a half-wavelength ULA under Gaussian azimuth spread.

    ``[R]_{m,n} = E{exp(j*pi*(m-n)*sin(azimuth + delta))}`` with
    ``delta ~ N(0, asd_rad^2)``, evaluated with Gauss-Hermite quadrature.
    """
    dist = np.arange(N)[:, None] - np.arange(N)[None, :]
    if asd_rad == 0.0:
        a = np.exp(1j * np.pi * np.arange(N) * np.sin(azimuth))
        return np.outer(a, a.conj())
    x, w = np.polynomial.hermite.hermgauss(nodes)
    angles = azimuth + np.sqrt(2.0) * asd_rad * x
    phase = np.exp(1j * np.pi * dist[..., None] * np.sin(angles))
    R = phase @ w / np.sqrt(np.pi)
    return 0.5 * (R + R.conj().T)


def spatial_correlation(geometry: SetupGeometry, large_scale: LargeScale, asd_deg: float, N: int) -> CorrelationSet:
    bearings = geometry.bearings()
    K, L = bearings.shape
    asd = np.deg2rad(asd_deg)
    R = np.empty((K, L, N, N), dtype=complex)
    for k in range(K):
        for l in range(L):
            R[k, l] = large_scale.beta_kl[k, l] * local_scattering_ula(N, bearings[k, l], asd)
    return CorrelationSet(R)


def generate_pdp(T: int, rng: np.random.Generator) -> PowerDelayProfile:
    draws = rng.uniform(0.0, 1.0, size=T + 1)
    return pdp_from_draws(draws)


def pdp_from_draws(draws: np.ndarray) -> PowerDelayProfile:
    p = np.sort(np.asarray(draws, dtype=float))[::-1]
    return PowerDelayProfile(p / p.sum())


def psd_sqrt(R: np.ndarray) -> np.ndarray:
    """Hermitian square root with tiny negative eigenvalues clamped to zero."""
    w, V = np.linalg.eigh(R)
    slack = PSD_SLACK * max(np.real(np.trace(R)), 0.0)
    if w.min() < -slack:
        raise FactorizationFailure(f"correlation matrix indefinite: min eigenvalue {w.min():.3e}")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


def generate_taps(corr: CorrelationSet, pdp: PowerDelayProfile, rng: np.random.Generator) -> ChannelRealization:
    K, L, N, _ = corr.R.shape
    n_taps = pdp.p_tilde.size
    roots = np.empty_like(corr.R)
    for k in range(K):
        for l in range(L):
            roots[k, l] = psd_sqrt(corr.R[k, l])
    g = (rng.standard_normal((n_taps, K, L, N)) + 1j * rng.standard_normal((n_taps, K, L, N))) / np.sqrt(2.0)
    h = np.einsum("klmn,tkln->tklm", roots, g) * np.sqrt(pdp.p_tilde)[:, None, None, None]
    return ChannelRealization(h.reshape(n_taps, K, L * N), N)


def frequency_response(real: ChannelRealization, S: int) -> np.ndarray:
    """H_bar[nu] = sum_t H[t] exp(-j nu 2 pi t / S), returned as (S, K, M)."""
    if real.T + 1 > S:
        raise DimensionMismatch(f"{real.T + 1} taps do not fit in S = {S}")
    return np.fft.fft(real.taps, n=S, axis=0)


# ---------------------------------------------------------------------------
# channel dump files

DUMP_FORMAT = "cfce-channel-v1"


def save_channel(path, real: ChannelRealization, *, seed: int, setup_index: int, **extra) -> None:
    """Write taps plus a replay header to a compressed ``.npz`` file.

    Keys: ``format``, ``L``, ``N``, ``K``, ``T``, ``seed``, ``setup_index``,
    ``taps`` of shape (T+1, K, L*N) complex128, and any ``extra`` arrays
    (e.g. ``beta_kl``, ``pdp``).
    """
    np.savez_compressed(
        Path(path),
        format=np.array(DUMP_FORMAT),
        L=real.L, N=real.N, K=real.K, T=real.T,
        seed=np.uint64(seed), setup_index=setup_index,
        taps=real.taps, **extra,
    )


def load_channel(path) -> tuple[ChannelRealization, dict]:
    with np.load(Path(path)) as data:
        if str(data["format"]) != DUMP_FORMAT:
            raise ValueError(f"{path}: not a {DUMP_FORMAT} file")
        header = {k: data[k].item() for k in ("L", "N", "K", "T", "seed", "setup_index")}
        extra = {k: data[k] for k in data.files if k not in header and k not in ("format", "taps")}
        taps = data["taps"]
    real = ChannelRealization(taps, int(header["N"]))
    if real.L != header["L"] or real.K != header["K"] or real.T != header["T"]:
        raise ValueError(f"{path}: header does not match tap array shape")
    return real, {**header, **extra}
