"""Scenario configuration, deployment geometry and random streams.

All simulations run in normalized units: channel coefficients are divided
by the noise standard deviation so the noise power is exactly one.  Every
SNR-dependent quantity is unchanged by this, and ``P_ant`` keeps its
physical meaning (watts) relative to the physical noise power.
"""

from __future__ import annotations

import dataclasses
import math
import zlib
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import ConfigError, NonSquareAPCount

# Thermal noise density in dBW/Hz including the kT constant.
NOISE_DENSITY_DB = -204.0

PURPOSES = ("geometry", "shadowing", "pdp", "taps", "symbols", "noise")


@dataclass(frozen=True)
class SolverParams:
    """Douglas-Rachford settings for the relaxed precoding problem.

    ``step_size`` is dimensionless: the proximal step is
    ``step_size * M * S / (2 * gamma)``, which keeps the iteration count
    roughly independent of SNR and of the overall channel scaling.
    """

    max_iters: int = 200
    step_size: float = 0.5
    tol: float = 1e-6
    over_relaxation: float = 1.9

    def violations(self) -> list[str]:
        out = []
        if self.max_iters < 1:
            out.append("solver max_iters must be >= 1")
        if not self.tol > 0:
            out.append("solver tol must be > 0")
        if not self.step_size > 0:
            out.append("solver step_size must be > 0")
        if not 0 < self.over_relaxation <= 2:
            out.append("solver over_relaxation must lie in (0, 2]")
        return out


def parse_index_set(spec: Any) -> tuple[int, ...]:
    """Parse an occupied-subcarrier description into a tuple of indices.

    Accepts a list of ints, a list of ``[first, last]`` inclusive ranges
    (mixed freely with ints) or a string such as ``"1-600,1400-1999"``.
    Order and duplicates are preserved so that validation can report them.
    """
    if isinstance(spec, str):
        items: list[Any] = []
        for chunk in spec.replace(" ", "").split(","):
            if not chunk:
                continue
            if "-" in chunk:
                lo, hi = chunk.split("-", 1)
                items.append([int(lo), int(hi)])
            else:
                items.append(int(chunk))
        spec = items
    out: list[int] = []
    for item in spec:
        if isinstance(item, (list, tuple)):
            if len(item) != 2:
                raise ConfigError(f"occupied range {item!r} must be [first, last]")
            lo, hi = int(item[0]), int(item[1])
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(item))
    return tuple(out)


def compress_index_set(indices: Sequence[int]) -> list:
    """Inverse of :func:`parse_index_set` producing inclusive ranges."""
    out: list = []
    for i in indices:
        if out and isinstance(out[-1], list) and out[-1][1] == i - 1:
            out[-1][1] = i
        else:
            out.append([i, i])
    return out


@dataclass(frozen=True)
class SystemConfig:
    L: int = 9
    N: int = 2
    K: int = 4
    S: int = 64
    occupied_set: tuple[int, ...] = tuple(range(1, 21)) + tuple(range(44, 64))
    delta_f: float = 15e3
    T: int = 4
    dac_bits: int = 2
    P_ant: float = 1.0
    noise_figure_db: float = 5.0
    area_side_m: float = 150.0
    ap_ue_height_m: float = 10.0
    shadow_std_db: float = 4.0
    asd_deg: float = 15.0
    n_setups: int = 10
    ofdm_symbols_per_setup: int = 10
    outer_iters: int = 5
    solver_params: SolverParams = field(default_factory=SolverParams)
    master_seed: int = 0
    ap_layout: str = "grid"
    freeze_rho: bool = False
    rho_from_quantized: bool = True

    def __post_init__(self):
        object.__setattr__(self, "occupied_set", tuple(int(i) for i in self.occupied_set))
        problems = self.violations()
        if problems:
            raise ConfigError("; ".join(problems), problems)

    @property
    def M(self) -> int:
        return self.L * self.N

    @property
    def S_I(self) -> int:
        return len(self.occupied_set)

    @property
    def guard_set(self) -> tuple[int, ...]:
        occ = set(self.occupied_set)
        return tuple(i for i in range(self.S) if i not in occ)

    @property
    def grid_side(self) -> int | None:
        r = math.isqrt(self.L) if self.L > 0 else 0
        return r if r * r == self.L else None

    def violations(self) -> list[str]:
        out = []
        for name in ("L", "N", "K", "S", "n_setups", "ofdm_symbols_per_setup", "outer_iters"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if self.T < 0:
            out.append("T must be >= 0")
        if self.T + 1 > self.S:
            out.append(f"T + 1 = {self.T + 1} exceeds S = {self.S} (cyclic prefix validity)")
        if self.dac_bits < 1:
            out.append("dac_bits must be >= 1")
        if not self.P_ant > 0:
            out.append("P_ant must be > 0")
        if not self.delta_f > 0:
            out.append("delta_f must be > 0")
        if not self.area_side_m > 0:
            out.append("area_side_m must be > 0")
        if not self.ap_ue_height_m > 0:
            out.append("ap_ue_height_m must be > 0")
        if self.shadow_std_db < 0 or self.asd_deg < 0:
            out.append("shadow_std_db and asd_deg must be >= 0")
        occ = self.occupied_set
        if len(occ) == 0:
            out.append("occupied_set is empty")
        if len(set(occ)) != len(occ):
            dup = sorted({i for i in occ if occ.count(i) > 1})
            out.append(f"occupied_set has repeated indices {dup[:10]}")
        bad = [i for i in occ if not 0 <= i < self.S]
        if bad:
            out.append(f"occupied_set indices outside [0, {self.S - 1}]: {bad[:10]}")
        if self.ap_layout not in ("grid", "random"):
            out.append(f"ap_layout must be 'grid' or 'random', got {self.ap_layout!r}")
        if not 0 <= self.master_seed < 2**64:
            out.append("master_seed must be an unsigned 64-bit integer")
        out.extend(self.solver_params.violations())
        return out

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["occupied_set"] = compress_index_set(self.occupied_set)
        return d


def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def config_from_dict(raw: Mapping[str, Any]) -> SystemConfig:
    """Build a config from a flat or sectioned mapping.

    Nested mappings other than ``solver_params``/``solver`` are treated as
    cosmetic sections and flattened.  Unknown keys raise ConfigError.
    """
    flat: dict[str, Any] = {}
    solver: dict[str, Any] = {}
    sys_names = _field_names(SystemConfig)
    solver_names = _field_names(SolverParams)

    def absorb(mapping, where):
        for key, value in mapping.items():
            if key in ("solver_params", "solver"):
                if not isinstance(value, Mapping):
                    raise ConfigError(f"{where}{key} must be a mapping")
                for sk, sv in value.items():
                    if sk not in solver_names:
                        raise ConfigError(f"unknown solver key {sk!r}")
                    solver[sk] = sv
            elif isinstance(value, Mapping):
                absorb(value, f"{where}{key}.")
            elif key in sys_names:
                if key in flat:
                    raise ConfigError(f"key {key!r} given more than once")
                flat[key] = value
            else:
                raise ConfigError(f"unknown config key {where}{key!r}")

    absorb(raw, "")
    if "occupied_set" in flat:
        flat["occupied_set"] = parse_index_set(flat["occupied_set"])
    try:
        for key in ("L", "N", "K", "S", "T", "dac_bits", "n_setups",
                    "ofdm_symbols_per_setup", "outer_iters", "master_seed"):
            if key in flat:
                v = flat[key]
                if isinstance(v, bool) or int(v) != v:
                    raise ConfigError(f"{key} must be an integer, got {v!r}")
                flat[key] = int(v)
        for key in ("delta_f", "P_ant", "noise_figure_db", "area_side_m",
                    "ap_ue_height_m", "shadow_std_db", "asd_deg"):
            if key in flat:
                flat[key] = float(flat[key])
        for key in ("freeze_rho", "rho_from_quantized"):
            if key in flat and not isinstance(flat[key], bool):
                raise ConfigError(f"{key} must be true or false")
        params = SolverParams(
            **{k: (int(v) if k == "max_iters" else float(v)) for k, v in solver.items()}
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return SystemConfig(solver_params=params, **flat)


def load_config(path) -> SystemConfig:
    """Read a YAML or JSON config file (JSON is valid YAML).

    A run manifest is also accepted; its ``config`` entry is used.
    """
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError(f"config {path} must contain a mapping")
    if "manifest_version" in raw and "config" in raw:
        raw = raw["config"]
    return config_from_dict(raw)


def full_scale_config(**overrides) -> SystemConfig:
    """Full-scale deployment parameters (49 APs, 2000 subcarriers)."""
    base = dict(
        L=49, N=4, K=25, S=2000,
        occupied_set=tuple(range(1, 601)) + tuple(range(1400, 2000)),
        delta_f=15e3, T=4, area_side_m=350.0, ap_ue_height_m=10.0,
        shadow_std_db=4.0, asd_deg=15.0, noise_figure_db=5.0, n_setups=300,
    )
    base.update(overrides)
    return SystemConfig(**base)


# ---------------------------------------------------------------------------
# random streams

def rng_stream(master_seed: int, setup_index: int, purpose: str, *extra: int) -> np.random.Generator:
    """Deterministic generator keyed by (seed, setup, purpose, extra...).

    Purpose tags are hashed with CRC32 so the key is stable across runs and
    platforms; distinct keys give independent SeedSequence children.
    """
    tag = zlib.crc32(purpose.encode("ascii"))
    seq = np.random.SeedSequence(int(master_seed), spawn_key=(int(setup_index), tag, *map(int, extra)))
    return np.random.Generator(np.random.PCG64(seq))


# ---------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class SetupGeometry:
    ap_positions: np.ndarray  # (L, 2) meters
    ue_positions: np.ndarray  # (K, 2) meters
    height_diff_m: float

    def distances(self) -> np.ndarray:
        """3D AP-UE distances, shape (K, L)."""
        diff = self.ue_positions[:, None, :] - self.ap_positions[None, :, :]
        return np.sqrt(np.sum(diff**2, axis=-1) + self.height_diff_m**2)

    def bearings(self) -> np.ndarray:
        """Azimuth of each UE seen from each AP in radians, shape (K, L)."""
        diff = self.ue_positions[:, None, :] - self.ap_positions[None, :, :]
        return np.arctan2(diff[..., 1], diff[..., 0])


def check_layout(config: SystemConfig) -> None:
    if config.ap_layout == "grid" and config.grid_side is None:
        raise NonSquareAPCount(
            f"grid AP layout needs a square AP count, got L = {config.L}"
        )


def build_geometry(config: SystemConfig, rng: np.random.Generator) -> SetupGeometry:
    check_layout(config)
    a = config.area_side_m
    if config.ap_layout == "grid":
        n = config.grid_side
        step = a / n
        idx = np.arange(config.L)
        aps = np.column_stack([(idx % n + 0.5) * step, (idx // n + 0.5) * step])
    else:
        aps = rng.uniform(0.0, a, size=(config.L, 2))
    ues = rng.uniform(0.0, a, size=(config.K, 2))
    return SetupGeometry(aps, ues, float(config.ap_ue_height_m))


# ---------------------------------------------------------------------------
# derived constants

def derive_noise_power(config: SystemConfig) -> float:
    """Noise power in watts over the full band ``S * delta_f``."""
    bandwidth = config.S * config.delta_f
    return 10.0 ** ((NOISE_DENSITY_DB + 10.0 * math.log10(bandwidth) + config.noise_figure_db) / 10.0)


def derive_gamma(config: SystemConfig, sigma2: float, p_ant: float) -> float:
    """Weight of the squared infinity-norm penalty, sigma^2 S_I K / p_ant."""
    return sigma2 * config.S_I * config.K / p_ant
