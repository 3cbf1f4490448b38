"""Setup generation and multi-setup experiment orchestration."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import (ChannelRealization, CorrelationSet, LargeScale, PowerDelayProfile,
                      generate_pdp, generate_taps, large_scale_fading, spatial_correlation)
from .link_eval import BerReport, evaluate_setup_all
from .scenario import SetupGeometry, SystemConfig, build_geometry, derive_noise_power, rng_stream

log = logging.getLogger(__name__)


@dataclass
class Setup:
    setup_id: int
    geometry: SetupGeometry
    large_scale: LargeScale
    correlation: CorrelationSet
    pdp: PowerDelayProfile
    channel: ChannelRealization  # normalized: noise power is one
    sigma2_w: float  # physical noise power used for the normalization


def build_setup(config: SystemConfig, setup_id: int) -> Setup:
    seed = config.master_seed
    geometry = build_geometry(config, rng_stream(seed, setup_id, "geometry"))
    ls = large_scale_fading(geometry, config.shadow_std_db, rng_stream(seed, setup_id, "shadowing"))
    corr = spatial_correlation(geometry, ls, config.asd_deg, config.N)
    pdp = generate_pdp(config.T, rng_stream(seed, setup_id, "pdp"))
    physical = generate_taps(corr, pdp, rng_stream(seed, setup_id, "taps"))
    sigma2 = derive_noise_power(config)
    return Setup(setup_id, geometry, ls, corr, pdp, physical.scaled(1.0 / math.sqrt(sigma2)), sigma2)


@dataclass
class SetupResult:
    setup_id: int
    ap_positions: np.ndarray
    ue_positions: np.ndarray
    reports: list[BerReport]


def run_setup(config: SystemConfig, setup_id: int, schemes, dac_bits, dump_dir=None) -> SetupResult:
    setup = build_setup(config, setup_id)
    if dump_dir is not None:
        from pathlib import Path

        from .channel import save_channel

        save_channel(Path(dump_dir) / f"channel_setup{setup_id:04d}.npz", setup.channel,
                     seed=config.master_seed, setup_index=setup_id,
                     beta_kl=setup.large_scale.beta_kl, pdp=setup.pdp.p_tilde,
                     noise_power_w=setup.sigma2_w)
    reports = evaluate_setup_all(setup.channel, config, schemes, dac_bits, setup_id)
    return SetupResult(setup_id, setup.geometry.ap_positions, setup.geometry.ue_positions, reports)


def _run_setup_args(args):
    return run_setup(*args)


def run_experiment(config: SystemConfig, schemes, dac_bits, jobs: int = 1, progress=None, dump_dir=None) -> list[SetupResult]:
    """Evaluate every setup; results come back ordered by setup id."""
    tasks = [(config, i, tuple(schemes), tuple(dac_bits), dump_dir) for i in range(config.n_setups)]
    results: list[SetupResult] = []
    if jobs <= 1:
        for i, task in enumerate(tasks):
            results.append(_run_setup_args(task))
            if progress:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for i, res in enumerate(pool.map(_run_setup_args, tasks)):
                results.append(res)
                if progress:
                    progress(i + 1, len(tasks))
    results.sort(key=lambda r: r.setup_id)
    return results
