"""Compiled vs NumPy kernels, one kernel at a time and inside a full solve.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 125]

Problem sizes follow the desk deployment (M = 18, S = 64, K = 4, S_I = 40).
"""

import argparse
import timeit

import numpy as np

from cfce import kernels
from cfce.precoder import solve_relaxed
from cfce.scenario import SystemConfig, derive_gamma, rng_stream
from cfce.waveform import build_symbol_grid, stack_grids


def _swap(impl):
    for name in ("sq_inf_prox", "sq_inf_prox_batch", "drs_time_step", "quantize_phase",
                 "phase_index", "rho_sweep", "rho_sweep_batch", "sq_inf_threshold"):
        setattr(kernels, name, getattr(impl, name))


def kernel_cases(rng, B, M, S, L, n, K):
    cplx = lambda *shape: rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    v = cplx(B, M, S)
    x = cplx(B, M, S)
    a = cplx(B, L, n, K)
    s = cplx(B, n, K)
    rho = np.full((B, L), 0.01)
    beta = np.full(B, 2.0)
    return {
        "sq_inf_prox_batch": lambda k: k.sq_inf_prox_batch(v, 3.0),
        "drs_time_step": lambda k: k.drs_time_step(x, v.copy(), 3.0, 1.9),
        "quantize_phase": lambda k: k.quantize_phase(v, 2),
        "rho_sweep_batch": lambda k: k.rho_sweep_batch(a, s, rho, beta, 0.01),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=125, help="OFDM symbols solved together")
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the NumPy backend is available")
    cfg = SystemConfig()
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng, args.batch, cfg.M, cfg.S, cfg.L, cfg.S_I, cfg.K)

    print(f"{'kernel':<22}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases.items():
        times = {}
        for b, impl in backends.items():
            times[b] = min(timeit.repeat(lambda: fn(impl), number=3, repeat=args.repeat)) / 3
        line = f"{name:<22}" + "".join(f"{times[b] * 1e3:>11.3f} ms" for b in backends)
        if len(times) == 2:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)

    # end-to-end relaxed solve on a random desk channel, all symbols batched
    H = (rng.standard_normal((cfg.S, cfg.K, cfg.M)) + 1j * rng.standard_normal((cfg.S, cfg.K, cfg.M))) * 30.0
    grid = stack_grids(build_symbol_grid(cfg.K, cfg.occupied_set, cfg.S, rng_stream(0, 0, "symbols", i))
                       for i in range(args.batch))
    gamma = derive_gamma(cfg, 1.0, 1.0)
    saved = {name: getattr(kernels, name) for name in ("sq_inf_prox", "sq_inf_prox_batch", "drs_time_step",
                                                      "quantize_phase", "phase_index", "rho_sweep",
                                                      "rho_sweep_batch", "sq_inf_threshold")}
    times, objs = {}, {}
    try:
        for b, impl in backends.items():
            _swap(impl)
            times[b] = min(timeit.repeat(lambda: solve_relaxed(H, grid, gamma), number=1, repeat=max(1, args.repeat // 2)))
            objs[b] = solve_relaxed(H, grid, gamma).objective
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)
    line = f"{'solve_relaxed (B=%d)' % args.batch:<22}" + "".join(f"{times[b] * 1e3:>11.1f} ms" for b in backends)
    if len(times) == 2:
        line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)
        print(f"max objective difference between backends: {np.max(np.abs(objs['python'] - objs['cython'])):.2e}")
    else:
        print(line)


if __name__ == "__main__":
    main()
