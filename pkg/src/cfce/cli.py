"""Command-line front end.

    cfce run --config desk.yaml --out results/
    cfce validate --config desk.yaml
    cfce export-plotdata results/

Data goes to files only; progress and diagnostics go to stderr.  Exit
codes: 0 success, 1 configuration or input error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .errors import ConfigError, MissingManifest
from .link_eval import SCHEMES, aggregate_sorted
from .scenario import SystemConfig, check_layout, config_from_dict, derive_gamma, derive_noise_power

CSV_SCHEMA_VERSION = 1
MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

BER_COLUMNS = ("setup_id", "scheme", "dac_bits", "ue_rank", "ber")
CURVE_COLUMNS = ("scheme", "dac_bits", "ue_rank", "mean_ber")
POWER_COLUMNS = ("setup_id", "scheme", "dac_bits", "ap_index", "ap_x", "ap_y", "p_l_over_P_ant")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def fmt(x) -> str:
    """Round-trip float formatting, identical on every platform."""
    if isinstance(x, (int, np.integer, str)):
        return str(x)
    return format(float(x), ".17g")


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def _parse_list(text: str, cast=str) -> tuple:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError(f"empty list {text!r}")
    try:
        return tuple(cast(t) for t in items)
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}: {exc}") from exc


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _read_raw(path) -> dict:
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must contain a mapping")
    return raw


def _progress(done: int, total: int) -> None:
    print(f"[cfce] setup {done}/{total}", file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# run

def resolve_run(args) -> tuple[SystemConfig, tuple, tuple]:
    raw = _read_raw(args.config) if args.config else {}
    schemes, dac_bits = None, None
    if "manifest_version" in raw and "config" in raw:
        schemes = tuple(raw.get("schemes") or ()) or None
        dac_bits = tuple(raw.get("dac_bits") or ()) or None
        raw = raw["config"]
    config = config_from_dict(raw)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if args.setups is not None:
        changes["n_setups"] = args.setups
    if args.symbols is not None:
        changes["ofdm_symbols_per_setup"] = args.symbols
    if args.freeze_rho is not None:
        changes["freeze_rho"] = _parse_bool(args.freeze_rho)
    if changes:
        config = config.replace(**changes)
    if args.schemes:
        schemes = _parse_list(args.schemes)
    if args.dac_bits:
        dac_bits = _parse_list(args.dac_bits, int)
    schemes = schemes or SCHEMES
    dac_bits = dac_bits or (config.dac_bits,)
    bad = [s for s in schemes if s not in SCHEMES]
    if bad:
        raise ConfigError(f"unknown scheme(s) {bad}; expected {list(SCHEMES)}")
    if any(p < 1 for p in dac_bits):
        raise ConfigError("dac bits must be >= 1")
    check_layout(config)
    return config, tuple(schemes), tuple(int(p) for p in dac_bits)


def ber_rows(results):
    for res in results:
        for rep in res.reports:
            for rank, ber in enumerate(rep.sorted_ber, start=1):
                yield (rep.setup_id, rep.scheme, rep.dac_bits, rank, ber)


def curve_rows(results, schemes, dac_bits):
    for p in dac_bits:
        for scheme in schemes:
            reps = [r for res in results for r in res.reports if r.scheme == scheme and r.dac_bits == p]
            curve = aggregate_sorted(reps)
            for rank, v in enumerate(curve.mean_ber_by_rank, start=1):
                yield (scheme, p, rank, v)


def power_rows(results, config: SystemConfig):
    for res in results:
        for rep in res.reports:
            # mean over the setup's OFDM symbols of p_l / P_ant
            share = np.mean(np.asarray(rep.rho_history) ** 2, axis=0) / config.P_ant
            share = np.clip(share, 0.0, 1.0)
            for l, (x, y) in enumerate(res.ap_positions):
                yield (res.setup_id, rep.scheme, rep.dac_bits, l, x, y, share[l])


def write_outputs(out: Path, results, config, schemes, dac_bits) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    files = {"ber_per_ue": "ber_per_ue.csv", "sorted_curve": "sorted_curve.csv", "power_map": "power_map.csv"}
    _write_csv(out / files["ber_per_ue"], BER_COLUMNS, ber_rows(results))
    _write_csv(out / files["sorted_curve"], CURVE_COLUMNS, curve_rows(results, schemes, dac_bits))
    _write_csv(out / files["power_map"], POWER_COLUMNS, power_rows(results, config))
    return files


def build_manifest(config, schemes, dac_bits, files, duration, jobs) -> dict:
    return {
        "manifest_version": MANIFEST_VERSION,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "code_version": __version__,
        "master_seed": config.master_seed,
        "schemes": list(schemes),
        "dac_bits": list(dac_bits),
        "config": config.to_dict(),
        "files": files,
        "csv_columns": {"ber_per_ue": list(BER_COLUMNS), "sorted_curve": list(CURVE_COLUMNS),
                        "power_map": list(POWER_COLUMNS)},
        "duration_s": duration,
        "jobs": jobs,
        "platform": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "machine": platform.machine(),
            "kernel_backend": kernels.BACKEND,
            "note": "CSV bodies are reproducible for a fixed config and seed on a given "
                    "numpy/BLAS build; other FFT or BLAS builds may differ in the last digits.",
        },
    }


def cmd_run(args) -> int:
    from .experiment import run_experiment

    config, schemes, dac_bits = resolve_run(args)
    jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
    out = Path(args.out)
    print(f"[cfce] {config.n_setups} setups x {len(schemes)} schemes x p={list(dac_bits)}, "
          f"{config.ofdm_symbols_per_setup} symbols/setup, backend={kernels.BACKEND}, jobs={jobs}",
          file=sys.stderr)
    dump = None
    if args.dump_channels:
        dump = out / "channels"
        dump.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    results = run_experiment(config, schemes, dac_bits, jobs=jobs, progress=_progress, dump_dir=dump)
    duration = time.perf_counter() - t0
    files = write_outputs(out, results, config, schemes, dac_bits)
    if dump is not None:
        files["channels"] = "channels"
    manifest = build_manifest(config, schemes, dac_bits, files, duration, jobs)
    with open(out / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    fallbacks = sum(r.fallbacks for res in results for r in res.reports)
    if fallbacks:
        print(f"[cfce] {fallbacks} symbol(s) fell back to the baseline (receive scale collapsed)", file=sys.stderr)
    print(f"[cfce] done in {duration:.1f} s -> {out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# validate

def cmd_validate(args) -> int:
    raw = _read_raw(args.config)
    if "manifest_version" in raw and "config" in raw:
        raw = raw["config"]
    try:
        config = config_from_dict(raw)
        check_layout(config)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return EXIT_CONFIG
    sigma2 = derive_noise_power(config)
    print(f"M = {config.M}", file=sys.stderr)
    print(f"S_I = {config.S_I}", file=sys.stderr)
    print(f"sigma2 = {sigma2:.6e} W ({10 * np.log10(sigma2):.3f} dBW)", file=sys.stderr)
    print(f"gamma = {derive_gamma(config, 1.0, config.P_ant):.6g} (normalized units, sigma2 = 1)", file=sys.stderr)
    print("configuration OK", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# export-plotdata

def load_manifest(results_dir) -> dict:
    path = Path(results_dir) / MANIFEST_NAME
    if not path.is_file():
        raise MissingManifest(f"no {MANIFEST_NAME} in {results_dir}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _read_csv(path: Path):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def cmd_export_plotdata(args) -> int:
    src = Path(args.results_dir)
    manifest = load_manifest(src)
    out = Path(args.out) if args.out else src / "plotdata"
    out.mkdir(parents=True, exist_ok=True)
    files = manifest["files"]

    curves: dict[str, dict[int, str]] = {}
    for row in _read_csv(src / files["sorted_curve"]):
        label = f"{row['scheme']}_p{row['dac_bits']}"
        curves.setdefault(label, {})[int(row["ue_rank"])] = row["mean_ber"]
    labels = list(curves)
    ranks = sorted({r for c in curves.values() for r in c})
    _write_csv(out / "sorted_ber_curves.csv", ["ue_rank"] + labels,
               ([r] + [curves[lab].get(r, "") for lab in labels] for r in ranks))

    maps = _read_csv(src / files["power_map"])
    _write_csv(out / "power_maps.csv", ["label"] + list(POWER_COLUMNS),
               ([f"setup{row['setup_id']}_{row['scheme']}_p{row['dac_bits']}"] + [row[c] for c in POWER_COLUMNS]
                for row in maps))
    print(f"[cfce] {len(labels)} curve(s), {len(maps)} power-map row(s) -> {out}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cfce", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"cfce {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate setups and write BER / power-map CSVs")
    run.add_argument("--config", help="YAML or JSON config, or a previous run's manifest.json")
    run.add_argument("--seed", type=int, help="master seed (overrides config)")
    run.add_argument("--setups", type=int, help="number of setups")
    run.add_argument("--schemes", help="comma list of baseline,power_control")
    run.add_argument("--dac-bits", help="comma list of DAC resolutions, e.g. 1,2,3")
    run.add_argument("--out", default="results", help="output directory")
    run.add_argument("--jobs", type=int, default=0, help="parallel setup workers (default: all cores)")
    run.add_argument("--freeze-rho", help="hold AP powers fixed across a setup's symbols (true/false)")
    run.add_argument("--symbols", type=int, help="OFDM symbols per setup")
    run.add_argument("--dump-channels", action="store_true", help="also save every setup's channel taps")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config and print derived quantities")
    val.add_argument("config_path", nargs="?", help="config file")
    val.add_argument("--config", dest="config_opt", help="config file")
    val.set_defaults(func=cmd_validate)

    exp = sub.add_parser("export-plotdata", help="re-emit results as plot-ready columnar CSVs")
    exp.add_argument("results_dir")
    exp.add_argument("--out", help="output directory (default: RESULTS_DIR/plotdata)")
    exp.set_defaults(func=cmd_export_plotdata)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate":
        args.config = args.config_opt or args.config_path
        if not args.config:
            parser.error("validate needs a config file")
    try:
        return args.func(args)
    except (ConfigError, MissingManifest) as exc:
        print(f"cfce: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KeyboardInterrupt:
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to the runtime exit code
        print(f"cfce: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
