"""Command-line entry point: ``lpns2d run ...`` and ``lpns2d properties``."""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import MAX_SWEEP_POINTS, RunConfig, apply_overrides, dump_config, load_config, parse_sweep, validate
from .errors import LpnsError, NumericalError, ValidationError
from .scenarios import fmt, run_scenario, write_rows

log = logging.getLogger("lpns2d")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
MANIFEST = "MANIFEST.sha256"

# flags that map straight onto config keys
OVERRIDE_FLAGS = ("sigma", "mu", "n", "L", "T", "dt", "p", "q", "u0_amp", "kappa", "molly_cells", "law", "shape", "radius")


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out: Path) -> Path:
    """Hash every file under ``out`` (except the manifest itself) in sorted order."""
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    lines = [f"{sha256(p)}  {p.relative_to(out).as_posix()}" for p in files]
    target = out / MANIFEST
    target.write_text("\n".join(lines) + ("\n" if lines else ""))
    return target


def verify_manifest(out: Path) -> list[str]:
    """Names whose recorded hash is missing or wrong."""
    recorded = {}
    for line in (out / MANIFEST).read_text().splitlines():
        digest, _, name = line.partition("  ")
        recorded[name] = digest
    bad = [name for name, digest in recorded.items() if not (out / name).is_file() or sha256(out / name) != digest]
    present = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file() and p.name != MANIFEST}
    return sorted(set(bad) | (present - set(recorded)))


def write_summary(out: Path, summary: dict) -> None:
    write_rows(out / "summary.csv", ["key", "value"], sorted(summary.items()))


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        return EXIT_IO
    return getattr(exc, "exit_code", 1)


def error_report(exc: BaseException) -> dict:
    report = {"error": type(exc).__name__, "message": str(exc), "exit_code": exit_code_for(exc)}
    for attr in ("a_sup", "iterations", "advisory_dt"):
        if hasattr(exc, attr):
            report[attr] = getattr(exc, attr)
    return report


def run_point(cfg: RunConfig, out: Path) -> tuple[int, dict]:
    """Run one configured scenario into ``out``; never raises for modelled failures."""
    try:
        cfg = validate(cfg)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(dump_config(cfg))
        summary = run_scenario(cfg, out)
        code = EXIT_OK
        if summary.get("outcome") == "contraction-failure":
            code = EXIT_NUMERICAL
        summary["status"] = "ok" if code == EXIT_OK else "numerical-failure"
        summary["warnings"] = "; ".join(cfg.warnings)
        write_summary(out, summary)
        return code, summary
    except (LpnsError, OSError) as exc:
        report = error_report(exc)
        log.error("%s: %s", report["error"], report["message"])
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "error.json").write_text(json.dumps(report, sort_keys=True, indent=1) + "\n")
        except OSError:
            pass
        return report["exit_code"], {"status": f"error:{report['exit_code']}", "error": report["message"], "report": report}


def run_sweep(cfg: RunConfig, axis: str, values: list, out: Path) -> int:
    """One subdirectory and one aggregated row per sweep point; failures are marked, not fatal."""
    if not values:
        log.info("empty sweep: nothing to do")
        return EXIT_OK
    if len(values) > MAX_SWEEP_POINTS:
        raise ValidationError(f"at most {MAX_SWEEP_POINTS} sweep points")
    out.mkdir(parents=True, exist_ok=True)
    rows, keys = [], set()
    for k, v in enumerate(values):
        point_dir = out / f"point_{k:02d}"
        try:
            point_cfg = apply_overrides(cfg, {axis: str(v)})
        except LpnsError as exc:
            rows.append({axis: v, "status": f"error:{exit_code_for(exc)}", "error": str(exc)})
            continue
        code, summary = run_point(point_cfg, point_dir)
        if code == EXIT_OK:
            write_manifest(point_dir)
        summary.pop("report", None)
        row = {axis: v, **summary}
        rows.append(row)
        keys.update(row)
    keys.update(*(r.keys() for r in rows))
    header = [axis, "status"] + sorted(keys - {axis, "status"})
    write_rows(out / "sweep.csv", header, ([r.get(h) for h in header] for r in rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpns2d", description="Littlewood-Paley diagnostics for 2-D inhomogeneous Navier-Stokes")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario and write its artifacts")
    run.add_argument("--config", type=Path)
    run.add_argument("--scenario")
    run.add_argument("--preset")
    run.add_argument("--out", type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--deterministic", action="store_true")
    run.add_argument("--sweep", metavar="AXIS=V1,V2,...")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    for name in OVERRIDE_FLAGS:
        run.add_argument(f"--{name.replace('_', '-')}", dest=f"opt_{name}", metavar=name.upper())

    props = sub.add_parser("properties", help="run the built-in property checks")
    props.add_argument("--seed", type=int, default=0)
    props.add_argument("--cases", type=int, default=20)
    return parser


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for key in ("scenario", "preset", "seed"):
        if getattr(args, key) is not None:
            overrides[key] = str(getattr(args, key))
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.deterministic:
        overrides["deterministic"] = "true"
    for name in OVERRIDE_FLAGS:
        value = getattr(args, f"opt_{name}")
        if value is not None:
            overrides[name] = value
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key] = value
    return apply_overrides(cfg, overrides)


def cmd_run(args) -> int:
    try:
        cfg = config_from_args(args)
        sweep = parse_sweep(args.sweep) if args.sweep else None
        if sweep is not None:
            # validate the template before any compute
            validate(cfg)
    except (LpnsError, OSError) as exc:
        print(json.dumps(error_report(exc), sort_keys=True), file=sys.stderr)
        return exit_code_for(exc)
    if cfg.deterministic:
        # single-lane numerics: no threaded BLAS/FFT back ends
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = "1"
    np.random.seed(cfg.seed % 2**32)
    out = Path(cfg.out_dir)
    try:
        if sweep is not None:
            axis, values = sweep
            code = run_sweep(cfg, axis, values, out)
            if values:
                write_manifest(out)
            return code
        code, summary = run_point(cfg, out)
        if summary["status"].startswith("error"):
            print(json.dumps(summary["report"], sort_keys=True), file=sys.stderr)
            return code
        write_manifest(out)
        for key, value in sorted(summary.items()):
            print(f"{key} = {fmt(value)}")
        return code
    except OSError as exc:
        print(json.dumps(error_report(exc), sort_keys=True), file=sys.stderr)
        return EXIT_IO


def cmd_properties(args) -> int:
    from .properties import run_properties

    results = run_properties(seed=args.seed, cases=args.cases)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args)
    return cmd_properties(args)


if __name__ == "__main__":
    sys.exit(main())
