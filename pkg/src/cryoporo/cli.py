"""Command-line entry point.

Subcommands: ``simulate`` (time integration + outputs), ``oracle`` (spectral
reference run), ``compare`` (both plus a discrepancy table), ``sweep``
(cartesian parameter study on a worker pool), ``check`` (parameter
admissibility audit only).  Exit codes: 0 success, 2 configuration fault,
3 solver abort or I/O failure, 4 invariant fault.
"""

from __future__ import annotations

import argparse
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import (RunConfig, apply_override, config_hash,
                     default_config_text, parse_config)
from .constitutive import validate_hypotheses
from .errors import ConfigError, InvariantError, SimulationAbort
from .galerkin import compare, oracle_run
from .geometry import build_domain
from .outputs import load_checkpoint, write_outputs
from .presets import preset_path
from .solver import run

__all__ = ["main"]


def _resolve_config_path(text: str) -> Path:
    if text.startswith("preset:"):
        return preset_path(text.split(":", 1)[1])
    return Path(text)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cryoporo",
        description="freezing/thawing porous-medium flow simulator")
    parser.add_argument("--print-defaults", action="store_true",
                        help="print the documented default configuration and exit")
    sub = parser.add_subparsers(dest="command")
    for name, helptext in (
            ("simulate", "run the time integrator and write outputs"),
            ("oracle", "run the spectral reference solver"),
            ("compare", "run solver and oracle, report field discrepancies"),
            ("sweep", "run the cartesian parameter sweep of the [sweep] section"),
            ("check", "validate material parameters only")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True,
                       help="configuration file path, or preset:<name>")
        p.add_argument("--out", default=None, help="output directory")
        if name in ("oracle", "compare"):
            p.add_argument("--n-modes", type=int, default=None,
                           help="spectral truncation order (default: config)")
        if name == "simulate":
            p.add_argument("--resume", default=None,
                           help="checkpoint file to resume from")
        if name == "simulate" or name == "sweep":
            p.add_argument("--stop-after-steps", type=int, default=None,
                           help=argparse.SUPPRESS)
    return parser


def _out_dir(args, config: RunConfig) -> Path:
    return Path(args.out) if args.out else Path(config.output.out_dir)


def _cmd_simulate(args) -> int:
    config = parse_config(_resolve_config_path(args.config))
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume, config)
    traj = run(config, stop_after_steps=args.stop_after_steps, resume=resume)
    out = write_outputs(traj, _out_dir(args, config))
    print(f"simulate: {len(traj.rows)} steps, t = {traj.rows[-1][0]:.6g}, "
          f"{len(traj.states)} snapshots -> {out}")
    return 0


def _write_oracle_snapshots(oracle_traj, domain, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for index, fields in enumerate(oracle_traj.grid_fields):
        lines = ["x,p,w,chi,theta"]
        for i in range(domain.n_nodes):
            lines.append(",".join(format(v, ".17g") for v in (
                domain.x[i], fields["p"][i], fields["w"][i],
                fields["chi"][i], fields["theta"][i])))
        (out / f"oracle_snapshot_{index}.csv").write_bytes(
            ("\n".join(lines) + "\n").encode())


def _cmd_oracle(args) -> int:
    config = parse_config(_resolve_config_path(args.config))
    traj = oracle_run(config, n_modes=args.n_modes)
    domain = build_domain(config)
    out = _out_dir(args, config)
    _write_oracle_snapshots(traj, domain, out)
    print(f"oracle: {len(traj.times)} snapshots, t = {traj.times[-1]:.6g} -> {out}")
    return 0


def _cmd_compare(args) -> int:
    config = parse_config(_resolve_config_path(args.config))
    solver_traj = run(config)
    oracle_traj = oracle_run(config, n_modes=args.n_modes)
    domain = build_domain(config)
    report = compare(oracle_traj, solver_traj, domain)
    print(report)
    out = _out_dir(args, config)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["t,field,rel_l2"]
    for name, values in report.per_time.items():
        for t, v in zip(report.times, values):
            lines.append(f"{format(t, '.17g')},{name},{format(v, '.17g')}")
    (out / "discrepancy.csv").write_bytes(("\n".join(lines) + "\n").encode())
    return 0


def _sweep_point(payload) -> str:
    config, out_dir = payload
    traj = run(config)
    write_outputs(traj, out_dir)
    return str(out_dir)


def _cmd_sweep(args) -> int:
    config = parse_config(_resolve_config_path(args.config))
    if not config.sweep:
        raise ConfigError("sweep requested but the config has no [sweep] section")
    keys = sorted(config.sweep)
    combos = list(itertools.product(*(config.sweep[k] for k in keys)))
    base_out = _out_dir(args, config)
    base_out.mkdir(parents=True, exist_ok=True)
    jobs = []
    manifest = ["point,overrides"]
    for index, combo in enumerate(combos):
        point = config
        for key, value in zip(keys, combo):
            point = apply_override(point, key, value)
        out_dir = base_out / f"point_{index:03d}"
        jobs.append((point, out_dir))
        manifest.append(f"point_{index:03d},"
                        + ";".join(f"{k}={v}" for k, v in zip(keys, combo)))
    (base_out / "sweep_manifest.csv").write_bytes(
        ("\n".join(manifest) + "\n").encode())
    cap = os.environ.get("CRYOPORO_THREADS")
    workers = min(len(jobs), int(cap) if cap else (os.cpu_count() or 1))
    failures = []
    if workers <= 1:
        for job in jobs:
            try:
                _sweep_point(job)
            except Exception as exc:  # noqa: BLE001 - report and continue
                failures.append((job[1], exc))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_sweep_point, job): job for job in jobs}
            for future, job in futures.items():
                try:
                    future.result()
                except Exception as exc:  # noqa: BLE001
                    failures.append((job[1], exc))
    print(f"sweep: {len(jobs) - len(failures)}/{len(jobs)} points -> {base_out}")
    for out_dir, exc in failures:
        print(f"  failed: {out_dir}: {exc}", file=sys.stderr)
    if failures:
        raise failures[0][1]
    return 0


def _cmd_check(args) -> int:
    config = parse_config(_resolve_config_path(args.config))
    report = validate_hypotheses(config.material)
    print(report)
    if not report.valid:
        raise ConfigError("material parameters violate admissibility")
    print(f"config digest: {config_hash(config).hex()}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "oracle": _cmd_oracle,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(default_config_text())
        return 0
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except InvariantError as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 4
    except (SimulationAbort, OSError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
