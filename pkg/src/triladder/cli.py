"""Command-line entry point: ``triladder <command> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig
from .fock import ParameterError, build_basis


def _shots(text: str):
    if text.lower() in ("inf", "infinite"):
        return None
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("shots must be a positive integer or 'inf'")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config (default: the shipped default.yaml)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--shots", type=_shots, default=-1, help="shots per plan, or 'inf' for the exact limit")
    common.add_argument("--threads", type=int, default=1, help="worker processes for sweep points")

    parser = argparse.ArgumentParser(prog="triladder", description="Triangular-ladder Bose-Hubbard simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("ground", "exact prepared state and its observables at one ratio"),
                            ("ramp", "simulate the preparation ramp and report its fidelity"),
                            ("measure", "run the configured measurement plans at one ratio"),
                            ("sweep", "prepare and measure at every ratio of the sweep"),
                            ("verify", "run the invariant suite; exit status 0 only if every check passes"),
                            ("figures", "draw SVG figures from sweep reports (runs the sweep if none exist)")):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name in ("ground", "ramp", "measure"):
            p.add_argument("--ratio", type=float, help="J_par/J (default: first ratio of the sweep, else -1.22)")
        if name == "ramp":
            p.add_argument("--dt-ns", type=float, help="integrator step in ns")
            p.add_argument("--slowdown", type=float, default=1.0, help="stretch the ramp duration by this factor")
        if name == "verify":
            p.add_argument("--only", nargs="*", help="run only the named checks")
    return parser


def load_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output"] = str(args.out)
    return config.replace_raw(**changes) if changes else config


def _ratio(args, config: ExperimentConfig) -> float:
    if args.ratio is not None:
        return args.ratio
    return config.sweep[0] if config.sweep else -1.22


def _emit(obj) -> None:
    print(json.dumps(obj, indent=1, sort_keys=True, default=float))


def cmd_ground(args, config: ExperimentConfig) -> int:
    from .engine import prepared_state, top_manifold
    from .experiment import ratio_label
    from .observables import build_report

    ratio = _ratio(args, config)
    spec = config.spec(ratio)
    basis = build_basis(config.n_sites, config.total, config.n_max)
    manifold = top_manifold(spec, basis)
    report = build_report(prepared_state(spec, basis), spec, {
        "ratio": ratio, "top_energy": manifold.energy, "degenerate": manifold.degenerate,
        "spec_hash": spec.digest(), "config_hash": config.digest()})
    config.output.mkdir(parents=True, exist_ok=True)
    path = config.output / f"ground_{ratio_label(ratio)}.json"
    path.write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True, default=float) + "\n")
    _emit({"ratio": ratio, "top_energy_rad_per_s": manifold.energy, "degenerate": manifold.degenerate,
           "chiral_c": report.chiral_c, "bond_order": report.bond_order, "report": str(path)})
    return 0


def cmd_ramp(args, config: ExperimentConfig) -> int:
    from .engine import evolve_ramp, prepared_state

    ratio = _ratio(args, config)
    spec = config.spec(ratio)
    basis = build_basis(config.n_sites, config.total, config.n_max)
    schedule = config.schedule().scaled(args.slowdown)
    dt = args.dt_ns * 1e-9 if args.dt_ns else config.ramp_dt
    result = evolve_ramp(schedule, spec, basis, dt=dt, target=prepared_state(spec, basis), order=config.ramp_order)
    _emit({"ratio": ratio, "duration_ns": schedule.duration * 1e9, "dt_ns": dt * 1e9, "steps": result.steps,
           "fidelity": result.fidelity, "config_hash": config.digest()})
    return 0


def cmd_measure(args, config: ExperimentConfig) -> int:
    from .config import spawn_seeds
    from .experiment import run_point, write_outputs

    ratio = _ratio(args, config)
    point = run_point(config, ratio, spawn_seeds(config.seed, 1)[0], args.shots)
    files = write_outputs(config, [point], config.output)
    _emit({"ratio": ratio, "chiral_c": point.report.chiral_c, "chiral_c_est": point.report.shots.get("chiral_c"),
           "bond_order": point.report.bond_order, "bond_order_est": point.report.shots.get("bond_order"),
           "files": [str(f) for f in files]})
    return 0


def cmd_sweep(args, config: ExperimentConfig) -> int:
    from .experiment import run_sweep, summary_rows

    points, files = run_sweep(config, config.output, args.shots, args.threads)
    _emit({"points": summary_rows(points), "n_files": len(files), "output": str(config.output)})
    return 0


def cmd_figures(args, config: ExperimentConfig) -> int:
    from .experiment import run_sweep
    from .figures import emit_figures, report_from_json

    paths = sorted(config.output.glob("report_*.json"))
    if not paths:
        run_sweep(config, config.output, args.shots, args.threads)
        paths = sorted(config.output.glob("report_*.json"))
    reports = {p.stem.removeprefix("report_"): report_from_json(json.loads(p.read_text())) for p in paths}
    files = emit_figures(reports, config.output / "figures")
    _emit({"figures": [str(f) for f in files]})
    return 0


def cmd_verify(args, config: ExperimentConfig) -> int:
    from .checks import run_checks

    results = run_checks(config, args.only)
    for r in results:
        print(r.to_json())
    failed = [r.name for r in results if not r.passed]
    print(json.dumps({"summary": True, "passed": len(results) - len(failed), "failed": len(failed),
                      "failed_checks": failed, "ok": not failed}, sort_keys=True))
    return 0 if not failed else 1


COMMANDS = {"ground": cmd_ground, "ramp": cmd_ramp, "measure": cmd_measure, "sweep": cmd_sweep,
            "verify": cmd_verify, "figures": cmd_figures}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        return COMMANDS[args.command](args, config)
    except (ParameterError, ConfigError, RuntimeError, OSError) as exc:
        message = f"{type(exc).__name__}: {exc}"
        if args.command == "verify":
            print(json.dumps({"summary": True, "passed": 0, "failed": 1, "failed_checks": ["config"],
                              "ok": False, "error": message}, sort_keys=True))
        else:
            print(f"error: {message}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
