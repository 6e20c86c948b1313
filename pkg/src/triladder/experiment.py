"""Sweep orchestration: prepare, measure and report at every coupling ratio."""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, spawn_seeds
from .engine import evolve_ramp, prepared_state
from .fock import FockBasis, LatticeSpec, build_basis
from .noise import DensityMatrix, apply_protocol_open, lindblad_ramp
from .observables import ObservableReport, bond_order_from_bonds, build_report
from .protocol import MeasurementPlan, apply_protocol, born_table, calibrate_bond_sign, estimate_plan, sample
from .reference import load_golden


class SweepError(RuntimeError):
    """A sweep point failed; the message names the ratio."""


def ratio_label(ratio: float) -> str:
    return f"{'m' if ratio < 0 else 'p'}{abs(ratio):.2f}"


@dataclass
class PointResult:
    ratio: float
    spec: LatticeSpec
    report: ObservableReport
    fidelity: float
    seed: int
    tables: list = field(default_factory=list, repr=False)


def prepare(config: ExperimentConfig, spec: LatticeSpec, basis: FockBasis):
    """Prepared state and its fidelity with the exact target.

    ``exact_ground`` returns the target itself. ``ramp_prepared`` runs the
    detuning ramp, as a density matrix when a noise model is configured.
    """
    target = prepared_state(spec, basis)
    if config.mode == "exact_ground":
        return target, 1.0
    schedule = config.schedule()
    if config.noise is not None:
        rho = lindblad_ramp(schedule, spec, config.noise, dt=config.noise_dt)
        return rho, rho.fidelity(rho.basis.embed(target))
    result = evolve_ramp(schedule, spec, basis, dt=config.ramp_dt, target=target, order=config.ramp_order)
    return result.state, result.fidelity


def _readout(state, plan: MeasurementPlan, spec: LatticeSpec, config: ExperimentConfig):
    if config.noise is not None:
        rho = state if isinstance(state, DensityMatrix) else DensityMatrix.from_state(state)
        rotated = apply_protocol_open(rho, plan, spec, config.noise, config.noise_dt, config.include_interaction)
    else:
        rotated = apply_protocol(state, plan, spec, config.include_interaction)
    return born_table(rotated, plan) if plan.shots is None else sample(rotated, plan)


def _golden_key(spec: LatticeSpec, total: int) -> str | None:
    """Golden ladder key when ``spec`` is one of the hard-core uniform oracle points."""
    j = spec.j_rung[0]
    if (spec.n_sites, total, spec.n_max) != (8, 4, 1) or any(x != 0 for x in spec.omega):
        return None
    if any(abs(x - j) > 1e-12 * j for x in spec.j_rung) or len(set(spec.j_leg)) != 1:
        return None
    ratio = spec.j_leg[0] / j * (-1 if math.isclose(spec.flux, math.pi) else 1)
    if not (math.isclose(spec.flux, math.pi) or spec.flux == 0):
        return None
    key = f"ladder/{ratio:+.2f}"
    return key if f"{key}/chiral_c" in load_golden() and abs(round(ratio, 2) - ratio) < 1e-9 else None


def golden_comparison(report: ObservableReport, spec: LatticeSpec, total: int) -> dict:
    key = _golden_key(spec, total)
    if key is None:
        return {}
    golden = load_golden()
    out = {}
    for name, ours in (("chiral_c", report.chiral_c), ("bond_order", report.bond_order)):
        entry = golden[f"{key}/{name}"]
        out[name] = {"value": entry["value"], "source": entry["source"], "tolerance": entry["tolerance"],
                     "deviation": ours - entry["value"]}
    return out


def run_point(config: ExperimentConfig, ratio: float, seed: int, shots: int | None = -1) -> PointResult:
    """One sweep point. ``shots`` other than -1 overrides every plan's shot count."""
    try:
        spec = config.spec(ratio)
        basis = build_basis(config.n_sites, config.total, config.n_max)
        state, fidelity = prepare(config, spec, basis)
        report = build_report(state, spec, {"ratio": ratio, "seed": seed})
        scale = report.j_scale
        groups = [(tpl, rungs) for tpl in config.plans for rungs in tpl.expand(spec.n_rungs)]
        seeds = spawn_seeds(seed, len(groups))
        g_est, g_err = {}, {}
        cur = np.full(spec.n_rungs, np.nan)
        cur_err = np.full(spec.n_rungs, np.nan)
        bond = np.full(spec.n_rungs, np.nan)
        bond_err = np.full(spec.n_rungs, np.nan)
        signs: dict[tuple, int] = {}
        tables = []
        for (tpl, rungs), s in zip(groups, seeds):
            plan = tpl.build(rungs, s)
            if shots != -1:
                plan = MeasurementPlan(plan.kind, plan.rungs, shots, plan.seed, plan.readout_mode, plan.t_bs,
                                       plan.delta, plan.t_idle)
            plan.check(spec)
            sign = None
            if plan.kind == "bond_kinetic":
                key = (plan.delta, plan.t_idle)
                if key not in signs:
                    signs[key] = calibrate_bond_sign(plan.delta, t_idle=plan.t_idle)
                sign = signs[key]
            table = _readout(state, plan, spec, config)
            tables.append((plan, table))
            for k, (v, e) in estimate_plan(table, plan, spec, sign).items():
                if k[0] == "g":
                    g_est[(k[1], k[2])] = v / scale ** 2
                    g_err[(k[1], k[2])] = e / scale ** 2
                elif k[0] == "current" and plan.kind == "current":
                    cur[k[1]], cur_err[k[1]] = v / scale, e / scale
                elif k[0] == "bond":
                    bond[k[1]], bond_err[k[1]] = v, e
        if g_est:
            report.shots["g_matrix"], report.errors["g_matrix"] = g_est, g_err
            if set(g_est) == set(report.g_matrix) and spec.n_sites >= 4:
                c, var = 0.0, 0.0
                for d in range(2, spec.n_rungs):
                    n_d = spec.n_rungs - d
                    c += sum(g_est[(j, j + d)] for j in range(n_d)) / n_d
                    var += sum(g_err[(j, j + d)] ** 2 for j in range(n_d)) / n_d ** 2
                report.shots["chiral_c"], report.errors["chiral_c"] = c, math.sqrt(var)
        if not np.all(np.isnan(cur)):
            report.shots["currents"], report.errors["currents"] = cur, cur_err
        if not np.all(np.isnan(bond)):
            report.shots["bond_o"], report.errors["bond_o"] = bond, bond_err
            if not np.any(np.isnan(bond)):
                report.shots["bond_order"] = bond_order_from_bonds(bond)
                report.errors["bond_order"] = float(np.sqrt(np.sum(bond_err ** 2)))
        report.metadata.update({"spec": spec.to_dict(), "spec_hash": spec.digest(), "fidelity": fidelity,
                                "mode": config.mode, "golden": golden_comparison(report, spec, config.total)})
        return PointResult(ratio, spec, report, fidelity, seed, tables)
    except Exception as exc:
        raise SweepError(f"ratio {ratio}: {type(exc).__name__}: {exc}") from exc


def _point_job(args):
    config, ratio, seed, shots = args
    return run_point(config, ratio, seed, shots)


def run_points(config: ExperimentConfig, shots: int | None = -1, threads: int = 1) -> list[PointResult]:
    seeds = spawn_seeds(config.seed, len(config.sweep))
    jobs = [(config, r, s, shots) for r, s in zip(config.sweep, seeds)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_point_job, jobs))
    return [_point_job(j) for j in jobs]


# -- artifacts -----------------------------------------------------------------

def _header(config: ExperimentConfig, point: PointResult | None = None) -> str:
    lines = [f"# config_hash={config.digest()}", "# schema_version=1"]
    if point is not None:
        lines += [f"# ratio={point.ratio}", f"# spec_hash={point.spec.digest()}", f"# seed={point.seed}"]
        for name, g in sorted(point.report.metadata.get("golden", {}).items()):
            lines.append(f"# golden_{name}={g['value']!r} source={g['source']} tolerance={g['tolerance']}")
    return "\n".join(lines) + "\n"


def _csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if v is None else repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                    for k, v in row.items()})
    return buf.getvalue()


def g_csv(config: ExperimentConfig, point: PointResult) -> str:
    return _header(config, point) + _csv(point.report.g_rows(), ["rung_i", "rung_j", "value", "stderr", "exact"])


def bonds_csv(config: ExperimentConfig, point: PointResult) -> str:
    rep = point.report
    est, err = rep.shots.get("bond_o"), rep.errors.get("bond_o")
    rows = []
    for k, exact in enumerate(rep.bond_o):
        measured = est is not None and not np.isnan(est[k])
        rows.append({"rung": k + 1, "value": est[k] if measured else exact,
                     "stderr": err[k] if measured else 0.0, "exact": exact})
    return _header(config, point) + _csv(rows, ["rung", "value", "stderr", "exact"])


def summary_rows(points: list[PointResult]) -> list[dict]:
    rows = []
    for p in points:
        rep = p.report
        rows.append({"ratio": p.ratio, "flux": p.spec.flux, "chiral_c": rep.chiral_c,
                     "chiral_c_est": rep.shots.get("chiral_c"), "chiral_c_stderr": rep.errors.get("chiral_c"),
                     "bond_order": rep.bond_order, "bond_order_est": rep.shots.get("bond_order"),
                     "bond_order_stderr": rep.errors.get("bond_order"), "fidelity": p.fidelity,
                     "spec_hash": p.spec.digest()})
    return rows


SUMMARY_COLUMNS = ["ratio", "flux", "chiral_c", "chiral_c_est", "chiral_c_stderr", "bond_order", "bond_order_est",
                   "bond_order_stderr", "fidelity", "spec_hash"]


def point_json(config: ExperimentConfig, point: PointResult) -> str:
    data = point.report.to_dict()
    data["config_hash"] = config.digest()
    data["ratio"] = point.ratio
    data["plans"] = [plan.to_dict() for plan, _ in point.tables]
    return json.dumps(data, indent=1, sort_keys=True, default=_json_default) + "\n"


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def write_outputs(config: ExperimentConfig, points: list[PointResult], out: Path,
                  write_shots: bool = True) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name: str, text: str):
        path = out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        written.append(path)

    for p in points:
        label = ratio_label(p.ratio)
        put(f"report_{label}.json", point_json(config, p))
        put(f"g_{label}.csv", g_csv(config, p))
        put(f"bonds_{label}.csv", bonds_csv(config, p))
        if write_shots:
            for k, (plan, table) in enumerate(p.tables):
                if plan.shots is not None:
                    put(f"shots/{label}/plan{k + 1:02d}.csv", _header(config, p) + table.to_csv())
    if points:
        put("summary.csv", _header(config) + _csv(summary_rows(points), SUMMARY_COLUMNS))
        put("summary.json", json.dumps({"config_hash": config.digest(), "points": summary_rows(points)},
                                       indent=1, sort_keys=True, default=_json_default) + "\n")
    return written


def run_sweep(config: ExperimentConfig, out: Path | None = None, shots: int | None = -1, threads: int = 1,
              write_shots: bool = True) -> tuple[list[PointResult], list[Path]]:
    """Every ratio of the config's sweep; an empty sweep writes nothing."""
    points = run_points(config, shots, threads)
    return points, write_outputs(config, points, out or config.output, write_shots) if points else []
