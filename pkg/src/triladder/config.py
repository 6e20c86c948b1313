"""Experiment configuration: YAML on disk, validated against a shipped schema.

User-facing units are MHz (as f = omega / 2pi), ns and us, with sites and
rungs numbered from 1. :class:`ExperimentConfig` converts everything to rad/s,
seconds and 0-based indices on load.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .engine import RampSchedule, device_schedule
from .fock import TWO_PI, LatticeSpec, ParameterError
from .noise import NoiseModel
from .observables import valid_rung_pairs
from .protocol import MeasurementPlan

SCHEMA_VERSION = 1
MODES = ("exact_ground", "ramp_prepared")


class ConfigError(ParameterError):
    pass


def _data(name: str) -> str:
    return resources.files("triladder").joinpath("data").joinpath(name).read_text()


def schema() -> dict:
    return json.loads(_data("config.schema.json"))


def default_config_text() -> str:
    return _data("default.yaml")


def _per_site(value, n: int, name: str) -> tuple[float, ...]:
    vals = [float(value)] * n if np.isscalar(value) else [float(v) for v in value]
    if len(vals) != n:
        raise ConfigError(f"{name} needs {n} entries, got {len(vals)}")
    return tuple(vals)


def _flux(value, ratio: float) -> float:
    if value in (None, "auto"):
        return math.pi if ratio < 0 else 0.0
    if value == "pi":
        return math.pi
    return float(value)


@dataclass(frozen=True)
class PlanTemplate:
    """A measurement plan before seeds are assigned; ``rungs`` 0-based or 'all'."""

    kind: str
    rungs: object
    shots: int | None
    readout_mode: str = "occupancy"
    delta: float | None = None
    t_idle: float | None = None

    def expand(self, n_rungs: int) -> list[tuple[int, ...]]:
        """Rung groups, one per separate experiment."""
        if self.rungs == "all":
            if self.kind == "current_correlation":
                return list(valid_rung_pairs(n_rungs))
            return [(r,) for r in range(n_rungs)]
        rungs = tuple(self.rungs)
        if max(rungs) >= n_rungs:
            raise ConfigError(f"rung {max(rungs) + 1} out of range for {n_rungs} rungs")
        return [rungs]

    def build(self, rungs: tuple[int, ...], seed: int) -> MeasurementPlan:
        return MeasurementPlan(self.kind, rungs, shots=self.shots, seed=seed, readout_mode=self.readout_mode,
                               delta=self.delta, t_idle=self.t_idle)


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict = field(repr=False)
    n_sites: int
    total: int
    n_max: int
    j: tuple[float, ...]
    u: tuple[float, ...]
    omega: tuple[float, ...]
    flux: object
    mode: str
    sweep: tuple[float, ...]
    plans: tuple[PlanTemplate, ...]
    noise: NoiseModel | None
    noise_dt: float
    ramp: dict
    output: Path
    seed: int
    include_interaction: bool

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        try:
            jsonschema.validate(data, schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config invalid at {where}: {exc.message}") from None
        raw = copy.deepcopy(data)
        lat = data["lattice"]
        n = lat.get("n_sites", 8)
        n_max = lat.get("n_max", 1)
        total = lat.get("total", n // 2)
        if total > n * n_max:
            raise ConfigError("total excitation number exceeds n_sites * n_max")
        j = tuple(TWO_PI * 1e6 * x for x in _per_site(lat.get("j_mhz", 6.1), n - 1, "j_mhz"))
        u = tuple(TWO_PI * 1e6 * x for x in _per_site(lat.get("u_mhz", -186.1), n, "u_mhz"))
        omega = tuple(TWO_PI * 1e6 * x for x in _per_site(lat.get("omega_mhz", 0.0), n, "omega_mhz"))
        sweep = tuple(float(r) for r in data.get("sweep", ()))
        for r in sweep:
            if not math.isfinite(r) or r == 0:
                raise ConfigError(f"sweep ratio {r} must be finite and nonzero")
        plans = []
        for p in data.get("plans", ()):
            rungs = p.get("rungs", "all")
            rungs = rungs if rungs == "all" else tuple(r - 1 for r in rungs)
            shots = p.get("shots", 100_000)
            delta = p.get("delta_mhz")
            t_idle = p.get("t_idle_ns")
            if p["kind"] == "bond_kinetic" and delta is None:
                raise ConfigError("bond_kinetic plans need delta_mhz")
            plans.append(PlanTemplate(p["kind"], rungs, None if shots == "infinite" else int(shots),
                                      p.get("readout_mode", "occupancy"),
                                      None if delta is None else TWO_PI * 1e6 * delta,
                                      None if t_idle is None else t_idle * 1e-9))
        noise = None
        noise_dt = 0.5e-9
        if "noise" in data:
            nz = data["noise"]
            noise = NoiseModel(tuple(x * 1e-6 for x in _per_site(nz["t1_us"], n, "t1_us")),
                               tuple(x * 1e-6 for x in _per_site(nz["t2r_us"], n, "t2r_us")))
            noise_dt = nz.get("dt_ns", 0.5) * 1e-9
        ramp = dict(data.get("ramp", {}))
        out = Path(data.get("output", "triladder-out"))
        if base_dir is not None and not out.is_absolute():
            out = base_dir / out
        return cls(raw, n, total, n_max, j, u, omega, lat.get("flux", "auto"), data.get("mode", "exact_ground"),
                   sweep, tuple(plans), noise, noise_dt, ramp, out, int(data.get("seed", 0)),
                   bool(data.get("include_interaction", False)))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ExperimentConfig":
        """Read a config file; ``None`` loads the shipped default."""
        if path is None:
            return cls.from_dict(yaml.safe_load(default_config_text()))
        path = Path(path)
        data = yaml.safe_load(path.read_text())
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def replace_raw(self, **changes) -> "ExperimentConfig":
        data = copy.deepcopy(self.raw)
        data.update(changes)
        return ExperimentConfig.from_dict(data)

    def digest(self) -> str:
        """Hash of everything that affects results; the output location does not."""
        physics = {k: v for k, v in self.raw.items() if k != "output"}
        payload = json.dumps(physics, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def spec(self, ratio: float) -> LatticeSpec:
        n = self.n_sites
        j_leg = tuple(abs(ratio) * 0.5 * (self.j[k] + self.j[k + 1]) for k in range(n - 2))
        return LatticeSpec(n, self.omega, self.u, self.j, j_leg, _flux(self.flux, ratio), self.n_max)

    def schedule(self) -> RampSchedule:
        r = self.ramp
        excited = tuple(s - 1 for s in r.get("excited", (1, 4, 8, 5)))
        if any(s >= self.n_sites for s in excited):
            raise ConfigError("ramp.excited names a site outside the lattice")
        if len(set(excited)) != self.total:
            raise ConfigError("ramp.excited must list exactly `total` distinct sites")
        return device_schedule(self.n_sites, excited, TWO_PI * 1e6 * r.get("park_mhz", -150.0),
                              r.get("duration_ns", 300.0) * 1e-9, r.get("shape", "linear"))

    @property
    def ramp_dt(self) -> float:
        return self.ramp.get("dt_ns", 0.2) * 1e-9

    @property
    def ramp_order(self) -> int:
        return int(self.ramp.get("order", 4))


def spawn_seeds(seed: int, n: int) -> list[int]:
    """``n`` independent 64-bit seeds derived deterministically from ``seed``."""
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]
