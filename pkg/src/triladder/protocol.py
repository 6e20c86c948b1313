"""Measurement chain: pair isolation, rotations, projective readout, estimators.

A rung current is rotated onto a population imbalance by letting the two
sites of the rung exchange for t_BS = pi/(4J) with every other coupling off.
Bond kinetic energies first pick up a relative phase under a detuning Delta
for pi/(4|Delta|), which turns the real part of the coherence into a current.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .engine import evolve
from .fock import FockBasis, LatticeSpec, ParameterError, StateVector, occupation_string
from .hamiltonian import (
    NonMeasurablePairError,
    PairHamiltonianSpec,
    SparseOperator,
    assemble_pair,
    diagonal_operator,
    rungs_overlap,
)

PLAN_KINDS = ("current", "current_correlation", "bond_kinetic")
READOUT_MODES = ("occupancy", "binary")


class FitError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (rms residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class MeasurementPlan:
    """What to rotate and read out in one experimental configuration.

    ``rungs`` are 0-based rung indices (rung j = sites j, j+1). ``shots=None``
    selects the infinite-shot limit. Unset ``t_bs`` defaults to pi/(4 J_j)
    and unset ``t_idle`` to pi/(4 |delta|).
    """

    kind: str
    rungs: tuple[int, ...]
    shots: int | None = 100_000
    seed: int = 0
    readout_mode: str = "occupancy"
    t_bs: tuple[float, ...] | None = None
    delta: float | None = None
    t_idle: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "rungs", tuple(int(r) for r in self.rungs))
        if self.kind not in PLAN_KINDS:
            raise ParameterError(f"unknown plan kind {self.kind!r}")
        if self.readout_mode not in READOUT_MODES:
            raise ParameterError(f"unknown readout mode {self.readout_mode!r}")
        if not self.rungs or min(self.rungs) < 0:
            raise ParameterError("plan needs at least one valid rung")
        if self.kind == "current_correlation" and len(self.rungs) != 2:
            raise ParameterError("a correlation plan takes exactly two rungs")
        for a in range(len(self.rungs)):
            for b in range(a + 1, len(self.rungs)):
                if rungs_overlap(self.rungs[a], self.rungs[b]):
                    raise NonMeasurablePairError(self.rungs[a], self.rungs[b])
        if self.shots is not None and (int(self.shots) != self.shots or self.shots < 1):
            raise ParameterError("shots must be a positive integer")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ParameterError("seed must fit in 64 bits")
        if self.t_bs is not None:
            object.__setattr__(self, "t_bs", tuple(float(t) for t in self.t_bs))
            if len(self.t_bs) != len(self.rungs) or min(self.t_bs) <= 0:
                raise ParameterError("t_bs needs one positive time per rung")
        if self.kind == "bond_kinetic":
            if self.delta is None or self.delta == 0 or not np.isfinite(self.delta):
                raise ParameterError("bond plans need a finite nonzero idle detuning delta")
            if self.t_idle is not None and self.t_idle <= 0:
                raise ParameterError("t_idle must be positive")

    @property
    def pairs(self) -> tuple[tuple[int, int], ...]:
        return tuple((r, r + 1) for r in self.rungs)

    def beamsplitter_times(self, spec: LatticeSpec) -> tuple[float, ...]:
        if self.t_bs is not None:
            return self.t_bs
        return tuple(calibrate_tbs(spec.j_rung[r]) for r in self.rungs)

    def idle_time(self) -> float:
        return self.t_idle if self.t_idle is not None else np.pi / (4.0 * abs(self.delta))

    def check(self, spec: LatticeSpec):
        if max(self.rungs) >= spec.n_rungs:
            raise ParameterError(f"rung {max(self.rungs)} out of range for {spec.n_sites} sites")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rungs": [r + 1 for r in self.rungs], "shots": self.shots, "seed": self.seed,
                "readout_mode": self.readout_mode, "t_bs": list(self.t_bs) if self.t_bs else None,
                "delta": self.delta, "t_idle": self.t_idle}


def calibrate_tbs(j: float) -> float:
    """Beamsplitter time pi/(4J) for a rung coupling J in rad/s."""
    if not j > 0:
        raise ParameterError("J must be positive")
    return np.pi / (4.0 * j)


def swap_trace(j: float, times, n_max: int = 1) -> np.ndarray:
    """Population of the first site of an isolated pair started in |10>."""
    basis = FockBasis(2, 1, n_max)
    h = assemble_pair(PairHamiltonianSpec("beamsplitter", (0, 1), j), basis)
    psi0 = StateVector.product(basis, (1, 0))
    return np.array([evolve(psi0, h, t).populations()[0] for t in times])


def _sinusoid(t, offset, amp, omega, phase):
    return offset + amp * np.cos(omega * t + phase)


def fit_tbs_from_trace(times, populations, rtol: float = 1e-3) -> float:
    """Quarter period of a fitted population oscillation.

    The trace must span at least half an oscillation. Raises
    :class:`FitError` when the least-squares fit fails or leaves an rms
    residual above ``rtol`` times the fitted amplitude.
    """
    t = np.asarray(times, dtype=float)
    p = np.asarray(populations, dtype=float)
    if t.size < 8:
        raise FitError("trace too short to fit", np.inf)
    span = t[-1] - t[0]
    centered = p - p.mean()
    # Frequency guess from the spectrum of the zero-padded, evenly resampled trace.
    grid = np.linspace(t[0], t[-1], 4 * t.size)
    res = np.interp(grid, t, centered)
    pad = 16 * grid.size
    spectrum = np.abs(np.fft.rfft(res, n=pad))
    freqs = np.fft.rfftfreq(pad, d=grid[1] - grid[0])
    omega0 = 2 * np.pi * freqs[1 + np.argmax(spectrum[1:])]
    if omega0 * span < np.pi:
        omega0 = np.pi / span
    guess = (p.mean(), 0.5 * (p.max() - p.min()), omega0, 0.0)
    amp_guess = guess[1]
    best = None
    for phase in (0.0, np.pi / 2, np.pi, 3 * np.pi / 2):
        try:
            popt, _ = curve_fit(_sinusoid, t - t[0], p, p0=(p.mean(), amp_guess, omega0, phase), maxfev=20000)
        except RuntimeError:
            continue
        rms = float(np.sqrt(np.mean((_sinusoid(t - t[0], *popt) - p) ** 2)))
        if best is None or rms < best[0]:
            best = (rms, popt)
    if best is None:
        raise FitError("sinusoid fit did not converge", np.inf)
    rms, popt = best
    omega = abs(popt[2])
    if omega * span < np.pi or rms > rtol * max(abs(popt[1]), 1e-12):
        raise FitError("poor sinusoid fit or trace shorter than half an oscillation", rms)
    return float(np.pi / (2.0 * omega))


def _pair_hamiltonian(basis, kind: str, rung: int, strength: float, spec: LatticeSpec | None) -> SparseOperator:
    h = assemble_pair(PairHamiltonianSpec(kind, (rung, rung + 1), strength), basis)
    if spec is not None and kind == "beamsplitter":
        occ = basis.occupations[:, rung:rung + 2].astype(float)
        u = np.asarray(spec.u[rung:rung + 2])
        h = h + diagonal_operator(basis, (occ * (occ - 1.0)) @ (0.5 * u))
    return h


def protocol_steps(plan: MeasurementPlan, spec: LatticeSpec, basis, include_interaction: bool = False):
    """(Hamiltonian, duration) pairs the protocol applies, in order."""
    plan.check(spec)
    steps = []
    onsite = spec if include_interaction else None
    if plan.kind == "bond_kinetic":
        for r in plan.rungs:
            steps.append((_pair_hamiltonian(basis, "idle", r, plan.delta, None), plan.idle_time()))
    for r, t in zip(plan.rungs, plan.beamsplitter_times(spec)):
        steps.append((_pair_hamiltonian(basis, "beamsplitter", r, spec.j_rung[r], onsite), t))
    return steps


def apply_protocol(state: StateVector, plan: MeasurementPlan, spec: LatticeSpec,
                   include_interaction: bool = False) -> StateVector:
    """Rotate the plan's observables onto populations.

    Pairs are disjoint, so the simultaneous pair evolutions factorize and
    are applied one after another. With ``include_interaction`` the onsite
    U of the two pair sites stays on during the beamsplitter.
    """
    if state.basis.n_sites != spec.n_sites:
        raise ParameterError("state and spec disagree on the number of sites")
    for h, t in protocol_steps(plan, spec, state.basis, include_interaction):
        state = evolve(state, h, t)
    return state


class _Table:
    strings: list[str]
    occupations: np.ndarray
    weights: np.ndarray
    n_shots: int | None
    plan: MeasurementPlan | None

    def mean(self, values: np.ndarray) -> float:
        return float(self.weights @ values)

    def differences(self, rung: int) -> np.ndarray:
        return (self.occupations[:, rung] - self.occupations[:, rung + 1]).astype(float)

    def populations(self) -> np.ndarray:
        return self.weights @ self.occupations


def _distribution(occupations: np.ndarray, probs: np.ndarray, binary: bool):
    occ = np.minimum(occupations, 1) if binary else occupations
    merged: dict[str, float] = {}
    for row, p in zip(occ, probs):
        key = occupation_string(row)
        merged[key] = merged.get(key, 0.0) + p
    return merged


def _probabilities(state) -> np.ndarray:
    if isinstance(state, StateVector):
        p = state.probabilities()
    else:
        p = np.clip(np.real(np.diag(state.matrix)), 0.0, None)
    return p / p.sum()


@dataclass(eq=False)
class ShotTable(_Table):
    """Counts of measured occupation strings."""

    counts: dict[str, int]
    seed: int | None = None
    plan: MeasurementPlan | None = None
    strings: list[str] = field(init=False, repr=False)

    def __post_init__(self):
        self.strings = sorted(self.counts, reverse=True)
        cnt = np.array([self.counts[s] for s in self.strings], dtype=float)
        self.occupations = np.array([[int(c) for c in s] for s in self.strings], dtype=np.int64)
        self.n_shots = int(cnt.sum())
        if self.n_shots < 1:
            raise ParameterError("empty shot table")
        self.count_array = cnt
        self.weights = cnt / cnt.sum()

    @property
    def total(self) -> int:
        return self.n_shots

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# seed={self.seed} shots={self.n_shots}\n")
        if self.plan is not None:
            buf.write(f"# plan={json.dumps(self.plan.to_dict(), sort_keys=True)}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bitstring", "count"])
        for s in self.strings:
            w.writerow([s, self.counts[s]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ShotTable":
        rows = [line for line in text.splitlines() if line and not line.startswith("#")]
        reader = csv.DictReader(rows)
        seed = None
        for line in text.splitlines():
            if line.startswith("# seed="):
                token = line.split()[1].split("=")[1]
                seed = None if token == "None" else int(token)
        return cls({r["bitstring"]: int(r["count"]) for r in reader}, seed=seed)


@dataclass(eq=False)
class BornTable(_Table):
    """Exact outcome probabilities: the infinite-shot limit of a ShotTable."""

    probabilities: dict[str, float]
    plan: MeasurementPlan | None = None

    def __post_init__(self):
        self.strings = sorted(self.probabilities, reverse=True)
        self.weights = np.array([self.probabilities[s] for s in self.strings])
        self.occupations = np.array([[int(c) for c in s] for s in self.strings], dtype=np.int64)
        self.n_shots = None


def born_table(state, plan: MeasurementPlan | None = None) -> BornTable:
    binary = plan is not None and plan.readout_mode == "binary"
    return BornTable(_distribution(state.basis.occupations, _probabilities(state), binary), plan)


def sample(state, plan: MeasurementPlan) -> ShotTable:
    """Draw ``plan.shots`` projective readouts with Born probabilities."""
    if plan.shots is None:
        raise ParameterError("plan has no finite shot count; use born_table")
    rng = np.random.default_rng(plan.seed)
    counts = rng.multinomial(plan.shots, _probabilities(state))
    binary = plan.readout_mode == "binary"
    merged = _distribution(state.basis.occupations, counts, binary)
    return ShotTable({k: int(v) for k, v in merged.items() if v > 0}, seed=plan.seed, plan=plan)


def measure(state, plan: MeasurementPlan, spec: LatticeSpec, include_interaction: bool = False):
    """Protocol plus readout; a BornTable when ``plan.shots`` is None."""
    rotated = apply_protocol(state, plan, spec, include_interaction)
    return born_table(rotated, plan) if plan.shots is None else sample(rotated, plan)


def _require(table: _Table, kinds: tuple[str, ...], *rungs: int):
    plan = table.plan
    if plan is None:
        return
    if plan.kind not in kinds:
        raise ParameterError(f"table comes from a {plan.kind!r} plan")
    missing = [r for r in rungs if r not in plan.rungs]
    if missing:
        raise ParameterError(f"rung(s) {missing} not in plan")


def _mean_and_stderr(table: _Table, x: np.ndarray) -> tuple[float, float]:
    mean = table.mean(x)
    if table.n_shots is None:
        return mean, 0.0
    n = table.n_shots
    var = table.weights @ (x - mean) ** 2 * n / max(n - 1, 1)
    return mean, float(np.sqrt(var / n))


def estimate_current(table: _Table, rung: int, j: float) -> tuple[float, float]:
    """J (n_j - n_{j+1}) averaged over shots, with its standard error."""
    _require(table, ("current", "current_correlation"), rung)
    mean, err = _mean_and_stderr(table, table.differences(rung))
    return j * mean, j * err


def estimate_current_correlation(table: _Table, rung_i: int, rung_j: int, j_i: float, j_j: float
                                 ) -> tuple[float, float]:
    """Connected population-imbalance correlation times J_i J_j.

    The standard error is the delete-one jackknife over shots.
    """
    if rungs_overlap(rung_i, rung_j):
        raise NonMeasurablePairError(rung_i, rung_j)
    _require(table, ("current", "current_correlation"), rung_i, rung_j)
    x, y = table.differences(rung_i), table.differences(rung_j)
    w = table.weights
    scale = j_i * j_j
    value = scale * (w @ (x * y) - (w @ x) * (w @ y))
    if table.n_shots is None:
        return float(value), 0.0
    n = table.n_shots
    if n < 2:
        return float(value), float("inf")
    cnt = table.count_array
    sx, sy, sxy = cnt @ x, cnt @ y, cnt @ (x * y)
    # Leave out one shot of each distinct outcome.
    m = n - 1
    loo = scale * ((sxy - x * y) / m - ((sx - x) / m) * ((sy - y) / m))
    loo_mean = cnt @ loo / n
    var = (n - 1) / n * (cnt @ (loo - loo_mean) ** 2)
    return float(value), float(np.sqrt(var))


def estimate_bond_kinetic(table: _Table, rung: int, sign_convention: int) -> tuple[float, float]:
    """sign * (n_j - n_{j+1}) after the idle + beamsplitter rotation."""
    if sign_convention not in (1, -1):
        raise ParameterError("sign_convention must be +1 or -1")
    _require(table, ("bond_kinetic",), rung)
    mean, err = _mean_and_stderr(table, table.differences(rung))
    return sign_convention * mean, err


def calibrate_bond_sign(delta: float, j: float = 1.0, t_idle: float | None = None) -> int:
    """Sign that maps the bond protocol's imbalance onto +O_j.

    Runs the protocol on (|10> + |01>)/sqrt2, whose bond energy is +1.
    """
    spec = LatticeSpec.uniform(2, j=j)
    basis = FockBasis(2, 1, 1)
    psi = StateVector.from_terms(basis, {(1, 0): 1.0, (0, 1): 1.0})
    plan = MeasurementPlan("bond_kinetic", (0,), shots=None, delta=delta, t_idle=t_idle)
    value, _ = estimate_bond_kinetic(measure(psi, plan, spec), 0, 1)
    if abs(abs(value) - 1.0) > 1e-6:
        raise FitError("bond calibration did not reach a pole; check t_idle", abs(abs(value) - 1.0))
    return 1 if value > 0 else -1


def estimate_plan(table: _Table, plan: MeasurementPlan, spec: LatticeSpec, sign_convention: int | None = None
                  ) -> dict:
    """All estimates a plan supports, keyed by kind and 0-based rung(s)."""
    out = {}
    if plan.kind in ("current", "current_correlation"):
        for r in plan.rungs:
            out[("current", r)] = estimate_current(table, r, spec.j_rung[r])
    if plan.kind == "current_correlation":
        a, b = sorted(plan.rungs)
        out[("g", a, b)] = estimate_current_correlation(table, a, b, spec.j_rung[a], spec.j_rung[b])
    if plan.kind == "bond_kinetic":
        sign = sign_convention if sign_convention is not None else calibrate_bond_sign(plan.delta, t_idle=plan.t_idle)
        for r in plan.rungs:
            out[("bond", r)] = estimate_bond_kinetic(table, r, sign)
    return out
