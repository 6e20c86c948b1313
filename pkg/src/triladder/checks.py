"""Invariant suite behind ``triladder verify``.

Each check returns ``(passed, detail)``; :func:`run_checks` times them and
collects machine-readable results. Checks tied to the user's config (plans,
noise model, sweep specs) run alongside the fixed library invariants.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from . import reference
from .config import ExperimentConfig, spawn_seeds
from .engine import device_schedule, evolve, evolve_ramp, ground_manifold, prepared_state
from .fock import LatticeSpec, MultiSectorBasis, StateVector, apply_hop, build_basis, count_states
from .hamiltonian import assemble, gauge_transform, hop_operator, negate_map, total_number_operator
from .noise import DensityMatrix, NoiseModel, lindblad_evolve, trajectory_evolve
from .observables import build_report
from .protocol import (
    MeasurementPlan,
    apply_protocol,
    born_table,
    calibrate_bond_sign,
    calibrate_tbs,
    estimate_plan,
    fit_tbs_from_trace,
    measure,
    swap_trace,
)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def random_spec(rng: np.random.Generator, n_sites: int, n_max: int, flux: float | None = None) -> LatticeSpec:
    return LatticeSpec(n_sites, rng.normal(0, 1, n_sites), rng.normal(0, 3, n_sites),
                       rng.uniform(0.3, 2, n_sites - 1), rng.uniform(0.3, 2, n_sites - 2),
                       rng.choice([0.0, math.pi]) if flux is None else flux, n_max)


# -- lattice-fock ----------------------------------------------------------------

def check_basis_counts():
    bad = []
    for n in range(1, 9):
        for n_max in range(1, 5):
            sums = reference.full_occupations(n, n_max).sum(axis=1)
            for total in range(0, 5):
                if total > n * n_max:
                    continue
                expected = int(np.sum(sums == total))
                if build_basis(n, total, n_max).dim != expected or count_states(n, total, n_max) != expected:
                    bad.append((n, total, n_max))
    sizes = [build_basis(8, 4, m).dim for m in (1, 4, 2)]
    ok = not bad and sizes == [70, 330, 266]
    return ok, f"mismatches={bad} sizes(8,4,[1,4,2])={sizes}"


def check_index_roundtrip():
    for args in ((8, 4, 1), (8, 4, 4), (6, 3, 2)):
        b = build_basis(*args)
        if any(b.index[s] != k for k, s in enumerate(b.states)):
            return False, f"round trip failed for {args}"
        if list(b.states) != sorted(b.states, reverse=True):
            return False, f"ordering not lexicographic descending for {args}"
    return True, "index(states[k]) == k"


def check_hop_adjoint():
    b = build_basis(4, 3, 2)
    worst = 0.0
    for i in range(4):
        for j in range(4):
            if i != j:
                worst = max(worst, float(np.abs(hop_operator(b, i, j).to_dense()
                                                - hop_operator(b, j, i).to_dense().conj().T).max()))
    psi = StateVector.product(build_basis(2, 2, 2), (1, 1))
    out = apply_hop(psi, 0, 1)
    elem = out.amplitudes[out.basis.index[(2, 0)]]
    return worst == 0.0 and abs(elem - math.sqrt(2)) < 1e-15, f"adjoint defect={worst} <20|a+a|11>={elem}"


# -- hamiltonian -------------------------------------------------------------------

def check_hermitian_number_conserving():
    rng = np.random.default_rng(1)
    spec = random_spec(rng, 5, 2)
    mb = MultiSectorBasis(5, 3, 2)
    h = assemble(spec, mb)
    n_op = total_number_operator(mb)
    comm = (h.matrix @ n_op.matrix - n_op.matrix @ h.matrix)
    comm_max = float(abs(comm).max()) if comm.nnz else 0.0
    return h.hermiticity_defect() == 0.0 and comm_max == 0.0, f"hermiticity={h.hermiticity_defect()} [H,N]={comm_max}"


def check_sign_trick(n_specs: int = 50):
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(n_specs):
        n = int(rng.integers(2, 7))
        n_max = int(rng.integers(1, 3))
        spec = random_spec(rng, n, n_max) if n >= 3 else LatticeSpec(
            2, rng.normal(0, 1, 2), rng.normal(0, 3, 2), rng.uniform(0.3, 2, 1), (), 0.0, n_max)
        total = int(rng.integers(0, n * n_max + 1))
        b = build_basis(n, total, n_max)
        e1 = np.sort(-la.eigvalsh(assemble(spec, b).to_dense()))
        e2 = la.eigvalsh(assemble(negate_map(spec), b).to_dense())
        worst = max(worst, float(np.abs(e1 - e2).max()) / max(1.0, float(np.abs(e1).max())))
    return worst <= 1e-10, f"max relative spectral mismatch over {n_specs} specs={worst:.2e}"


def check_pauli_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for n in (3, 5, 6):
        spec = random_spec(rng, n, 1)
        pauli = reference.pauli_xx_hamiltonian(spec)
        occ = reference.full_occupations(n, 1)
        for total in range(n + 1):
            b = build_basis(n, total, 1)
            idx = [int(np.nonzero((occ == s).all(axis=1))[0][0]) for s in b.states]
            worst = max(worst, float(np.abs(pauli[np.ix_(idx, idx)] - assemble(spec, b).to_dense()).max()))
    return worst <= 1e-12, f"max |H - H_pauli|={worst:.2e}"


def check_gauge_covariance():
    rng = np.random.default_rng(4)
    spec = random_spec(rng, 6, 2)
    b = build_basis(6, 3, 2)
    h = assemble(spec, b).to_dense()
    u = np.diag(gauge_transform(b, rng.uniform(0, 2 * math.pi, 6)))
    diff = float(np.abs(la.eigvalsh(u @ h @ u.conj().T) - la.eigvalsh(h)).max())
    return diff <= 1e-10, f"spectral change under random gauge={diff:.2e}"


def check_small_spectra():
    golden = reference.load_golden()
    ok, parts = True, []
    for flux in (0.0, math.pi):
        spec = LatticeSpec.uniform(3, j=1.0, j_leg=1.0, flux=flux)
        ev = la.eigvalsh(assemble(spec, build_basis(3, 1, 1)).to_dense())
        ref = golden[f"triangle_spectrum/flux={flux:.6f}"]["value"]
        ok &= bool(np.allclose(ev, ref, atol=1e-10))
        parts.append(f"flux={flux:.3f}: {np.round(ev, 10).tolist()}")
    return ok, "; ".join(parts)


# -- engine ----------------------------------------------------------------------------

def check_eigensolver():
    rng = np.random.default_rng(5)
    worst_res, worst_ev = 0.0, 0.0
    for n, total, n_max in ((6, 3, 2), (8, 4, 1), (5, 2, 3)):
        spec = random_spec(rng, n, n_max)
        h = assemble(spec, build_basis(n, total, n_max))
        man = ground_manifold(h)
        psi = man.states[0].amplitudes
        norm = h.norm_estimate()
        worst_res = max(worst_res, float(np.linalg.norm(h.matrix @ psi - man.energies[0] * psi)) / norm)
        worst_ev = max(worst_ev, abs(man.energies[0] - la.eigvalsh(h.to_dense())[0]) / norm)
    return worst_res <= 1e-10 and worst_ev <= 1e-9, f"residual/|H|={worst_res:.2e} eigen error/|H|={worst_ev:.2e}"


def check_evolution():
    rng = np.random.default_rng(6)
    spec = random_spec(rng, 6, 2)
    b = build_basis(6, 3, 2)
    h = assemble(spec, b)
    psi = StateVector(b, rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)).normalized()
    t1, t2 = 0.37, 0.81
    a = evolve(evolve(psi, h, t1), h, t2)
    c = evolve(psi, h, t1 + t2)
    comp = float(np.abs(a.amplitudes - c.amplitudes).max())
    x = psi
    for _ in range(1000):
        x = evolve(x, h, 0.01)
    drift = abs(x.norm() - 1.0)
    e0 = np.vdot(psi.amplitudes, h.matrix @ psi.amplitudes).real
    e1 = np.vdot(x.amplitudes, h.matrix @ x.amplitudes).real
    e_err = abs(e1 - e0) / h.norm_estimate()
    ok = comp <= 1e-9 and drift <= 1e-10 and e_err <= 1e-9
    return ok, f"composition={comp:.1e} norm drift(1e3 steps)={drift:.1e} energy drift/|H|={e_err:.1e}"


def check_ramp_golden(dt: float = 0.2e-9):
    golden = reference.load_golden()["ramp/fidelity_300ns"]
    spec = LatticeSpec.from_ratio(-1.22)
    b = build_basis(8, 4, 1)
    res = evolve_ramp(device_schedule(), spec, b, dt=dt, target=prepared_state(spec, b))
    dev = abs(res.fidelity - golden["value"])
    return dev <= golden["tolerance"], f"fidelity={res.fidelity:.9f} golden={golden['value']:.9f} dev={dev:.1e}"


# -- observables ---------------------------------------------------------------------------

def check_observables_vs_oracle():
    golden = reference.load_golden()
    b = build_basis(8, 4, 1)
    worst = 0.0
    for ratio in sorted(set(reference.CHIRAL_RATIOS) | set(reference.BOND_RATIOS)):
        spec = LatticeSpec.from_ratio(ratio, j=1.0, u=-30.5)
        key = f"ladder/{ratio:+.2f}"
        if golden[f"{key}/g"]["spec_hash"] != spec.digest():
            return False, f"golden spec hash mismatch at {ratio}"
        rep = build_report(prepared_state(spec, b), spec)
        g_ref = {(i, j): v for i, j, v in golden[f"{key}/g"]["value"]}
        worst = max(worst,
                    max(abs(rep.g_matrix[k] - v) for k, v in g_ref.items()),
                    abs(rep.chiral_c - golden[f"{key}/chiral_c"]["value"]),
                    float(np.abs(rep.bond_o - golden[f"{key}/bond_o"]["value"]).max()),
                    float(np.abs(rep.currents).max()))
        m = rep.one_body
        if abs(np.trace(m) - 4) > 1e-12 or np.abs(m - m.conj().T).max() > 1e-12:
            return False, f"one-body matrix invariant broken at {ratio}"
    return worst <= 1e-10, f"max deviation from dense oracle (G, C, O_j, currents)={worst:.1e}"


def check_reflection():
    spec = LatticeSpec.from_ratio(-1.22, j=1.0)
    b = build_basis(8, 4, 1)
    rep = build_report(prepared_state(spec, b), spec)
    r = spec.n_rungs - 1
    worst = max(abs(v - rep.g_matrix[tuple(sorted((r - j, r - i)))]) for (i, j), v in rep.g_matrix.items())
    return worst <= 1e-10, f"mirror asymmetry of G={worst:.1e}"


# -- protocol -----------------------------------------------------------------------------

def check_estimator_exactness(config: ExperimentConfig | None = None):
    ratios = reference.CHIRAL_RATIOS
    b = build_basis(8, 4, 1)
    worst = 0.0
    sign = calibrate_bond_sign(2 * math.pi * 10e6)
    for ratio in ratios:
        spec = LatticeSpec.from_ratio(ratio)
        psi = prepared_state(spec, b)
        rep = build_report(psi, spec)
        scale = rep.j_scale
        for i, j in rep.g_matrix:
            plan = MeasurementPlan("current_correlation", (i, j), shots=None)
            est = estimate_plan(measure(psi, plan, spec), plan, spec)
            worst = max(worst, abs(est[("g", i, j)][0] / scale ** 2 - rep.g_matrix[(i, j)]),
                        abs(est[("current", i)][0] / scale - rep.currents[i]))
        for group in ((0, 2, 4, 6), (1, 3, 5)):
            plan = MeasurementPlan("bond_kinetic", group, shots=None, delta=2 * math.pi * 10e6)
            est = estimate_plan(measure(psi, plan, spec), plan, spec, sign)
            worst = max(worst, max(abs(est[("bond", r)][0] - rep.bond_o[r]) for r in group))
    return worst <= 1e-10, f"max |estimator - exact| over six ratios (units of J, J^2)={worst:.1e}"


def check_pair_isolation():
    spec = LatticeSpec.from_ratio(-1.22)
    b = build_basis(8, 4, 1)
    psi = prepared_state(spec, b)
    plan = MeasurementPlan("current_correlation", (0, 4), shots=None)
    before = psi.populations()
    after = born_table(apply_protocol(psi, plan, spec)).populations()
    untouched = [k for k in range(8) if k not in (0, 1, 4, 5)]
    diff = float(np.abs(after[untouched] - before[untouched]).max())
    return diff <= 1e-12, f"population change off the plan pairs={diff:.1e}"


def check_sampling_determinism():
    spec = LatticeSpec.from_ratio(-1.22)
    b = build_basis(8, 4, 1)
    psi = prepared_state(spec, b)
    plan = MeasurementPlan("current_correlation", (0, 6), shots=5000, seed=99)
    t1, t2 = measure(psi, plan, spec), measure(psi, plan, spec)
    return t1.counts == t2.counts and t1.total == 5000, f"{len(t1.counts)} distinct strings, identical counts"


def check_tbs_calibration():
    j = 2 * math.pi * 6.1e6
    analytic = calibrate_tbs(j)
    times = np.linspace(0, 80e-9, 161)
    fitted = fit_tbs_from_trace(times, swap_trace(j, times))
    rel = abs(fitted - analytic) / analytic
    ok = rel < 1e-3 and abs(analytic * 1e9 - 20.49) / 20.49 < 5e-3
    return ok, f"analytic={analytic * 1e9:.4f} ns fitted={fitted * 1e9:.4f} ns rel={rel:.1e}"


# -- noise ---------------------------------------------------------------------------------

def check_lindblad_invariants():
    spec = LatticeSpec.uniform(3, j=1.0, j_leg=0.5, flux=math.pi)
    mb = MultiSectorBasis(3, 1, 1)
    psi = mb.embed(StateVector.product(build_basis(3, 1, 1), (1, 0, 0)))
    model = NoiseModel((8.0, 10.0, 12.0), (6.0, 9.0, 15.0))
    rho = lindblad_evolve(DensityMatrix.from_state(psi), assemble(spec, mb), model, 5.0, 0.05)
    diag = rho.check()
    ref = reference.load_golden()["lindblad/three_site_t5"]["value"]
    idx = [mb.index_of(tuple(o)) for o in ref["occupations"]]
    ref_rho = np.array(ref["rho"]["real"]) + 1j * np.array(ref["rho"]["imag"])
    dev = float(np.abs(rho.matrix[np.ix_(idx, idx)] - ref_rho).max())
    ok = diag["ok"] and diag["trace_error"] <= 1e-8 and dev <= 1e-8
    return ok, f"trace error={diag['trace_error']:.1e} min eig={diag['min_eigenvalue']:.1e} vs oracle={dev:.1e}"


def check_zero_noise_limit():
    spec = LatticeSpec.uniform(3, j=1.0, j_leg=0.7, flux=math.pi)
    mb = MultiSectorBasis(3, 2, 1)
    h = assemble(spec, mb)
    psi = mb.embed(StateVector.product(build_basis(3, 2, 1), (1, 1, 0)))
    exact = evolve(psi, h, 2.0)
    rho = lindblad_evolve(DensityMatrix.from_state(psi), h, NoiseModel.noiseless(3), 2.0, 0.02)
    ens = trajectory_evolve(psi, h, NoiseModel.noiseless(3), 2.0, 0.02, 4, 0)
    f_lind = rho.fidelity(exact)
    f_traj = min(abs(np.vdot(exact.amplitudes, ens.amplitudes[k])) ** 2 for k in range(4))
    return min(f_lind, f_traj) >= 1 - 1e-8, f"fidelity lindblad={f_lind:.12f} trajectories={f_traj:.12f}"


def check_noise_model(config: ExperimentConfig):
    if config.noise is None:
        return True, "no noise model configured"
    m = config.noise
    return bool(np.all(m.gamma_phi >= 0)), f"T1={list(m.t1)} T2R={list(m.t2r)}"


# -- config ------------------------------------------------------------------------------------

def check_config_plans(config: ExperimentConfig):
    n = 0
    for ratio in config.sweep:
        spec = config.spec(ratio)
        groups = [(t, r) for t in config.plans for r in t.expand(spec.n_rungs)]
        for (tpl, rungs), s in zip(groups, spawn_seeds(config.seed, len(groups))):
            tpl.build(rungs, s).check(spec)
            n += 1
    return True, f"{n} plan instances valid across {len(config.sweep)} ratios"


LIBRARY_CHECKS: list[tuple[str, Callable]] = [
    ("basis_counts", check_basis_counts),
    ("index_roundtrip", check_index_roundtrip),
    ("hop_adjoint", check_hop_adjoint),
    ("hamiltonian_hermitian_number_conserving", check_hermitian_number_conserving),
    ("sign_trick_spectra", check_sign_trick),
    ("pauli_xx_oracle", check_pauli_oracle),
    ("gauge_covariance", check_gauge_covariance),
    ("small_spectra", check_small_spectra),
    ("eigensolver_residual", check_eigensolver),
    ("evolution_unitarity", check_evolution),
    ("ramp_fidelity_golden", check_ramp_golden),
    ("observables_vs_oracle", check_observables_vs_oracle),
    ("reflection_symmetry", check_reflection),
    ("estimator_exactness", check_estimator_exactness),
    ("pair_isolation", check_pair_isolation),
    ("sampling_determinism", check_sampling_determinism),
    ("tbs_calibration", check_tbs_calibration),
    ("lindblad_invariants", check_lindblad_invariants),
    ("zero_noise_limit", check_zero_noise_limit),
]

CONFIG_CHECKS: list[tuple[str, Callable]] = [
    ("config_plans", check_config_plans),
    ("noise_model", check_noise_model),
]


def run_checks(config: ExperimentConfig, only: list[str] | None = None) -> list[CheckResult]:
    results = []
    for name, fn in CONFIG_CHECKS + LIBRARY_CHECKS:
        if only and name not in only:
            continue
        start = time.perf_counter()
        try:
            passed, detail = fn(config) if (name, fn) in CONFIG_CHECKS else fn()
        except Exception as exc:  # a raising check is a failing check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(passed), detail, round(time.perf_counter() - start, 3)))
    return results
