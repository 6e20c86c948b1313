"""Open-system evolution: amplitude damping (T1) and pure dephasing (T2R).

Master equation, with D[L]rho = L rho L+ - {L+ L, rho}/2:

    drho/dt = -i [H, rho] + sum_j g1_j D[a_j] rho + sum_j 2 gphi_j D[n_j] rho

where g1 = 1/T1 and gphi = 1/T2R - 1/(2 T1). The n_j dephasing channel at
rate 2 gphi makes a single-excitation coherence decay at exactly 1/T2R.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .engine import EngineError, RampSchedule
from .fock import FockBasis, LatticeSpec, MultiSectorBasis, ParameterError, StateVector
from .hamiltonian import SparseOperator, annihilation_operator, assemble
from .observables import ObservableReport, build_report

#: Placeholder coherence times (not device values): T1 = 30 us, T2R = 20 us.
PLACEHOLDER_T1 = 30e-6
PLACEHOLDER_T2R = 20e-6


@dataclass(frozen=True)
class NoiseModel:
    """Per-site T1 and Ramsey T2R in seconds."""

    t1: tuple[float, ...]
    t2r: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "t1", tuple(float(x) for x in self.t1))
        object.__setattr__(self, "t2r", tuple(float(x) for x in self.t2r))
        if len(self.t1) != len(self.t2r):
            raise ParameterError("t1 and t2r need the same number of sites")
        for j, (a, b) in enumerate(zip(self.t1, self.t2r)):
            if not (a > 0 and b > 0):
                raise ParameterError(f"NoiseModel invariant violated: non-positive coherence time at site {j + 1}")
            if b > 2 * a * (1 + 1e-12):
                raise ParameterError(f"NoiseModel invariant violated: T2R > 2 T1 at site {j + 1}")

    @classmethod
    def uniform(cls, n_sites: int, t1: float = PLACEHOLDER_T1, t2r: float = PLACEHOLDER_T2R) -> "NoiseModel":
        return cls((t1,) * n_sites, (t2r,) * n_sites)

    @classmethod
    def noiseless(cls, n_sites: int) -> "NoiseModel":
        return cls((math.inf,) * n_sites, (math.inf,) * n_sites)

    @property
    def n_sites(self) -> int:
        return len(self.t1)

    @property
    def gamma1(self) -> np.ndarray:
        return 1.0 / np.asarray(self.t1)

    @property
    def gamma_phi(self) -> np.ndarray:
        g = 1.0 / np.asarray(self.t2r) - 0.5 / np.asarray(self.t1)
        return np.clip(g, 0.0, None)

    def to_dict(self) -> dict:
        return {"t1": list(self.t1), "t2r": list(self.t2r)}


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    basis: object
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ParameterError("density matrix shape does not match basis")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_state(cls, state: StateVector, multi_sector: bool = True) -> "DensityMatrix":
        """Pure-state density matrix, embedded into sectors 0..N if asked."""
        if multi_sector and isinstance(state.basis, FockBasis):
            b = state.basis
            state = MultiSectorBasis(b.n_sites, b.total_number, b.n_max).embed(state)
        psi = state.amplitudes
        return cls(state.basis, np.outer(psi, psi.conj()))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(la.eigvalsh(h)[0])

    def check(self, trace_tol: float = 1e-8, herm_tol: float = 1e-10, pos_tol: float = 1e-8) -> dict:
        """Invariant diagnostics; ``ok`` is False if any bound is broken."""
        diag = {"trace_error": abs(self.trace() - 1.0), "hermiticity": self.hermiticity_defect(),
                "min_eigenvalue": self.min_eigenvalue()}
        diag["ok"] = (diag["trace_error"] <= trace_tol and diag["hermiticity"] <= herm_tol
                      and diag["min_eigenvalue"] >= -pos_tol)
        return diag

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)) @ self.basis.occupations

    def fidelity(self, state: StateVector) -> float:
        psi = state.amplitudes
        return float(np.real(np.vdot(psi, self.matrix @ psi)))


def jump_operators(basis, model: NoiseModel) -> list[tuple[float, SparseOperator, str]]:
    """(rate, operator, label) for every nonzero channel."""
    if model.n_sites != basis.n_sites:
        raise ParameterError("noise model and basis disagree on the number of sites")
    out = []
    for j in range(basis.n_sites):
        g1 = model.gamma1[j]
        if g1 > 0:
            out.append((g1, annihilation_operator(basis, j), f"damp{j}"))
        gp = model.gamma_phi[j]
        if gp > 0:
            occ = basis.occupations[:, j].astype(float)
            out.append((2.0 * gp, SparseOperator(basis, sp.diags(occ + 0j).tocsr(), True), f"dephase{j}"))
    return out


def _decay_rates(basis, model: NoiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal of sum_k L_k+ L_k and the dephasing matrix M_ab."""
    occ = basis.occupations.astype(float)
    g1 = np.nan_to_num(model.gamma1)
    kappa = 2.0 * model.gamma_phi
    loss = occ @ g1 + (occ ** 2) @ kappa
    diff2 = np.zeros((basis.dim, basis.dim))
    for j in np.nonzero(kappa)[0]:
        d = occ[:, j][:, None] - occ[:, j][None, :]
        diff2 += kappa[j] * d ** 2
    return loss, diff2


class Liouvillian:
    """Right-hand side of the master equation acting on dense matrices."""

    def __init__(self, basis, model: NoiseModel, hamiltonian):
        self.basis = basis
        self.dim = basis.dim
        occ = basis.occupations.astype(float)
        g1 = model.gamma1
        self._damp = [(g1[j], annihilation_operator(basis, j).matrix) for j in range(basis.n_sites) if g1[j] > 0]
        kappa = 2.0 * model.gamma_phi
        k_damp = occ @ np.where(np.isfinite(g1), g1, 0.0)
        # -1/2 {K, rho} for damping and the full dephasing dissipator are elementwise.
        self._elementwise = -0.5 * (k_damp[:, None] + k_damp[None, :])
        for j in np.nonzero(kappa)[0]:
            d = occ[:, j][:, None] - occ[:, j][None, :]
            self._elementwise -= 0.5 * kappa[j] * d ** 2
        self._h = hamiltonian

    def hamiltonian(self, t: float) -> np.ndarray:
        h = self._h(t) if callable(self._h) else self._h
        if isinstance(h, SparseOperator):
            h = h.to_dense()
        elif sp.issparse(h):
            h = h.toarray()
        return h

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        h = self.hamiltonian(t)
        out = -1j * (h @ rho - rho @ h) + self._elementwise * rho
        for g, a in self._damp:
            out += g * (a @ (a @ rho.conj().T).conj().T)
        return out


def _static_dense(H):
    if isinstance(H, SparseOperator):
        return H.to_dense()
    return H


def lindblad_evolve(rho: DensityMatrix, H, model: NoiseModel, t: float, dt: float,
                    rtol: float = 1e-10, atol: float = 1e-12, times=None):
    """Integrate the master equation for time ``t``.

    ``H`` is a SparseOperator on ``rho.basis`` or a callable ``t -> matrix``.
    ``dt`` caps the adaptive Runge-Kutta step. With ``times`` given, returns
    the list of density matrices at those times instead of the final one.
    Raises :class:`EngineError` if the trace drifts by more than 1e-6.
    """
    if isinstance(H, SparseOperator) and H.basis != rho.basis:
        raise ParameterError("Hamiltonian and density matrix bases differ")
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if t == 0 and times is None:
        return rho
    rhs = Liouvillian(rho.basis, model, H if callable(H) else _static_dense(H))
    d = rho.basis.dim

    def f(tt, y):
        return rhs(tt, y.reshape(d, d)).reshape(-1)

    t_eval = [t] if times is None else list(times)
    sol = solve_ivp(f, (0.0, t_eval[-1]), rho.matrix.reshape(-1), method="DOP853", t_eval=t_eval,
                    rtol=rtol, atol=atol, max_step=dt)
    if not sol.success:
        raise EngineError(f"master-equation integration failed: {sol.message}")
    trace0 = rho.trace()
    out = []
    for k in range(sol.y.shape[1]):
        m = sol.y[:, k].reshape(d, d)
        drift = abs(np.trace(m) - trace0)
        if drift > 1e-6:
            raise EngineError(f"trace drift {drift:.2e} exceeds 1e-6; use a smaller dt")
        out.append(DensityMatrix(rho.basis, m))
    return out[0] if times is None else out


def liouvillian_matrix(basis, H, model: NoiseModel) -> np.ndarray:
    """Dense superoperator on row-major vec(rho); for small reference checks."""
    h = _static_dense(H)
    d = basis.dim
    eye = np.eye(d)
    sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for rate, op, _ in jump_operators(basis, model):
        L = op.to_dense()
        LdL = L.conj().T @ L
        sup += rate * (np.kron(L, L.conj()) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T))
    return sup


@dataclass(eq=False)
class TrajectoryEnsemble:
    """Final normalized states of quantum-jump trajectories (one per row)."""

    basis: object
    amplitudes: np.ndarray = field(repr=False)
    n_jumps: np.ndarray = field(repr=False)

    @property
    def n_traj(self) -> int:
        return self.amplitudes.shape[0]

    def state(self, k: int) -> StateVector:
        return StateVector(self.basis, self.amplitudes[k])

    def expectation(self, op: SparseOperator) -> tuple[float, float]:
        """Ensemble mean of <op> and its standard error across trajectories."""
        vals = np.einsum("ki,ki->k", self.amplitudes.conj(), (op.matrix @ self.amplitudes.T).T).real
        return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0

    def density_matrix(self, rows=None) -> DensityMatrix:
        a = self.amplitudes if rows is None else self.amplitudes[rows]
        return DensityMatrix(self.basis, a.T @ a.conj() / a.shape[0])

    def report(self, spec: LatticeSpec, n_blocks: int = 50) -> tuple[ObservableReport, dict]:
        """Report of the ensemble state with block-jackknife standard errors."""
        full = build_report(self.density_matrix(), spec)
        blocks = np.array_split(np.arange(self.n_traj), n_blocks)
        flats = []
        for b in range(n_blocks):
            keep = np.concatenate([blk for k, blk in enumerate(blocks) if k != b])
            flats.append(_flatten(build_report(self.density_matrix(keep), spec)))
        flats = np.array(flats)
        err = np.sqrt((n_blocks - 1) / n_blocks * ((flats - flats.mean(axis=0)) ** 2).sum(axis=0))
        return full, dict(zip(_flat_keys(full), err))


def _flat_keys(rep: ObservableReport) -> list[str]:
    n = rep.n_sites
    keys = [f"one_body_re[{i},{j}]" for i in range(n) for j in range(n)]
    keys += [f"one_body_im[{i},{j}]" for i in range(n) for j in range(n)]
    keys += [f"current[{j}]" for j in range(len(rep.currents))]
    keys += [f"g[{i},{j}]" for (i, j) in sorted(rep.g_matrix)]
    keys += ["chiral_c"] + [f"bond_o[{j}]" for j in range(len(rep.bond_o))] + ["bond_order"]
    return keys


def _flatten(rep: ObservableReport) -> np.ndarray:
    return np.concatenate([rep.one_body.real.ravel(), rep.one_body.imag.ravel(), rep.currents,
                           [rep.g_matrix[k] for k in sorted(rep.g_matrix)], [rep.chiral_c], rep.bond_o,
                           [rep.bond_order]])


def flatten_report(rep: ObservableReport) -> dict[str, float]:
    return dict(zip(_flat_keys(rep), _flatten(rep)))


def trajectory_evolve(state: StateVector, H: SparseOperator, model: NoiseModel, t: float, dt: float,
                      n_traj: int, seed: int) -> TrajectoryEnsemble:
    """Quantum-jump unraveling of the master equation.

    All trajectories advance together under the non-Hermitian effective
    Hamiltonian; a trajectory jumps when its squared norm falls below its
    current uniform draw. Raises if the per-step jump probability can
    exceed 0.1.
    """
    if state.basis != H.basis:
        raise ParameterError("state and Hamiltonian bases differ")
    if n_traj < 1:
        raise ParameterError("need at least one trajectory")
    basis = state.basis
    channels = jump_operators(basis, model)
    loss, _ = _decay_rates(basis, model)
    n_steps = max(1, math.ceil(t / dt - 1e-9)) if t > 0 else 0
    h = t / n_steps if n_steps else 0.0
    if n_steps and 1.0 - math.exp(-h * loss.max()) > 0.1:
        raise EngineError("jump probability per step exceeds 0.1; use a smaller dt")
    rng = np.random.default_rng(seed)
    psi = np.tile(state.amplitudes, (n_traj, 1)).T.copy()
    jumps = np.zeros(n_traj, dtype=int)
    if n_steps:
        u_eff = la.expm(-1j * h * (H.to_dense() - 0.5j * np.diag(loss)))
        thresholds = rng.random(n_traj)
        ops = [(np.sqrt(rate) * op.matrix) for rate, op, _ in channels]
        for _ in range(n_steps):
            psi = u_eff @ psi
            norms = np.einsum("ij,ij->j", psi.conj(), psi).real
            hit = np.nonzero(norms < thresholds)[0]
            if hit.size and ops:
                sub = psi[:, hit]
                cand = np.array([L @ sub for L in ops])
                w = np.einsum("kij,kij->kj", cand.conj(), cand).real
                cum = np.cumsum(w, axis=0)
                draw = rng.random(hit.size) * cum[-1]
                which = (cum < draw[None, :]).sum(axis=0)
                which = np.minimum(which, len(ops) - 1)
                new = cand[which, :, np.arange(hit.size)].T
                psi[:, hit] = new / np.sqrt(w[which, np.arange(hit.size)])[None, :]
                thresholds[hit] = rng.random(hit.size)
                jumps[hit] += 1
        psi = psi / np.sqrt(np.einsum("ij,ij->j", psi.conj(), psi).real)[None, :]
    return TrajectoryEnsemble(basis, psi.T.copy(), jumps)


def apply_protocol_open(rho: DensityMatrix, plan, spec: LatticeSpec, model: NoiseModel, dt: float,
                        include_interaction: bool = False) -> DensityMatrix:
    """The measurement protocol with decoherence during every window."""
    from .protocol import protocol_steps

    for h, duration in protocol_steps(plan, spec, rho.basis, include_interaction):
        rho = lindblad_evolve(rho, h, model, duration, dt)
    return rho


def lindblad_ramp(schedule: RampSchedule, spec: LatticeSpec, model: NoiseModel, dt: float = 0.5e-9,
                  rtol: float = 1e-8, atol: float = 1e-10) -> DensityMatrix:
    """Open-system version of the preparation ramp on sectors 0..N."""
    basis = MultiSectorBasis(spec.n_sites, sum(schedule.initial), spec.n_max)
    sector = basis.blocks[sum(schedule.initial)]
    rho = DensityMatrix.from_state(StateVector.product(sector, schedule.initial))
    static = assemble(spec, basis).to_dense()
    occ = basis.occupations.astype(float)
    starts = np.cumsum([0.0] + [s.duration for s in schedule.segments])

    def ham(t: float) -> np.ndarray:
        k = int(np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(schedule.segments) - 1))
        seg = schedule.segments[k]
        return static + np.diag(occ @ seg.detuning(t - starts[k]))

    if not schedule.segments:
        return rho
    return lindblad_evolve(rho, ham, model, schedule.duration, dt, rtol=rtol, atol=atol)


__all__ = [
    "DensityMatrix", "Liouvillian", "NoiseModel", "TrajectoryEnsemble", "apply_protocol_open", "jump_operators",
    "lindblad_evolve", "lindblad_ramp", "liouvillian_matrix", "trajectory_evolve",
]
