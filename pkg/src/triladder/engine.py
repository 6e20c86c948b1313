"""Eigen-solvers and unitary time evolution."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la

from .fock import FockBasis, LatticeSpec, ParameterError, StateVector, inner
from .hamiltonian import SparseOperator, assemble, negate_map, staggered_gauge

DENSE_EIG_MAX_DIM = 2000
DENSE_EXPM_MAX_DIM = 500
DEGENERACY_RTOL = 1e-8


class EngineError(RuntimeError):
    pass


class ConvergenceError(EngineError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class DegeneracyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EigenManifold:
    """Lowest eigenvalues/vectors with a degeneracy flag.

    ``states`` holds an orthonormal basis of the ground manifold when
    ``degenerate`` is set, otherwise just the ground state.
    """

    energies: np.ndarray
    states: tuple[StateVector, ...]
    gap: float
    degenerate: bool

    @property
    def energy(self) -> float:
        return float(self.energies[0])


def _require_hermitian(op: SparseOperator):
    if not op.hermitian or op.hermiticity_defect() > 0:
        raise EngineError("eigensolver needs a Hermitian operator")


def lanczos(matvec, dim: int, k: int = 2, tol: float = 1e-12, max_iter: int = 400, seed: int = 0,
            scale: float = 1.0):
    """Lowest ``k`` eigenpairs by Lanczos with full reorthogonalization.

    Convergence is judged on the true residual of every requested Ritz pair
    relative to ``scale`` (an estimate of the operator norm).
    """
    rng = np.random.default_rng(seed)
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    v /= np.linalg.norm(v)
    m_cap = min(max_iter, dim)
    V = np.zeros((m_cap + 1, dim), dtype=complex)
    alpha = np.zeros(m_cap)
    beta = np.zeros(m_cap)
    V[0] = v
    residual = np.inf
    for m in range(m_cap):
        w = matvec(V[m])
        alpha[m] = np.vdot(V[m], w).real
        # Two Gram-Schmidt passes keep the basis orthogonal to machine precision.
        for _ in range(2):
            w -= V[: m + 1].T @ (V[: m + 1].conj() @ w)
        beta[m] = np.linalg.norm(w)
        size = m + 1
        if size >= k and (size % 5 == 0 or beta[m] < 1e-13 * scale or size == m_cap):
            theta, s = la.eigh_tridiagonal(alpha[:size], beta[: size - 1])
            vecs = (V[:size].T @ s[:, :k]).T
            res = [np.linalg.norm(matvec(x) - t * x) for x, t in zip(vecs, theta[:k])]
            residual = max(res)
            if residual <= tol * scale:
                return theta[:k], vecs
        if beta[m] < 1e-13 * scale:
            break
        V[m + 1] = w / beta[m]
    raise ConvergenceError("Lanczos did not converge", residual)


def ground_manifold(op: SparseOperator, k: int = 2, rtol: float = DEGENERACY_RTOL) -> EigenManifold:
    """Lowest eigenpairs of ``op``, flagging a (near) degenerate ground state."""
    _require_hermitian(op)
    scale = max(op.norm_estimate(), 1e-300)
    k = min(k, op.dim)
    if op.dim <= DENSE_EIG_MAX_DIM:
        w, v = la.eigh(op.to_dense())
        energies, vecs = w, v.T
    else:
        energies, vecs = lanczos(op.matrix.__matmul__, op.dim, k=max(k, 2), tol=1e-11, scale=scale)
    gap = float(energies[1] - energies[0]) if len(energies) > 1 else math.inf
    degenerate = gap < rtol * scale
    n_keep = 1
    if degenerate:
        n_keep = int(np.sum(energies - energies[0] < rtol * scale))
    states = tuple(StateVector(op.basis, vecs[i]) for i in range(n_keep))
    return EigenManifold(np.asarray(energies[: max(k, n_keep)]), states, gap, degenerate)


def ground_state(op: SparseOperator) -> tuple[float, StateVector]:
    """Lowest eigenpair. Warns when the ground state is degenerate."""
    man = ground_manifold(op)
    if man.degenerate:
        warnings.warn(f"ground state is {len(man.states)}-fold degenerate (gap {man.gap:.2e}); "
                      "use ground_manifold for a well-defined state", DegeneracyWarning, stacklevel=2)
    return man.energy, man.states[0]


def top_manifold(spec: LatticeSpec, basis: FockBasis, k: int = 2) -> EigenManifold:
    """Highest eigenpairs of ``assemble(spec)`` via the sign trick.

    The ground manifold of the negated-parameter Hamiltonian is mapped back
    with the staggered gauge, so the returned vectors are eigenvectors of the
    original operator. Energies are listed from the top down.
    """
    man = ground_manifold(assemble(negate_map(spec), basis), k)
    gauge = staggered_gauge(basis)
    states = tuple(StateVector(basis, gauge * s.amplitudes) for s in man.states)
    return EigenManifold(-man.energies, states, man.gap, man.degenerate)


def top_state(spec: LatticeSpec, basis: FockBasis) -> tuple[float, StateVector]:
    """Highest eigenpair. For the attractive device Hamiltonian this is the
    repulsive ground state the experiment prepares."""
    man = top_manifold(spec, basis)
    if man.degenerate:
        warnings.warn(f"top state is {len(man.states)}-fold degenerate (gap {man.gap:.2e}); "
                      "use top_manifold for a well-defined state", DegeneracyWarning, stacklevel=2)
    return man.energy, man.states[0]


def prepared_state(spec: LatticeSpec, basis: FockBasis) -> StateVector:
    """The state observables are reported for.

    On a degenerate top manifold this is its time-reversal-even member.
    """
    man = top_manifold(spec, basis)
    if man.degenerate:
        from .observables import time_reversal_even
        return time_reversal_even(man.states)
    return man.states[0]


def _expm_apply(hmat, psi: np.ndarray, t: float) -> np.ndarray:
    dense = hmat.toarray() if hasattr(hmat, "toarray") else hmat
    return la.expm(-1j * t * dense) @ psi


def krylov_expmv(matvec, psi: np.ndarray, t: float, scale: float, tol: float = 1e-13,
                 m: int = 30, min_step: float | None = None) -> np.ndarray:
    """exp(-i H t) psi by Lanczos-Krylov substeps with a posteriori error control."""
    if min_step is None:
        min_step = abs(t) * 1e-12
    out = np.array(psi, dtype=complex)
    remaining = float(t)
    step = np.sign(t) * min(abs(t), 0.5 * m / max(scale, 1e-300))
    while abs(remaining) > abs(t) * 1e-14:
        step = np.sign(t) * min(abs(step), abs(remaining))
        beta0 = np.linalg.norm(out)
        V = [out / beta0]
        a, b = [], []
        for j in range(m):
            w = matvec(V[j])
            a.append(np.vdot(V[j], w).real)
            w = w - a[j] * V[j] - (b[j - 1] * V[j - 1] if j else 0)
            w -= np.array(V).T @ (np.array(V).conj() @ w)
            b.append(np.linalg.norm(w))
            if b[j] < 1e-14 * max(scale, 1.0):
                break
            V.append(w / b[j])
        size = len(a)
        T = np.diag(a) + np.diag(b[: size - 1], 1) + np.diag(b[: size - 1], -1)
        while True:
            small = la.expm(-1j * step * T)[:, 0]
            err = b[size - 1] * abs(small[-1]) if size == m else 0.0
            if err <= tol:
                break
            step /= 2.0
            if abs(step) < min_step:
                raise EngineError("Krylov step size underflow")
        out = beta0 * (np.array(V[:size]).T @ small)
        remaining -= step
        if err < tol / 100:
            step *= 2.0
    return out


def evolve(state: StateVector, H: SparseOperator, t: float) -> StateVector:
    """exp(-i H t)|state> with H in rad/s and t in seconds."""
    if state.basis is not H.basis and state.basis != H.basis:
        raise ParameterError("basis mismatch")
    if t == 0:
        return state
    if H.dim <= DENSE_EXPM_MAX_DIM:
        psi = _expm_apply(H.matrix, state.amplitudes, t)
    else:
        psi = krylov_expmv(H.matrix.__matmul__, state.amplitudes, t, H.norm_estimate())
    return StateVector(state.basis, psi)


RAMP_SHAPES = ("step", "linear", "cosine")


@dataclass(frozen=True)
class RampSegment:
    """One piece of a detuning schedule; detunings in rad/s per site."""

    duration: float
    start: tuple[float, ...]
    end: tuple[float, ...]
    shape: str = "linear"

    def __post_init__(self):
        if not self.duration > 0:
            raise ParameterError("segment duration must be > 0")
        if self.shape not in RAMP_SHAPES:
            raise ParameterError(f"unknown ramp shape {self.shape!r}")
        object.__setattr__(self, "start", tuple(float(x) for x in self.start))
        object.__setattr__(self, "end", tuple(float(x) for x in self.end))
        if len(self.start) != len(self.end) or not np.all(np.isfinite(self.start + self.end)):
            raise ParameterError("segment detunings must be finite and of equal length")

    def detuning(self, tau: float) -> np.ndarray:
        """Detuning at time ``tau`` into the segment."""
        s = min(max(tau / self.duration, 0.0), 1.0)
        if self.shape == "step":
            f = 1.0
        elif self.shape == "linear":
            f = s
        else:
            f = 0.5 * (1.0 - math.cos(math.pi * s))
        start, end = np.asarray(self.start), np.asarray(self.end)
        return start + f * (end - start)


@dataclass(frozen=True)
class RampSchedule:
    initial: tuple[int, ...]
    segments: tuple[RampSegment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "initial", tuple(int(n) for n in self.initial))
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if len(seg.start) != len(self.initial):
                raise ParameterError("segment detunings must cover every site")

    @property
    def duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    def scaled(self, factor: float) -> "RampSchedule":
        """Same schedule with every duration multiplied by ``factor``."""
        segs = tuple(RampSegment(s.duration * factor, s.start, s.end, s.shape) for s in self.segments)
        return RampSchedule(self.initial, segs)


def device_schedule(n_sites: int = 8, excited: Sequence[int] = (0, 3, 7, 4), park: float = -2 * np.pi * 150e6,
                   duration: float = 300e-9, shape: str = "linear") -> RampSchedule:
    """Excite ``excited`` on resonance and ramp the parked sites in.

    Defaults mirror the device sequence: qubits 1, 4, 8, 5 excited, the
    others parked 150 MHz below and brought onto resonance over 300 ns.
    """
    initial = tuple(1 if j in excited else 0 for j in range(n_sites))
    start = tuple(0.0 if j in excited else park for j in range(n_sites))
    return RampSchedule(initial, (RampSegment(duration, start, (0.0,) * n_sites, shape),))


@dataclass(frozen=True)
class RampResult:
    state: StateVector
    fidelity: float | None
    steps: int
    dt: float
    history: list = field(default_factory=list, repr=False)


# Commutator-free fourth-order exponential: two exponentials per step with
# Gauss-Legendre nodes.
_GL = math.sqrt(3.0) / 6.0
_CF_A = 0.25 + _GL
_CF_B = 0.25 - _GL


def evolve_ramp(schedule: RampSchedule, spec: LatticeSpec, basis: FockBasis, dt: float = 0.1e-9,
                target: StateVector | None = None, order: int = 4) -> RampResult:
    """Integrate the time-dependent lattice Hamiltonian over a detuning ramp.

    Site frequencies are ``spec.omega + detuning(t)``; hoppings stay fixed.
    ``order=2`` uses the midpoint exponential, ``order=4`` a commutator-free
    Magnus step. Each segment is cut into ``ceil(duration/dt)`` equal steps.
    """
    if order not in (2, 4):
        raise ParameterError("order must be 2 or 4")
    if len(schedule.initial) != spec.n_sites:
        raise ParameterError("schedule and spec disagree on the number of sites")
    if sum(schedule.initial) != basis.total_number:
        raise ParameterError("initial occupations do not match the basis particle number")
    if schedule.segments and dt > min(seg.duration for seg in schedule.segments):
        raise ParameterError("dt exceeds the shortest ramp segment")
    psi = StateVector.product(basis, schedule.initial)
    h_static = assemble(spec, basis).to_dense()
    occ = basis.occupations.astype(float)
    dense = basis.dim <= DENSE_EXPM_MAX_DIM
    scale = assemble(spec, basis).norm_estimate()

    def ham(seg, tau):
        return h_static + np.diag(occ @ seg.detuning(tau))

    def step(vec, h, mat):
        if dense:
            return la.expm(-1j * h * mat) @ vec
        return krylov_expmv(mat.__matmul__, vec, h, scale + np.abs(mat).sum(axis=1).max())

    amps = psi.amplitudes.copy()
    steps = 0
    for seg in schedule.segments:
        n = max(1, math.ceil(seg.duration / dt - 1e-9))
        h = seg.duration / n
        for k in range(n):
            if order == 2:
                amps = step(amps, h, ham(seg, (k + 0.5) * h))
            else:
                h1, h2 = ham(seg, (k + 0.5 - _GL) * h), ham(seg, (k + 0.5 + _GL) * h)
                amps = step(amps, h, _CF_A * h1 + _CF_B * h2)
                amps = step(amps, h, _CF_B * h1 + _CF_A * h2)
            steps += 1
    final = StateVector(basis, amps)
    fidelity = None
    if target is not None:
        fidelity = float(abs(inner(target, final)) ** 2)
    return RampResult(final, fidelity, steps, dt)


def energy(op: SparseOperator, state: StateVector) -> float:
    return float(np.vdot(state.amplitudes, op.matrix @ state.amplitudes).real)


__all__ = [
    "ConvergenceError", "DegeneracyWarning", "EigenManifold", "EngineError", "RampResult", "RampSchedule",
    "RampSegment", "evolve", "evolve_ramp", "ground_manifold", "ground_state", "krylov_expmv", "lanczos",
    "device_schedule", "prepared_state", "top_manifold", "top_state",
]
