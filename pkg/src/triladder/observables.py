"""Exact observables: coherences, rung currents, current correlations, bond order.

Functions take a :class:`~triladder.fock.StateVector` or a density matrix
(anything with ``basis`` and a dense ``matrix``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .fock import LatticeSpec, ParameterError, StateVector
from .hamiltonian import (
    NonMeasurablePairError,
    bond_operator,
    current_operator,
    expectation,
    hop_operator,
    rungs_overlap,
)


@lru_cache(maxsize=64)
def _hops(basis):
    n = basis.n_sites
    return {(i, j): hop_operator(basis, i, j) for i in range(n) for j in range(n) if i != j}


def one_body_matrix(state) -> np.ndarray:
    """M[i, j] = <a+_i a_j>."""
    basis = state.basis
    n = basis.n_sites
    if isinstance(state, StateVector):
        probs = state.probabilities()
    else:
        probs = np.real(np.diag(state.matrix))
    m = np.zeros((n, n), dtype=complex)
    m[np.diag_indices(n)] = probs @ basis.occupations
    for (i, j), op in _hops(basis).items():
        if i < j:
            m[i, j] = expectation(op, state)
            m[j, i] = np.conj(m[i, j])
    return m


def rung_current(state, j: int, spec: LatticeSpec) -> float:
    """<J_j> for J_j = i J_j (a+_j a_{j+1} - a+_{j+1} a_j), in rad/s."""
    return expectation(current_operator(j, spec, state.basis), state).real


def current_from_coherence(one_body: np.ndarray, j: int, spec: LatticeSpec) -> float:
    """Same quantity from the one-body matrix: -2 J_j Im<a+_j a_{j+1}>."""
    return float(-2.0 * spec.j_rung[j] * one_body[j, j + 1].imag)


def valid_rung_pairs(n_rungs: int) -> list[tuple[int, int]]:
    """Rung pairs (i < j) that share no site, i.e. j - i >= 2."""
    return [(i, j) for i in range(n_rungs) for j in range(i + 2, n_rungs)]


def current_correlation(state, i: int, j: int, spec: LatticeSpec) -> float:
    """G(i, j) = <J_i J_j> - <J_i><J_j> for non-overlapping rungs."""
    if rungs_overlap(i, j):
        raise NonMeasurablePairError(i, j)
    ji = current_operator(i, spec, state.basis)
    jj = current_operator(j, spec, state.basis)
    both = expectation(ji @ jj, state)
    return float((both - expectation(ji, state) * expectation(jj, state)).real)


def correlation_map(state, spec: LatticeSpec) -> dict[tuple[int, int], float]:
    basis = state.basis
    ops = [current_operator(j, spec, basis) for j in range(spec.n_rungs)]
    means = [expectation(op, state) for op in ops]
    out = {}
    for i, j in valid_rung_pairs(spec.n_rungs):
        out[(i, j)] = float((expectation(ops[i] @ ops[j], state) - means[i] * means[j]).real)
    return out


def correlation_array(g: dict[tuple[int, int], float], n_rungs: int) -> np.ndarray:
    """Symmetric rung x rung array; NaN where a pair is not measurable."""
    arr = np.full((n_rungs, n_rungs), np.nan)
    for (i, j), v in g.items():
        arr[i, j] = arr[j, i] = v
    return arr


def chiral_order(state, spec: LatticeSpec, g: dict | None = None) -> float:
    """Sum over distances d >= 2 of the mean correlation at that distance.

    Each distance is averaged over its n_rungs - d pairs.
    """
    if spec.n_sites < 4:
        raise ParameterError("chiral order needs at least four sites")
    if g is None:
        g = correlation_map(state, spec)
    return chiral_from_map(g, spec.n_rungs)


def chiral_from_map(g: dict[tuple[int, int], float], n_rungs: int) -> float:
    total = 0.0
    for d in range(2, n_rungs):
        vals = [g[(j, j + d)] for j in range(n_rungs - d)]
        total += sum(vals) / len(vals)
    return float(total)


def by_distance(g: dict[tuple[int, int], float]) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    for (i, j), v in sorted(g.items()):
        out.setdefault(abs(j - i), []).append(v)
    return out


def bond_kinetic(state, j: int) -> float:
    """O_j = 2 Re<a+_j a_{j+1}>."""
    return expectation(bond_operator(j, state.basis), state).real


def bond_order_from_bonds(bonds) -> float:
    # Rung j (0-based) carries sign (-1)^(j+1), i.e. the first rung counts negative.
    bonds = np.asarray(bonds, dtype=float)
    signs = -((-1.0) ** np.arange(len(bonds)))
    return float(signs @ bonds)


def bond_order(state) -> float:
    n = state.basis.n_sites
    if n < 2:
        raise ParameterError("bond order needs at least two sites")
    return bond_order_from_bonds([bond_kinetic(state, j) for j in range(n - 1)])


def _real_span(states) -> np.ndarray:
    # Columns: real orthonormal basis of the span of Re/Im parts.
    parts = np.array([p for s in states for p in (s.amplitudes.real, s.amplitudes.imag)]).T
    u, sv, _ = np.linalg.svd(parts, full_matrices=False)
    return u[:, sv > 1e-8 * sv[0]]


def time_reversal_even(states) -> StateVector:
    """Real (time-reversal even) normalized state in the span of ``states``.

    For a degenerate manifold of a real Hamiltonian the real and imaginary
    parts of every member lie in the manifold too.
    """
    return StateVector(states[0].basis, _real_span(states)[:, 0])


def chiral_projections(states) -> tuple[StateVector, StateVector]:
    """The two current-carrying combinations (a +- i b)/sqrt2 of a real doublet."""
    span = _real_span(states)
    if span.shape[1] < 2:
        raise ParameterError("chiral projections need a two-dimensional real manifold")
    a, b = span[:, 0], span[:, 1]
    basis = states[0].basis
    return StateVector(basis, (a + 1j * b) / np.sqrt(2)), StateVector(basis, (a - 1j * b) / np.sqrt(2))


@dataclass
class ObservableReport:
    """Observables of one state, with currents in units of J and G in J^2.

    ``errors`` carries shot-noise standard errors for the entries that came
    from sampling; exact reports leave it empty.
    """

    one_body: np.ndarray
    currents: np.ndarray
    g_matrix: dict
    chiral_c: float
    bond_o: np.ndarray
    bond_order: float
    j_scale: float = 1.0
    errors: dict = field(default_factory=dict)
    shots: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    units = {"currents": "J", "g_matrix": "J^2", "chiral_c": "J^2", "bond_o": "1", "bond_order": "1",
             "one_body": "1"}

    @property
    def n_sites(self) -> int:
        return self.one_body.shape[0]

    def g_rows(self) -> list[dict]:
        """Rows for the G table with 1-based rung labels."""
        rows = []
        g_err = self.errors.get("g_matrix", {})
        g_shot = self.shots.get("g_matrix", {})
        for (i, j), v in sorted(self.g_matrix.items()):
            rows.append({"rung_i": i + 1, "rung_j": j + 1,
                         "value": g_shot.get((i, j), v), "stderr": g_err.get((i, j), 0.0), "exact": v})
        return rows

    def to_dict(self) -> dict:
        def pairs(d):
            return [{"rung_i": i + 1, "rung_j": j + 1, "value": v} for (i, j), v in sorted(d.items())]

        out = {
            "units": dict(self.units),
            "j_scale_rad_per_s": self.j_scale,
            "one_body": {"real": self.one_body.real.tolist(), "imag": self.one_body.imag.tolist()},
            "currents": [float(x) for x in self.currents],
            "g_matrix": pairs(self.g_matrix),
            "chiral_c": self.chiral_c,
            "bond_o": [float(x) for x in self.bond_o],
            "bond_order": self.bond_order,
            "metadata": self.metadata,
        }
        if self.shots:
            out["shots"] = _jsonable_shots(self.shots)
        if self.errors:
            out["errors"] = _jsonable_shots(self.errors)
        return out


def _jsonable_shots(d: dict) -> dict:
    out = {}
    for key, val in d.items():
        if isinstance(val, dict):
            out[key] = [{"rung_i": i + 1, "rung_j": j + 1, "value": v} for (i, j), v in sorted(val.items())]
        elif isinstance(val, np.ndarray):
            out[key] = [None if np.isnan(x) else float(x) for x in val]
        else:
            out[key] = val
    return out


def build_report(state, spec: LatticeSpec, metadata: dict | None = None) -> ObservableReport:
    """Exact report for ``state``; currents scaled by the mean rung coupling."""
    scale = float(np.mean(spec.j_rung))
    one_body = one_body_matrix(state)
    currents = np.array([rung_current(state, j, spec) for j in range(spec.n_rungs)]) / scale
    g = {k: v / scale ** 2 for k, v in correlation_map(state, spec).items()}
    chiral = chiral_from_map(g, spec.n_rungs) if spec.n_sites >= 4 else 0.0
    bonds = np.array([2.0 * one_body[j, j + 1].real for j in range(spec.n_rungs)])
    return ObservableReport(one_body, currents, g, chiral, bonds, bond_order_from_bonds(bonds), scale,
                            metadata=dict(metadata or {}))
