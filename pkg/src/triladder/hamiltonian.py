"""Sparse operators for the triangular ladder.

Every operator here represents H/hbar in rad/s. The lattice Hamiltonian is

    H = sum_j w_j n_j + U_j/2 n_j (n_j - 1)
        - sum_j J_j (a+_j a_{j+1} + h.c.)
        + sum_j Jl_j (e^{i phi} a+_j a_{j+2} + h.c.)

with rungs (j, j+1) and legs (j, j+2).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .fock import LatticeSpec, ParameterError, StateVector, _check_same_basis, _OccupationBasis


class NonMeasurablePairError(ParameterError):
    """Two rungs share a site, so J_i J_j is not Hermitian."""

    def __init__(self, i: int, j: int):
        super().__init__(f"non-measurable pair: rungs {i} and {j} share a site")
        self.rungs = (i, j)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    basis: _OccupationBasis
    matrix: sp.csr_matrix = field(repr=False)
    hermitian: bool = False

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        m.sum_duplicates()
        m.eliminate_zeros()
        if m.shape != (self.basis.dim, self.basis.dim):
            raise ParameterError(f"operator shape {m.shape} does not match basis dim {self.basis.dim}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.basis.dim

    def __matmul__(self, other):
        if isinstance(other, StateVector):
            _check_same_basis(self, other)
            return StateVector(self.basis, self.matrix @ other.amplitudes)
        if isinstance(other, SparseOperator):
            _check_same_basis(self, other)
            return SparseOperator(self.basis, self.matrix @ other.matrix)
        return self.matrix @ other

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        _check_same_basis(self, other)
        return SparseOperator(self.basis, self.matrix + other.matrix, self.hermitian and other.hermitian)

    def __sub__(self, other: "SparseOperator") -> "SparseOperator":
        _check_same_basis(self, other)
        return SparseOperator(self.basis, self.matrix - other.matrix, self.hermitian and other.hermitian)

    def __mul__(self, scalar: complex) -> "SparseOperator":
        herm = self.hermitian and np.isreal(scalar)
        return SparseOperator(self.basis, self.matrix * scalar, bool(herm))

    __rmul__ = __mul__

    def __neg__(self) -> "SparseOperator":
        return self * -1.0

    @property
    def H(self) -> "SparseOperator":
        return SparseOperator(self.basis, self.matrix.conj().T.tocsr(), self.hermitian)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def triplets(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def hermiticity_defect(self) -> float:
        """max |A_rc - conj(A_cr)|; exactly 0 for operators built here."""
        diff = self.matrix - self.matrix.conj().T
        return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0

    def norm_estimate(self) -> float:
        """Max absolute row sum; an upper bound on the spectral norm."""
        return float(np.max(np.abs(self.matrix).sum(axis=1))) if self.matrix.nnz else 0.0

    def export_triplets(self) -> str:
        """Text dump, one ``row col re im`` line per stored entry."""
        rows, cols, vals = self.triplets()
        lines = [f"# dim {self.dim}"]
        lines += [f"{r} {c} {v.real:.17g} {v.imag:.17g}" for r, c, v in zip(rows, cols, vals)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_triplet_text(cls, basis: _OccupationBasis, text: str, hermitian: bool = False) -> "SparseOperator":
        rows, cols, vals = [], [], []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            r, c, re, im = line.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(float(re) + 1j * float(im))
        m = sp.coo_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))
        return cls(basis, m, hermitian)


def expectation(op: SparseOperator, state) -> complex:
    """<op> in a pure state or a density matrix."""
    _check_same_basis(op, state)
    if isinstance(state, StateVector):
        psi = state.amplitudes
        return complex(np.vdot(psi, op.matrix @ psi))
    rho = state.matrix
    # Tr(rho A) = sum_ij rho_ji A_ij
    coo = op.matrix.tocoo()
    return complex(np.sum(coo.data * rho[coo.col, coo.row]))


def _hop_entries(basis: _OccupationBasis, i: int, j: int):
    occ = basis.occupations
    src = np.nonzero((occ[:, j] > 0) & (occ[:, i] < basis.n_max))[0]
    dst = basis.find_keys(basis.keys[src] + basis.site_weight(i) - basis.site_weight(j))
    keep = dst >= 0
    src, dst = src[keep], dst[keep]
    return dst, src, np.sqrt(occ[src, j] * (occ[src, i] + 1.0))


def hop_operator(basis: _OccupationBasis, i: int, j: int) -> SparseOperator:
    """a+_i a_j (truncated: moves that would exceed n_max vanish)."""
    basis.check_site(i, j)
    if i == j:
        raise ParameterError("hop needs two distinct sites")
    rows, cols, vals = _hop_entries(basis, i, j)
    return SparseOperator(basis, sp.coo_matrix((vals, (rows, cols)), shape=(basis.dim,) * 2))


def annihilation_operator(basis: _OccupationBasis, j: int) -> SparseOperator:
    """a_j on a multi-sector basis (maps number sector k to k-1)."""
    basis.check_site(j)
    occ = basis.occupations
    src = np.nonzero(occ[:, j] > 0)[0]
    dst = basis.find_keys(basis.keys[src] - basis.site_weight(j))
    keep = dst >= 0
    src, dst = src[keep], dst[keep]
    vals = np.sqrt(occ[src, j].astype(float))
    return SparseOperator(basis, sp.coo_matrix((vals, (dst, src)), shape=(basis.dim,) * 2))


def diagonal_operator(basis: _OccupationBasis, values: np.ndarray) -> SparseOperator:
    return SparseOperator(basis, sp.diags(np.asarray(values, dtype=complex)).tocsr(), hermitian=bool(np.isrealobj(values)))


def number_operator(basis: _OccupationBasis, j: int) -> SparseOperator:
    basis.check_site(j)
    return diagonal_operator(basis, basis.occupations[:, j].astype(float))


def total_number_operator(basis: _OccupationBasis) -> SparseOperator:
    return diagonal_operator(basis, basis.occupations.sum(axis=1).astype(float))


def identity(basis: _OccupationBasis) -> SparseOperator:
    return diagonal_operator(basis, np.ones(basis.dim))


def _hermitian_hops(basis, terms: Iterable[tuple[int, int, complex]]) -> sp.coo_matrix:
    """Sum of c a+_i a_j + conj(c) a+_j a_i, assembled symmetrically."""
    rows, cols, vals = [], [], []
    for i, j, c in terms:
        r, k, v = _hop_entries(basis, i, j)
        rows += [r, k]
        cols += [k, r]
        vals += [c * v, np.conj(c) * v]
    if not rows:
        return sp.coo_matrix((basis.dim, basis.dim), dtype=complex)
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(basis.dim,) * 2)


def onsite_energies(spec: LatticeSpec, basis: _OccupationBasis, include_omega: bool = True) -> np.ndarray:
    n = basis.occupations.astype(float)
    diag = n * (n - 1.0) @ (0.5 * np.asarray(spec.u))
    if include_omega:
        diag = diag + n @ np.asarray(spec.omega)
    return diag


def _check_sites(spec: LatticeSpec, basis: _OccupationBasis):
    if basis.n_sites != spec.n_sites:
        raise ParameterError(f"basis has {basis.n_sites} sites, spec has {spec.n_sites}")


def kinetic(spec: LatticeSpec, basis: _OccupationBasis) -> SparseOperator:
    """Hopping part of the lattice Hamiltonian (rungs and legs)."""
    _check_sites(spec, basis)
    phase = np.exp(1j * spec.flux)
    terms = [(j, j + 1, -spec.j_rung[j]) for j in range(spec.n_sites - 1)]
    terms += [(j, j + 2, spec.j_leg[j] * phase) for j in range(spec.n_sites - 2)]
    return SparseOperator(basis, _hermitian_hops(basis, terms), hermitian=True)


def assemble(spec: LatticeSpec, basis: _OccupationBasis) -> SparseOperator:
    _check_sites(spec, basis)
    if basis.n_max != spec.n_max:
        raise ParameterError(f"basis cutoff {basis.n_max} differs from spec n_max {spec.n_max}")
    diag = sp.diags(onsite_energies(spec, basis).astype(complex))
    return SparseOperator(basis, kinetic(spec, basis).matrix + diag, hermitian=True)


def negate_map(spec: LatticeSpec) -> LatticeSpec:
    """Parameters whose Hamiltonian has the negated spectrum.

    -H(phi, U, w) equals H(phi + pi, -U, -w) after the staggered gauge
    a_j -> (-1)^j a_j, which restores the sign of the rung hopping while
    leaving the legs alone. See :func:`staggered_gauge`.
    """
    flux = float(np.mod(spec.flux + np.pi, 2 * np.pi))
    return spec.replace(u=[-x for x in spec.u], omega=[-x for x in spec.omega], flux=flux)


def staggered_gauge(basis: _OccupationBasis) -> np.ndarray:
    """Diagonal of the unitary a_j -> (-1)^j a_j, i.e. (-1)^(sum_j j n_j)."""
    parity = basis.occupations @ np.arange(basis.n_sites) % 2
    return 1.0 - 2.0 * parity


def gauge_transform(basis: _OccupationBasis, theta: np.ndarray) -> np.ndarray:
    """Diagonal of the unitary a_j -> e^{i theta_j} a_j."""
    return np.exp(-1j * basis.occupations @ np.asarray(theta, dtype=float))


@dataclass(frozen=True)
class PairHamiltonianSpec:
    """Two-site protocol Hamiltonian on sites (j, j+1).

    ``beamsplitter``: -J (a+_j a_{j+1} + h.c.), the device rung coupling
    with every other coupling switched off.
    ``idle``: Delta (n_j - n_{j+1}).
    """

    kind: str
    pair: tuple[int, int]
    strength: float

    def __post_init__(self):
        if self.kind not in ("beamsplitter", "idle"):
            raise ParameterError(f"unknown pair Hamiltonian kind {self.kind!r}")
        a, b = self.pair
        if b != a + 1:
            raise ParameterError(f"pair {self.pair} is not an adjacent (j, j+1) pair")
        if self.strength == 0 or not np.isfinite(self.strength):
            raise ParameterError("pair strength must be finite and nonzero")


def assemble_pair(spec: PairHamiltonianSpec, basis: _OccupationBasis) -> SparseOperator:
    j, k = spec.pair
    basis.check_site(j, k)
    if spec.kind == "beamsplitter":
        return SparseOperator(basis, _hermitian_hops(basis, [(j, k, -spec.strength)]), hermitian=True)
    occ = basis.occupations
    return diagonal_operator(basis, spec.strength * (occ[:, j] - occ[:, k]).astype(float))


def _check_rung(basis: _OccupationBasis, j: int):
    if not 0 <= j < basis.n_sites - 1:
        raise ParameterError(f"rung {j} out of range 0..{basis.n_sites - 2}")


def current_operator(j: int, spec: LatticeSpec, basis: _OccupationBasis) -> SparseOperator:
    """Rung current i J_j (a+_j a_{j+1} - a+_{j+1} a_j)."""
    _check_rung(basis, j)
    _check_sites(spec, basis)
    return SparseOperator(basis, _hermitian_hops(basis, [(j, j + 1, 1j * spec.j_rung[j])]), hermitian=True)


def bond_operator(j: int, basis: _OccupationBasis) -> SparseOperator:
    """Bond kinetic operator a+_j a_{j+1} + a+_{j+1} a_j."""
    _check_rung(basis, j)
    return SparseOperator(basis, _hermitian_hops(basis, [(j, j + 1, 1.0)]), hermitian=True)


def rungs_overlap(i: int, j: int) -> bool:
    return abs(i - j) < 2
