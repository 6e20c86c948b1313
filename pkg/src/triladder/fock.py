"""Lattice parameters, truncated-boson Fock bases and state vectors.

Sites are 0-indexed in the Python API. Rung ``j`` couples sites ``j`` and
``j + 1``; leg ``j`` couples sites ``j`` and ``j + 2``. Serialized outputs use
1-based labels so that they line up with qubit numbering on the device.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi
#: Average rung hopping J/2pi = 6.1 MHz, in rad/s.
DEVICE_J = TWO_PI * 6.1e6
#: Average transmon anharmonicity U/2pi = -186.1 MHz, in rad/s.
DEVICE_U = TWO_PI * -186.1e6


class ParameterError(ValueError):
    """Raised for out-of-range or inconsistent model parameters."""


def _floats(values: Iterable[float], name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if not all(np.isfinite(out)):
        raise ParameterError(f"{name} must be finite")
    return out


@dataclass(frozen=True)
class LatticeSpec:
    """Parameters of the triangular-ladder Bose-Hubbard Hamiltonian.

    All frequencies are angular (rad/s). ``j_rung`` and ``j_leg`` are
    magnitudes; the sign of the leg coupling lives in ``flux``.
    """

    n_sites: int
    omega: tuple[float, ...]
    u: tuple[float, ...]
    j_rung: tuple[float, ...]
    j_leg: tuple[float, ...]
    flux: float = 0.0
    n_max: int = 1

    def __post_init__(self):
        n = self.n_sites
        if n < 2:
            raise ParameterError("need at least two sites")
        object.__setattr__(self, "omega", _floats(self.omega, "omega"))
        object.__setattr__(self, "u", _floats(self.u, "u"))
        object.__setattr__(self, "j_rung", _floats(self.j_rung, "j_rung"))
        object.__setattr__(self, "j_leg", _floats(self.j_leg, "j_leg"))
        object.__setattr__(self, "flux", float(self.flux))
        if len(self.omega) != n or len(self.u) != n:
            raise ParameterError("omega and u need one entry per site")
        if len(self.j_rung) != n - 1:
            raise ParameterError(f"j_rung needs {n - 1} entries, got {len(self.j_rung)}")
        if len(self.j_leg) != max(n - 2, 0):
            raise ParameterError(f"j_leg needs {n - 2} entries, got {len(self.j_leg)}")
        if any(j <= 0 for j in self.j_rung) or any(j <= 0 for j in self.j_leg):
            raise ParameterError("couplings are magnitudes and must be > 0; put signs in flux")
        if not np.isfinite(self.flux):
            raise ParameterError("flux must be finite")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ParameterError("n_max must be an integer >= 1")

    @property
    def n_rungs(self) -> int:
        return self.n_sites - 1

    @classmethod
    def uniform(cls, n_sites: int, j: float = 1.0, j_leg: float = 1.0, flux: float = 0.0,
                u: float = 0.0, omega: float = 0.0, n_max: int = 1) -> "LatticeSpec":
        return cls(n_sites, (omega,) * n_sites, (u,) * n_sites, (j,) * (n_sites - 1),
                   (j_leg,) * (n_sites - 2), flux, n_max)

    @classmethod
    def from_ratio(cls, ratio: float, n_sites: int = 8, j: float = DEVICE_J, u: float = DEVICE_U,
                   n_max: int = 1, omega: float = 0.0, flux: float | None = None) -> "LatticeSpec":
        """Uniform device spec for a signed leg/rung ratio J_par/J.

        The flux is pi for negative ratios and 0 otherwise unless given.
        """
        if ratio == 0 or not np.isfinite(ratio):
            raise ParameterError("ratio must be finite and nonzero")
        if flux is None:
            flux = np.pi if ratio < 0 else 0.0
        return cls.uniform(n_sites, j=j, j_leg=abs(ratio) * j, flux=flux, u=u, omega=omega, n_max=n_max)

    def replace(self, **changes) -> "LatticeSpec":
        data = self.to_dict()
        data.update(changes)
        return LatticeSpec(**data)

    def to_dict(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "omega": list(self.omega),
            "u": list(self.u),
            "j_rung": list(self.j_rung),
            "j_leg": list(self.j_leg),
            "flux": self.flux,
            "n_max": self.n_max,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def mirrored(self) -> "LatticeSpec":
        """Spec with site order reversed (j -> N-1-j)."""
        return LatticeSpec(self.n_sites, self.omega[::-1], self.u[::-1], self.j_rung[::-1],
                           self.j_leg[::-1], self.flux, self.n_max)


def occupation_string(occ: Sequence[int]) -> str:
    """Comma-free digit string, site 1 first (e.g. ``"10010011"``)."""
    return "".join(str(int(n)) for n in occ)


def parse_occupation_string(text: str) -> tuple[int, ...]:
    if not text.isdigit():
        raise ParameterError(f"invalid occupation string {text!r}")
    return tuple(int(c) for c in text)


class _OccupationBasis:
    """Shared lookup machinery for bases given as rows of occupations."""

    n_sites: int
    n_max: int
    occupations: np.ndarray

    def _setup_lookup(self):
        radix = self.n_max + 1
        self._weights = radix ** np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        keys = self.occupations.astype(np.int64) @ self._weights
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]
        self.keys = keys

    @property
    def dim(self) -> int:
        return self.occupations.shape[0]

    def __len__(self) -> int:
        return self.dim

    def site_weight(self, site: int) -> int:
        return int(self._weights[site])

    def find_keys(self, keys: np.ndarray) -> np.ndarray:
        """Basis ordinals for encoded occupation keys; -1 where absent."""
        keys = np.asarray(keys, dtype=np.int64)
        pos = np.searchsorted(self._sorted_keys, keys)
        pos = np.clip(pos, 0, len(self._sorted_keys) - 1)
        hit = self._sorted_keys[pos] == keys
        return np.where(hit, self._order[pos], -1)

    def index_of(self, occ: Sequence[int]) -> int:
        occ = tuple(int(n) for n in occ)
        if len(occ) != self.n_sites or min(occ) < 0 or max(occ) > self.n_max:
            raise ParameterError(f"occupation {occ} not representable in this basis")
        k = int(self.find_keys(np.array([np.dot(occ, self._weights)]))[0])
        if k < 0:
            raise ParameterError(f"occupation {occ} not in basis")
        return k

    def strings(self) -> list[str]:
        return [occupation_string(row) for row in self.occupations]

    def check_site(self, *sites: int):
        for s in sites:
            if not 0 <= s < self.n_sites:
                raise ParameterError(f"site {s} out of range 0..{self.n_sites - 1}")


def _compositions(n_sites: int, total: int, n_max: int) -> list[tuple[int, ...]]:
    # Lexicographically descending by construction.
    if n_sites == 1:
        return [(total,)] if total <= n_max else []
    out = []
    for first in range(min(n_max, total), -1, -1):
        rest = total - first
        if rest > (n_sites - 1) * n_max:
            break
        out.extend((first,) + tail for tail in _compositions(n_sites - 1, rest, n_max))
    return out


class FockBasis(_OccupationBasis):
    """All occupation tuples with fixed total number and per-site cutoff.

    States are ordered lexicographically descending, so for hard-core
    bosons the first state is ``11..100..0``.
    """

    def __init__(self, n_sites: int, total: int, n_max: int):
        if n_sites < 1 or n_max < 1:
            raise ParameterError("n_sites and n_max must be >= 1")
        if not 0 <= total <= n_sites * n_max:
            raise ParameterError(f"total {total} outside 0..{n_sites * n_max}")
        self.n_sites = int(n_sites)
        self.total_number = int(total)
        self.n_max = int(n_max)
        self.states: tuple[tuple[int, ...], ...] = tuple(_compositions(n_sites, total, n_max))
        self.occupations = np.array(self.states, dtype=np.int64).reshape(len(self.states), n_sites)
        self.occupations.setflags(write=False)
        self.index = {s: k for k, s in enumerate(self.states)}
        self._setup_lookup()

    def __repr__(self):
        return f"FockBasis(n_sites={self.n_sites}, total={self.total_number}, n_max={self.n_max}, dim={self.dim})"

    def __eq__(self, other):
        return (isinstance(other, FockBasis) and self.n_sites == other.n_sites
                and self.total_number == other.total_number and self.n_max == other.n_max)

    def __hash__(self):
        return hash((FockBasis, self.n_sites, self.total_number, self.n_max))


def build_basis(n_sites: int, total: int, n_max: int) -> FockBasis:
    return FockBasis(n_sites, total, n_max)


def count_states(n_sites: int, total: int, n_max: int) -> int:
    """Number of compositions of ``total`` into ``n_sites`` parts <= ``n_max``."""
    return sum((-1) ** k * comb(n_sites, k) * comb(total - k * (n_max + 1) + n_sites - 1, n_sites - 1)
               for k in range(n_sites + 1) if total - k * (n_max + 1) >= 0)


class MultiSectorBasis(_OccupationBasis):
    """Direct sum of fixed-number bases for totals 0..max_total.

    Needed for open-system evolution where amplitude damping lowers the
    particle number.
    """

    def __init__(self, n_sites: int, max_total: int, n_max: int):
        self.n_sites = int(n_sites)
        self.n_max = int(n_max)
        self.max_total = int(max_total)
        self.blocks = tuple(FockBasis(n_sites, k, n_max) for k in range(max_total + 1))
        dims = [b.dim for b in self.blocks]
        self.offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(dims)[:-1]]))
        self.occupations = np.concatenate([b.occupations for b in self.blocks], axis=0)
        self.occupations.setflags(write=False)
        self._setup_lookup()

    def __repr__(self):
        return f"MultiSectorBasis(n_sites={self.n_sites}, max_total={self.max_total}, n_max={self.n_max}, dim={self.dim})"

    def __eq__(self, other):
        return (isinstance(other, MultiSectorBasis) and self.n_sites == other.n_sites
                and self.max_total == other.max_total and self.n_max == other.n_max)

    def __hash__(self):
        return hash((MultiSectorBasis, self.n_sites, self.max_total, self.n_max))

    def sector_slice(self, total: int) -> slice:
        start = self.offsets[total]
        return slice(start, start + self.blocks[total].dim)

    def embed(self, state: "StateVector") -> "StateVector":
        if not isinstance(state.basis, FockBasis) or state.basis.n_sites != self.n_sites \
                or state.basis.n_max != self.n_max or state.basis.total_number > self.max_total:
            raise ParameterError("state does not fit this multi-sector basis")
        amps = np.zeros(self.dim, dtype=complex)
        amps[self.sector_slice(state.basis.total_number)] = state.amplitudes
        return StateVector(self, amps)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Dense complex amplitudes over a basis."""

    basis: _OccupationBasis
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape[0] != self.basis.dim:
            raise ParameterError(f"expected {self.basis.dim} amplitudes, got {amps.shape[0]}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def product(cls, basis: _OccupationBasis, occupations: Sequence[int]) -> "StateVector":
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.index_of(occupations)] = 1.0
        return cls(basis, amps)

    @classmethod
    def from_terms(cls, basis: _OccupationBasis, terms: dict) -> "StateVector":
        """Normalized superposition from ``{occupation: amplitude}``."""
        amps = np.zeros(basis.dim, dtype=complex)
        for occ, c in terms.items():
            if isinstance(occ, str):
                occ = parse_occupation_string(occ)
            amps[basis.index_of(occ)] += c
        return cls(basis, amps).normalized()

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0:
            raise ParameterError("cannot normalize the zero vector")
        return StateVector(self.basis, self.amplitudes / nrm)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def populations(self) -> np.ndarray:
        """Mean occupation of every site."""
        return self.probabilities() @ self.basis.occupations

    def __add__(self, other: "StateVector") -> "StateVector":
        _check_same_basis(self, other)
        return StateVector(self.basis, self.amplitudes + other.amplitudes)

    def __mul__(self, scalar: complex) -> "StateVector":
        return StateVector(self.basis, self.amplitudes * scalar)

    __rmul__ = __mul__


def _check_same_basis(x, y):
    if x.basis is not y.basis and x.basis != y.basis:
        raise ParameterError("basis mismatch")


def apply_hop(state: StateVector, i: int, j: int, amplitude: complex = 1.0) -> StateVector:
    """Return ``amplitude * a_i^dag a_j |state>`` (not renormalized)."""
    basis = state.basis
    basis.check_site(i, j)
    if i == j:
        raise ParameterError("hop needs two distinct sites")
    occ = basis.occupations
    src = np.nonzero((occ[:, j] > 0) & (occ[:, i] < basis.n_max))[0]
    dst = basis.find_keys(basis.keys[src] + basis.site_weight(i) - basis.site_weight(j))
    keep = dst >= 0
    src, dst = src[keep], dst[keep]
    factor = np.sqrt(occ[src, j] * (occ[src, i] + 1.0))
    out = np.zeros(basis.dim, dtype=complex)
    np.add.at(out, dst, amplitude * factor * state.amplitudes[src])
    return StateVector(basis, out)


def inner(x: StateVector, y: StateVector) -> complex:
    """<x|y>, antilinear in the first argument."""
    _check_same_basis(x, y)
    return complex(np.vdot(x.amplitudes, y.amplitudes))
