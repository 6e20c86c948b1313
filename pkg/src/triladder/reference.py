"""Independent dense oracles.

Everything here is built from Kronecker products of single-site matrices on
the full (n_max+1)^N Hilbert space and restricted to a number sector by
occupation lookup afterwards. None of it touches the basis enumeration or
sparse assembly used by the main code path, so agreement between the two is
a meaningful check. Golden values are generated from these functions.
"""
from __future__ import annotations

import functools
import json
import math
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .fock import LatticeSpec

GOLDEN_PATH = Path(__file__).with_name("data") / "golden.json"

CHIRAL_RATIOS = (-3.56, -2.02, -1.22, 0.98, 1.96, 3.53)
BOND_RATIOS = (-3.56, -2.02, -1.22, 0.98, 2.04, 2.85)


# -- single-site building blocks --------------------------------------------

def _lowering(d: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, d)), 1, shape=(d, d), format="csr", dtype=complex)


def _embed(op, site: int, n_sites: int, d: int) -> sp.csr_matrix:
    left = sp.identity(d ** site, format="csr", dtype=complex)
    right = sp.identity(d ** (n_sites - site - 1), format="csr", dtype=complex)
    return sp.kron(sp.kron(left, op, format="csr"), right, format="csr")


@functools.lru_cache(maxsize=32)
def _site_ops(n_sites: int, d: int):
    a = _lowering(d)
    lowers = [_embed(a, j, n_sites, d) for j in range(n_sites)]
    return lowers, [(x.conj().T @ x).tocsr() for x in lowers]


def full_occupations(n_sites: int, n_max: int) -> np.ndarray:
    """Occupation tuple of every full-space index (site 0 most significant)."""
    d = n_max + 1
    idx = np.arange(d ** n_sites)
    return np.array([(idx // d ** (n_sites - 1 - j)) % d for j in range(n_sites)]).T


def sector(n_sites: int, n_max: int, total: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    occ = full_occupations(n_sites, n_max)
    keep = np.nonzero(occ.sum(axis=1) == total)[0]
    return keep, [tuple(int(x) for x in occ[k]) for k in keep]


def full_hamiltonian(spec: LatticeSpec) -> sp.csr_matrix:
    n, d = spec.n_sites, spec.n_max + 1
    a, num = _site_ops(n, d)
    eye = sp.identity(d ** n, format="csr", dtype=complex)
    h = sp.csr_matrix((d ** n, d ** n), dtype=complex)
    for j in range(n):
        h = h + spec.omega[j] * num[j] + 0.5 * spec.u[j] * (num[j] @ (num[j] - eye))
    for j in range(n - 1):
        hop = a[j].conj().T @ a[j + 1]
        h = h - spec.j_rung[j] * (hop + hop.conj().T)
    phase = np.exp(1j * spec.flux)
    for j in range(n - 2):
        hop = phase * (a[j].conj().T @ a[j + 2])
        h = h + spec.j_leg[j] * (hop + hop.conj().T)
    return h.tocsr()


def restrict(op, keep: np.ndarray) -> np.ndarray:
    return op[keep][:, keep].toarray()


def sector_hamiltonian(spec: LatticeSpec, total: int) -> tuple[np.ndarray, list[tuple[int, ...]]]:
    keep, occs = sector(spec.n_sites, spec.n_max, total)
    return restrict(full_hamiltonian(spec), keep), occs


_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]])
_Z = np.diag([1.0 + 0j, -1.0])


def pauli_xx_hamiltonian(spec: LatticeSpec) -> np.ndarray:
    """Hard-core model written as a spin-1/2 XX chain (|1> = spin down)."""
    n = spec.n_sites

    def string(ops: dict) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for j in range(n):
            out = np.kron(out, ops.get(j, np.eye(2)))
        return out

    def coupling(i, j, c):
        xy = string({i: _X, j: _X}) + string({i: _Y, j: _Y})
        chir = string({i: _X, j: _Y}) - string({i: _Y, j: _X})
        return 0.5 * c.real * xy - 0.5 * c.imag * chir

    dim = 2 ** n
    h = np.zeros((dim, dim), dtype=complex)
    for j in range(n):
        h += spec.omega[j] * 0.5 * (np.eye(dim) - string({j: _Z}))
    for j in range(n - 1):
        h += coupling(j, j + 1, -spec.j_rung[j] + 0j)
    for j in range(n - 2):
        h += coupling(j, j + 2, spec.j_leg[j] * np.exp(1j * spec.flux))
    return h


# -- states and observables --------------------------------------------------

def top_state(spec: LatticeSpec, total: int) -> tuple[float, np.ndarray, list[tuple[int, ...]]]:
    """Highest eigenpair of the sector Hamiltonian by dense diagonalization."""
    h, occs = sector_hamiltonian(spec, total)
    vals, vecs = la.eigh(h)
    return float(vals[-1]), vecs[:, -1], occs


def ground_energy(spec: LatticeSpec, total: int) -> float:
    h, _ = sector_hamiltonian(spec, total)
    return float(la.eigvalsh(h)[0])


class SectorObservables:
    """Observables of a sector vector computed with full-space operators."""

    def __init__(self, spec: LatticeSpec, total: int):
        self.spec = spec
        self.keep, self.occs = sector(spec.n_sites, spec.n_max, total)
        self.lowers, self.numbers = _site_ops(spec.n_sites, spec.n_max + 1)

    def _op(self, full) -> np.ndarray:
        return restrict(full, self.keep)

    def coherence(self, psi, i, j) -> complex:
        return complex(np.vdot(psi, self._op(self.lowers[i].conj().T @ self.lowers[j]) @ psi))

    def one_body(self, psi) -> np.ndarray:
        n = self.spec.n_sites
        return np.array([[self.coherence(psi, i, j) for j in range(n)] for i in range(n)])

    def current_op(self, j) -> np.ndarray:
        hop = self.lowers[j].conj().T @ self.lowers[j + 1]
        return self._op(1j * self.spec.j_rung[j] * (hop - hop.conj().T))

    def currents(self, psi) -> np.ndarray:
        return np.array([np.vdot(psi, self.current_op(j) @ psi).real for j in range(self.spec.n_rungs)])

    def g_map(self, psi) -> dict[tuple[int, int], float]:
        ops = [self.current_op(j) for j in range(self.spec.n_rungs)]
        means = [np.vdot(psi, o @ psi) for o in ops]
        out = {}
        for i in range(len(ops)):
            for j in range(i + 2, len(ops)):
                out[(i, j)] = float((np.vdot(psi, ops[i] @ (ops[j] @ psi)) - means[i] * means[j]).real)
        return out

    def bonds(self, psi) -> np.ndarray:
        return np.array([2 * self.coherence(psi, j, j + 1).real for j in range(self.spec.n_rungs)])


def chiral_from_pairs(g: dict, n_rungs: int) -> float:
    return float(sum(np.mean([g[(j, j + d)] for j in range(n_rungs - d)]) for d in range(2, n_rungs)))


def staggered_sum(bonds) -> float:
    return float(sum(((-1) ** (k + 1)) * b for k, b in enumerate(bonds)))


def ladder_point(ratio: float, n_sites: int = 8, total: int = 4, n_max: int = 1) -> dict:
    """Every exact observable of the prepared state at one coupling ratio, J = 1."""
    spec = LatticeSpec.from_ratio(ratio, n_sites=n_sites, j=1.0, u=-30.5, n_max=n_max)
    e_top, psi, _ = top_state(spec, total)
    obs = SectorObservables(spec, total)
    g = obs.g_map(psi)
    bonds = obs.bonds(psi)
    return {"spec": spec, "top_energy": e_top, "one_body": obs.one_body(psi), "currents": obs.currents(psi),
            "g": g, "chiral_c": chiral_from_pairs(g, spec.n_rungs), "bond_o": bonds,
            "bond_order": staggered_sum(bonds)}


# -- protocol oracle (soft-core estimator bias) ------------------------------

def estimated_correlation(spec: LatticeSpec, total: int, psi: np.ndarray, rung_i: int, rung_j: int,
                          interacting: bool = True) -> float:
    """Infinite-shot correlation estimate after simultaneous pair beamsplitters.

    With ``interacting`` the onsite U of the pair sites stays on while the
    beamsplitter runs; without it the rotation is linear in the modes and
    the estimate is exact for any occupancy.
    """
    keep, occs = sector(spec.n_sites, spec.n_max, total)
    a, num = _site_ops(spec.n_sites, spec.n_max + 1)
    eye = sp.identity(num[0].shape[0], format="csr")
    vec = psi.copy()
    for r in (rung_i, rung_j):
        hop = a[r].conj().T @ a[r + 1]
        full = -spec.j_rung[r] * (hop + hop.conj().T)
        if interacting:
            for s in (r, r + 1):
                full = full + 0.5 * spec.u[s] * (num[s] @ (num[s] - eye))
        h_bs = restrict(full, keep)
        vec = la.expm(-1j * h_bs * math.pi / (4 * spec.j_rung[r])) @ vec
    p = np.abs(vec) ** 2
    occ = np.array(occs, dtype=float)
    x = spec.j_rung[rung_i] * (occ[:, rung_i] - occ[:, rung_i + 1])
    y = spec.j_rung[rung_j] * (occ[:, rung_j] - occ[:, rung_j + 1])
    return float(p @ (x * y) - (p @ x) * (p @ y))


def soft_core_bias(ratio: float, n_max: int = 4, rung_i: int = 0, rung_j: int = 6) -> dict:
    """Estimator minus exact G at device |U|/J for the prepared state, U on during readout."""
    spec = LatticeSpec.from_ratio(ratio, n_sites=8, j=1.0, u=-186.1 / 6.1, n_max=n_max)
    _, psi, _ = top_state(spec, 4)
    exact = SectorObservables(spec, 4).g_map(psi)[(rung_i, rung_j)]
    est = estimated_correlation(spec, 4, psi, rung_i, rung_j)
    return {"spec": spec, "exact": exact, "estimate": est, "bias": est - exact}


# -- ramp oracle -------------------------------------------------------------

def ramp_fidelity(spec: LatticeSpec, initial, park: float, duration: float, rtol: float = 1e-12) -> float:
    """Linear ramp of parked sites onto resonance, integrated adaptively.

    Sites with ``initial == 1`` start on resonance; the rest start at
    ``park`` and approach zero detuning linearly over ``duration``.
    """
    total = int(sum(initial))
    h0, occs = sector_hamiltonian(spec, total)
    occ = np.array(occs, dtype=float)
    start = np.array([0.0 if n else park for n in initial])
    diag0 = occ @ start
    psi0 = np.zeros(len(occs), dtype=complex)
    psi0[occs.index(tuple(initial))] = 1.0

    def rhs(t, y):
        return -1j * (h0 @ y + (1 - t / duration) * diag0 * y)

    sol = solve_ivp(rhs, (0.0, duration), psi0, method="DOP853", rtol=rtol, atol=rtol * 1e-2)
    final = sol.y[:, -1]
    vals, vecs = la.eigh(h0)
    return float(abs(np.vdot(vecs[:, -1], final)) ** 2)


# -- open-system oracle ------------------------------------------------------

def lindblad_full_space(spec: LatticeSpec, t1, t2r, rho0: np.ndarray, t: float) -> np.ndarray:
    """exp(L t) applied on the full truncated space with column-stacked vec."""
    n, d = spec.n_sites, spec.n_max + 1
    a, num = _site_ops(n, d)
    h = full_hamiltonian(spec).toarray()
    dim = d ** n
    eye = np.eye(dim)
    sup = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for j in range(n):
        g1 = 1.0 / t1[j]
        gphi = 1.0 / t2r[j] - 0.5 / t1[j]
        for rate, op in ((g1, a[j].toarray()), (2 * gphi, num[j].toarray())):
            if rate <= 0:
                continue
            ldl = op.conj().T @ op
            sup += rate * (np.kron(op.conj(), op) - 0.5 * np.kron(eye, ldl) - 0.5 * np.kron(ldl.T, eye))
    vec = rho0.reshape(-1, order="F")
    return (la.expm(sup * t) @ vec).reshape(dim, dim, order="F")


# -- golden file -------------------------------------------------------------

def _entry(spec: LatticeSpec | None, value, tol: float, source: str = "oracle", **extra) -> dict:
    out = {"spec_hash": spec.digest() if spec is not None else None, "value": value, "tolerance": tol,
           "source": source}
    out.update(extra)
    return out


def _cplx(m: np.ndarray) -> dict:
    return {"real": np.real(m).tolist(), "imag": np.imag(m).tolist()}


def generate_golden() -> dict:
    """Compute every golden value from the dense oracles above."""
    g: dict[str, dict] = {}
    tri = LatticeSpec.uniform(3, j=1.0, j_leg=1.0)
    for flux in (0.0, math.pi):
        s = tri.replace(flux=flux)
        h, _ = sector_hamiltonian(s, 1)
        g[f"triangle_spectrum/flux={flux:.6f}"] = _entry(s, la.eigvalsh(h).tolist(), 1e-10)
    for ratio in sorted(set(CHIRAL_RATIOS) | set(BOND_RATIOS)):
        pt = ladder_point(ratio)
        s = pt["spec"]
        key = f"ladder/{ratio:+.2f}"
        g[f"{key}/top_energy"] = _entry(s, pt["top_energy"], 1e-9)
        g[f"{key}/ground_energy"] = _entry(s, ground_energy(s, 4), 1e-9)
        g[f"{key}/g"] = _entry(s, [[i, j, v] for (i, j), v in sorted(pt["g"].items())], 1e-10)
        g[f"{key}/chiral_c"] = _entry(s, pt["chiral_c"], 1e-10)
        g[f"{key}/bond_o"] = _entry(s, pt["bond_o"].tolist(), 1e-10)
        g[f"{key}/bond_order"] = _entry(s, pt["bond_order"], 0.01, tolerance_kind="relative")
        g[f"{key}/currents"] = _entry(s, pt["currents"].tolist(), 1e-10)
        if ratio == -1.22:
            g[f"{key}/one_body"] = _entry(s, _cplx(pt["one_body"]), 1e-10)
    c_pi = ladder_point(-1.22)["chiral_c"]
    c_zero = ladder_point(0.98)["chiral_c"]
    g["chiral_ratio/-1.22_over_+0.98"] = _entry(None, c_pi / c_zero, 0.01, tolerance_kind="relative")

    ramp_spec = LatticeSpec.from_ratio(-1.22, n_sites=8, n_max=1)
    initial = (1, 0, 0, 1, 1, 0, 0, 1)
    park = -2 * math.pi * 150e6
    g["ramp/fidelity_300ns"] = _entry(ramp_spec, ramp_fidelity(ramp_spec, initial, park, 300e-9), 1e-6,
                                      initial=list(initial), park=park, duration=300e-9)
    g["ramp/fidelity_3000ns"] = _entry(ramp_spec, ramp_fidelity(ramp_spec, initial, park, 3000e-9), 1e-6,
                                       initial=list(initial), park=park, duration=3000e-9)

    for ratio in CHIRAL_RATIOS:
        b = soft_core_bias(ratio)
        g[f"soft_core_bias/{ratio:+.2f}"] = _entry(b["spec"], {"exact": b["exact"], "estimate": b["estimate"],
                                                              "bias": b["bias"]}, 1e-8)

    small = LatticeSpec.uniform(3, j=1.0, j_leg=0.5, flux=math.pi)
    t1, t2r = (8.0, 10.0, 12.0), (6.0, 9.0, 15.0)
    occ = full_occupations(3, 1)
    start = int(np.nonzero((occ == (1, 0, 0)).all(axis=1))[0][0])
    rho0 = np.zeros((8, 8), dtype=complex)
    rho0[start, start] = 1.0
    rho = lindblad_full_space(small, t1, t2r, rho0, 5.0)
    keep = np.nonzero(occ.sum(axis=1) <= 1)[0]
    g["lindblad/three_site_t5"] = _entry(small, {
        "t1": list(t1), "t2r": list(t2r), "time": 5.0,
        "occupations": [occ[k].tolist() for k in keep],
        "rho": _cplx(rho[np.ix_(keep, keep)])}, 1e-8)
    g["tbs/6.1MHz_ns"] = _entry(None, 20.49, 0.005, source="published", tolerance_kind="relative")
    return g


def write_golden(path: Path = GOLDEN_PATH) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"format": 1, "entries": generate_golden()}, indent=1, sort_keys=True) + "\n")
    return path


@functools.lru_cache(maxsize=1)
def load_golden(path: str | None = None) -> dict:
    return json.loads(Path(path or GOLDEN_PATH).read_text())["entries"]


if __name__ == "__main__":  # pragma: no cover
    print(write_golden())
