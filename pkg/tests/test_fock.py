import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from triladder.fock import (
    FockBasis,
    LatticeSpec,
    MultiSectorBasis,
    ParameterError,
    StateVector,
    apply_hop,
    build_basis,
    count_states,
    inner,
    occupation_string,
    parse_occupation_string,
)
from triladder.reference import full_occupations


@pytest.mark.parametrize("args, size", [((8, 4, 1), 70), ((8, 4, 4), 330), ((8, 4, 2), 266)])
def test_known_basis_sizes(args, size):
    assert build_basis(*args).dim == size
    assert count_states(*args) == size


def test_sizes_match_brute_force_enumeration():
    for n in range(1, 9):
        for n_max in range(1, 5):
            sums = full_occupations(n, n_max).sum(axis=1)
            for total in range(0, min(4, n * n_max) + 1):
                assert build_basis(n, total, n_max).dim == int(np.sum(sums == total)), (n, total, n_max)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 7), n_max=st.integers(1, 3), data=st.data())
def test_index_inverts_states(n, n_max, data):
    total = data.draw(st.integers(0, n * n_max))
    b = build_basis(n, total, n_max)
    assert all(b.index[s] == k for k, s in enumerate(b.states))
    assert list(b.states) == sorted(b.states, reverse=True)
    assert all(sum(s) == total and max(s, default=0) <= n_max for s in b.states)
    assert np.array_equal(b.find_keys(b.keys), np.arange(b.dim))
    assert all(b.index_of(s) == k for k, s in enumerate(b.states))


def test_invalid_bounds():
    with pytest.raises(ParameterError):
        build_basis(3, 4, 1)
    with pytest.raises(ParameterError):
        build_basis(3, -1, 1)


def test_apply_hop_examples():
    b = build_basis(2, 1, 1)
    out = apply_hop(StateVector.product(b, (0, 1)), 0, 1)
    assert out.amplitudes[b.index[(1, 0)]] == 1
    b2 = build_basis(2, 2, 2)
    out = apply_hop(StateVector.product(b2, (1, 1)), 0, 1)
    assert out.amplitudes[b2.index[(2, 0)]] == pytest.approx(math.sqrt(2))
    b1 = build_basis(2, 2, 1)
    assert np.all(apply_hop(StateVector.product(b1, (1, 1)), 0, 1).amplitudes == 0)
    with pytest.raises(ParameterError):
        apply_hop(StateVector.product(b, (0, 1)), 0, 2)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_hop_matrix_elements_are_adjoint(seed):
    rng = np.random.default_rng(seed)
    n, n_max = int(rng.integers(2, 5)), int(rng.integers(1, 4))
    b = build_basis(n, int(rng.integers(0, n * n_max + 1)), n_max)
    i, j = rng.choice(n, 2, replace=False)
    forward = np.array([apply_hop(StateVector(b, np.eye(b.dim)[k]), i, j).amplitudes for k in range(b.dim)]).T
    backward = np.array([apply_hop(StateVector(b, np.eye(b.dim)[k]), j, i).amplitudes for k in range(b.dim)]).T
    assert np.array_equal(forward, backward.conj().T)


def test_inner_and_normalization():
    b = build_basis(3, 1, 1)
    x = StateVector.from_terms(b, {"100": 1.0, "010": 1j, (0, 0, 1): -1.0})
    assert inner(x, x) == pytest.approx(1.0, abs=1e-12)
    assert x.norm() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ParameterError):
        inner(x, StateVector.product(build_basis(3, 2, 1), (1, 1, 0)))


def test_occupation_strings_round_trip():
    assert occupation_string((1, 0, 0, 1, 0, 0, 1, 1)) == "10010011"
    assert parse_occupation_string("10010011") == (1, 0, 0, 1, 0, 0, 1, 1)


def test_multi_sector_layout():
    mb = MultiSectorBasis(4, 2, 2)
    assert mb.dim == sum(count_states(4, t, 2) for t in range(3))
    assert list(mb.offsets) == sorted(set(mb.offsets))
    psi = StateVector.product(build_basis(4, 2, 2), (1, 0, 1, 0))
    emb = mb.embed(psi)
    assert emb.amplitudes[mb.index_of((1, 0, 1, 0))] == 1
    assert emb.amplitudes[mb.sector_slice(2)].sum() == 1


def test_spec_validation():
    with pytest.raises(ParameterError):
        LatticeSpec(3, (0, 0, 0), (0, 0, 0), (1.0, -1.0), (1.0,))
    with pytest.raises(ParameterError):
        LatticeSpec(3, (0, 0), (0, 0, 0), (1.0, 1.0), (1.0,))
    with pytest.raises(ParameterError):
        LatticeSpec.from_ratio(0.0)
    assert LatticeSpec.from_ratio(-1.22).flux == pytest.approx(math.pi)
    assert LatticeSpec.from_ratio(0.98).flux == 0.0


def test_basis_equality_is_structural():
    assert FockBasis(4, 2, 1) == build_basis(4, 2, 1)
    assert hash(FockBasis(4, 2, 1)) == hash(build_basis(4, 2, 1))
