import math
import warnings

import numpy as np
import pytest
import scipy.linalg as la
from conftest import ladder
from hypothesis import given, settings
from hypothesis import strategies as st

from triladder.checks import random_spec
from triladder.engine import (
    DENSE_EXPM_MAX_DIM,
    ConvergenceError,
    DegeneracyWarning,
    EngineError,
    RampSchedule,
    RampSegment,
    device_schedule,
    evolve,
    evolve_ramp,
    ground_manifold,
    ground_state,
    krylov_expmv,
    lanczos,
    top_state,
)
from triladder.fock import LatticeSpec, ParameterError, StateVector, build_basis
from triladder.hamiltonian import assemble, negate_map, total_number_operator
from triladder.reference import load_golden


def test_two_site_ground_and_top():
    spec = LatticeSpec.uniform(2, j=1.0)
    b = build_basis(2, 1, 1)
    e, psi = ground_state(assemble(spec, b))
    assert e == pytest.approx(-1)
    assert np.allclose(np.abs(psi.amplitudes), [1 / math.sqrt(2)] * 2)
    assert top_state(spec, b)[0] == pytest.approx(1)


def test_triangle_pi_ground_energy():
    spec = LatticeSpec.uniform(3, j=1.0, j_leg=1.0, flux=math.pi)
    assert ground_state(assemble(spec, build_basis(3, 1, 1)))[0] == pytest.approx(-2)


def test_ladder_energies_match_golden():
    golden = load_golden()
    spec, b, _ = ladder(-1.22)
    assert ground_state(assemble(spec, b))[0] == pytest.approx(golden["ladder/-1.22/ground_energy"]["value"],
                                                               abs=1e-9)
    spec, b, _ = ladder(0.98)
    assert top_state(spec, b)[0] == pytest.approx(golden["ladder/+0.98/top_energy"]["value"], abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_top_state_is_top_eigenvector(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, 5, 2)
    b = build_basis(5, 2, 2)
    h = assemble(spec, b)
    e_top, psi = top_state(spec, b)
    assert e_top == pytest.approx(-ground_state(assemble(negate_map(spec), b))[0], abs=1e-9)
    assert e_top == pytest.approx(la.eigvalsh(h.to_dense())[-1], abs=1e-9)
    assert np.linalg.norm(h.matrix @ psi.amplitudes - e_top * psi.amplitudes) < 1e-9


def test_degeneracy_is_flagged():
    # Triangle with zero flux: the ground level -1 is doubly degenerate.
    spec = LatticeSpec.uniform(3, j=1.0, j_leg=1.0)
    h = assemble(spec, build_basis(3, 1, 1))
    man = ground_manifold(h)
    assert man.degenerate and len(man.states) == 2
    with pytest.warns(DegeneracyWarning):
        ground_state(h)


def test_non_hermitian_rejected():
    spec = LatticeSpec.uniform(2, j=1.0)
    h = assemble(spec, build_basis(2, 1, 1))
    with pytest.raises(EngineError):
        ground_state(h * 1j)


def test_lanczos_matches_dense():
    rng = np.random.default_rng(3)
    spec = random_spec(rng, 8, 2)
    h = assemble(spec, build_basis(8, 4, 2))
    vals, vecs = lanczos(h.matrix.__matmul__, h.dim, k=2, tol=1e-11, scale=h.norm_estimate())
    ref = la.eigvalsh(h.to_dense())[:2]
    assert np.allclose(vals, ref, atol=1e-9 * h.norm_estimate())
    assert np.linalg.norm(h.matrix @ vecs[0] - vals[0] * vecs[0]) <= 1e-10 * h.norm_estimate()


def test_lanczos_reports_residual_on_failure():
    rng = np.random.default_rng(4)
    spec = random_spec(rng, 8, 2)
    h = assemble(spec, build_basis(8, 4, 2))
    with pytest.raises(ConvergenceError) as info:
        lanczos(h.matrix.__matmul__, h.dim, k=2, tol=1e-14, max_iter=6, scale=h.norm_estimate())
    assert info.value.residual > 0


def test_krylov_matches_dense_exponential():
    rng = np.random.default_rng(5)
    spec = random_spec(rng, 7, 2)
    h = assemble(spec, build_basis(7, 3, 2))
    psi = rng.normal(size=h.dim) + 1j * rng.normal(size=h.dim)
    psi /= np.linalg.norm(psi)
    out = krylov_expmv(h.matrix.__matmul__, psi, 3.7, h.norm_estimate())
    assert np.allclose(out, la.expm(-1j * 3.7 * h.to_dense()) @ psi, atol=1e-10)


def test_krylov_underflow_raises():
    rng = np.random.default_rng(6)
    spec = random_spec(rng, 7, 2)
    h = assemble(spec, build_basis(7, 3, 2))
    psi = np.ones(h.dim, dtype=complex) / math.sqrt(h.dim)
    with pytest.raises(EngineError):
        krylov_expmv(h.matrix.__matmul__, psi, 50.0, h.norm_estimate(), tol=1e-30, m=4, min_step=1e-3)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), t1=st.floats(0.0, 2.0), t2=st.floats(0.0, 2.0))
def test_evolution_composes_and_conserves(seed, t1, t2):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, 5, 2)
    b = build_basis(5, 3, 2)
    h = assemble(spec, b)
    psi = StateVector(b, rng.normal(size=b.dim) + 1j * rng.normal(size=b.dim)).normalized()
    a = evolve(evolve(psi, h, t1), h, t2)
    c = evolve(psi, h, t1 + t2)
    assert np.allclose(a.amplitudes, c.amplitudes, atol=1e-9)
    assert abs(c.norm() - 1) < 1e-10
    e0 = np.vdot(psi.amplitudes, h.matrix @ psi.amplitudes).real
    e1 = np.vdot(c.amplitudes, h.matrix @ c.amplitudes).real
    assert abs(e1 - e0) <= 1e-9 * h.norm_estimate()


def test_evolve_zero_time_is_identity():
    spec, b, psi = ladder(-1.22)
    assert evolve(psi, assemble(spec, b), 0.0) is psi


def test_krylov_branch_conserves_norm_and_number():
    rng = np.random.default_rng(9)
    spec = LatticeSpec.from_ratio(-1.22, n_max=4, j=1.0, u=-30.5)
    h = assemble(spec, build_basis(8, 5, 4))
    assert h.dim > DENSE_EXPM_MAX_DIM
    psi = StateVector(h.basis, rng.normal(size=h.dim) + 0j).normalized()
    out = evolve(psi, h, 0.5)
    assert abs(out.norm() - 1) < 1e-10
    n_op = total_number_operator(h.basis)
    assert np.vdot(out.amplitudes, n_op.matrix @ out.amplitudes).real == pytest.approx(5)


def test_ramp_segments():
    seg = RampSegment(10e-9, (0.0, -1.0), (0.0, 0.0), "linear")
    assert np.allclose(seg.detuning(5e-9), [0, -0.5])
    assert np.allclose(RampSegment(1.0, (0.0,), (2.0,), "cosine").detuning(0.5), [1.0])
    assert np.allclose(RampSegment(1.0, (0.0,), (2.0,), "step").detuning(0.0), [2.0])
    with pytest.raises(ParameterError):
        RampSegment(0.0, (0.0,), (0.0,))
    with pytest.raises(ParameterError):
        RampSegment(1.0, (0.0,), (0.0,), "quadratic")
    with pytest.raises(ParameterError):
        RampSegment(1.0, (np.inf,), (0.0,))


def test_zero_duration_ramp_returns_initial_state():
    spec, b, _ = ladder(-1.22)
    res = evolve_ramp(RampSchedule((1, 0, 0, 1, 1, 0, 0, 1)), spec, b)
    assert res.state.amplitudes[b.index[(1, 0, 0, 1, 1, 0, 0, 1)]] == 1
    assert res.steps == 0


def test_ramp_rejects_large_dt():
    spec, b, _ = ladder(-1.22)
    with pytest.raises(ParameterError):
        evolve_ramp(device_schedule(duration=1e-9), spec, b, dt=2e-9)


def test_device_schedule_layout():
    s = device_schedule()
    assert s.initial == (1, 0, 0, 1, 1, 0, 0, 1)
    assert s.duration == pytest.approx(300e-9)
    seg = s.segments[0]
    assert seg.start[1] == pytest.approx(-2 * math.pi * 150e6) and seg.start[0] == 0
    assert s.scaled(10).duration == pytest.approx(3000e-9)


def test_midpoint_integrator_is_second_order():
    spec = LatticeSpec.from_ratio(-1.22)
    b = build_basis(8, 4, 1)
    target = top_state(spec, b)[1]
    sched = device_schedule(duration=60e-9)
    exact = evolve_ramp(sched, spec, b, dt=0.1e-9, target=target, order=4).fidelity
    errs = [abs(evolve_ramp(sched, spec, b, dt=dt, target=target, order=2).fidelity - exact)
            for dt in (0.4e-9, 0.2e-9)]
    assert 2.5 < errs[0] / errs[1] < 6.0


def test_no_warning_for_prepared_ladder_state():
    spec, b, _ = ladder(-1.22)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        top_state(spec, b)
