import math

import numpy as np
import pytest
from conftest import ladder
from hypothesis import given, settings
from hypothesis import strategies as st

from triladder.engine import prepared_state
from triladder.fock import DEVICE_J, FockBasis, LatticeSpec, ParameterError, StateVector, build_basis
from triladder.hamiltonian import NonMeasurablePairError
from triladder.observables import bond_kinetic, correlation_map, rung_current
from triladder.protocol import (
    BornTable,
    FitError,
    MeasurementPlan,
    ShotTable,
    apply_protocol,
    born_table,
    calibrate_bond_sign,
    calibrate_tbs,
    estimate_bond_kinetic,
    estimate_current,
    estimate_current_correlation,
    estimate_plan,
    fit_tbs_from_trace,
    measure,
    sample,
    swap_trace,
)
from triladder.reference import load_golden


def two_site(amp0, amp1, j=1.0):
    b = FockBasis(2, 1, 1)
    return LatticeSpec.uniform(2, j=j), StateVector.from_terms(b, {"10": amp0, "01": amp1}).normalized()


def test_beamsplitter_maps_current_to_imbalance():
    spec, psi = two_site(1, 1j)
    plan = MeasurementPlan("current", (0,), shots=None)
    out = apply_protocol(psi, plan, spec)
    assert np.allclose(out.populations(), [0, 1], atol=1e-12)
    value, err = estimate_current(measure(psi, plan, spec), 0, 1.0)
    assert value == pytest.approx(rung_current(psi, 0, spec)) and err == 0


@pytest.mark.parametrize("phase", [0.0, 0.4, 1.3, math.pi / 2, 2.5, math.pi])
def test_current_estimator_exact_for_any_phase(phase):
    spec, psi = two_site(1, np.exp(1j * phase), j=1.7)
    plan = MeasurementPlan("current", (0,), shots=None)
    value, _ = estimate_current(measure(psi, plan, spec), 0, 1.7)
    assert value == pytest.approx(rung_current(psi, 0, spec), abs=1e-12)


@pytest.mark.parametrize("delta", [2 * math.pi * 10e6, -2 * math.pi * 10e6, 3.0])
def test_bond_protocol_recovers_bond_energy(delta):
    sign = calibrate_bond_sign(delta)
    assert sign == (-1 if delta > 0 else 1)
    for phase in (0.0, 0.7, 2.0):
        spec, psi = two_site(1, np.exp(1j * phase))
        plan = MeasurementPlan("bond_kinetic", (0,), shots=None, delta=delta)
        value, _ = estimate_bond_kinetic(measure(psi, plan, spec), 0, sign)
        assert value == pytest.approx(bond_kinetic(psi, 0), abs=1e-9)


def test_bond_calibration_rejects_bad_idle():
    with pytest.raises(FitError):
        calibrate_bond_sign(1.0, t_idle=math.pi / 8)


def test_beamsplitter_time_and_fit():
    assert calibrate_tbs(DEVICE_J) * 1e9 == pytest.approx(20.49, rel=5e-3)
    for j in (1.0, 2.0):
        times = np.linspace(0, 2.5 / j, 60)
        fitted = fit_tbs_from_trace(times, swap_trace(j, times))
        assert fitted == pytest.approx(math.pi / (4 * j), rel=1e-6)
    assert fit_tbs_from_trace(np.linspace(0, 1.25, 60), swap_trace(2.0, np.linspace(0, 1.25, 60))) == \
        pytest.approx(0.5 * fit_tbs_from_trace(np.linspace(0, 2.5, 60), swap_trace(1.0, np.linspace(0, 2.5, 60))))


def test_fit_rejects_noise_and_short_traces():
    rng = np.random.default_rng(0)
    times = np.linspace(0, 3, 50)
    with pytest.raises(FitError):
        fit_tbs_from_trace(times, rng.uniform(size=50))
    with pytest.raises(FitError):
        fit_tbs_from_trace(times[:5], swap_trace(1.0, times[:5]))
    with pytest.raises(FitError):
        short = np.linspace(0, 0.5, 40)
        fit_tbs_from_trace(short, swap_trace(1.0, short))


def test_plan_validation():
    with pytest.raises(NonMeasurablePairError):
        MeasurementPlan("current_correlation", (2, 3))
    with pytest.raises(ParameterError):
        MeasurementPlan("current_correlation", (1,))
    with pytest.raises(ParameterError):
        MeasurementPlan("bond_kinetic", (0,))
    with pytest.raises(ParameterError):
        MeasurementPlan("current", (0,), shots=0)
    with pytest.raises(ParameterError):
        MeasurementPlan("entropy", (0,))
    spec = LatticeSpec.uniform(4)
    with pytest.raises(ParameterError):
        apply_protocol(StateVector.product(build_basis(4, 1, 1), (1, 0, 0, 0)),
                       MeasurementPlan("current", (3,), shots=None), spec)


def test_sampling_is_deterministic_and_born_distributed():
    spec, b, psi = ladder(-1.22)
    plan = MeasurementPlan("current_correlation", (0, 6), shots=20000, seed=42)
    a, c = measure(psi, plan, spec), measure(psi, plan, spec)
    assert a.counts == c.counts and a.total == 20000
    other = measure(psi, MeasurementPlan("current_correlation", (0, 6), shots=20000, seed=43), spec)
    assert other.counts != a.counts
    born = measure(psi, MeasurementPlan("current_correlation", (0, 6), shots=None), spec)
    for s, p in born.probabilities.items():
        k = a.counts.get(s, 0)
        assert abs(k - 20000 * p) <= 3 * math.sqrt(20000 * p * (1 - p)) + 3, s


def test_binary_readout_clips_occupancy():
    b = FockBasis(3, 3, 3)
    psi = StateVector.product(b, (2, 1, 0))
    plan = MeasurementPlan("current", (0,), shots=10, readout_mode="binary")
    table = sample(psi, plan)
    assert table.counts == {"110": 10}
    assert {k: v for k, v in born_table(psi, plan).probabilities.items() if v} == {"110": 1.0}
    assert {k: v for k, v in born_table(psi).probabilities.items() if v} == {"210": 1.0}


def test_shot_table_csv_round_trip():
    spec, b, psi = ladder(0.98)
    plan = MeasurementPlan("current", (0, 2, 4, 6), shots=500, seed=7)
    table = measure(psi, plan, spec)
    back = ShotTable.from_csv(table.to_csv())
    assert back.counts == table.counts and back.seed == 7
    with pytest.raises(ParameterError):
        ShotTable({})


def test_table_must_match_plan():
    spec, b, psi = ladder(0.98)
    table = measure(psi, MeasurementPlan("current", (0, 2), shots=None), spec)
    with pytest.raises(ParameterError):
        estimate_current(table, 4, 1.0)
    with pytest.raises(ParameterError):
        estimate_bond_kinetic(table, 0, 1)
    with pytest.raises(NonMeasurablePairError):
        estimate_current_correlation(table, 0, 1, 1.0, 1.0)


@pytest.mark.parametrize("ratio", [-1.22, 0.98])
def test_infinite_shot_estimates_are_exact(ratio):
    spec, b, psi = ladder(ratio)
    g = correlation_map(psi, spec)
    for pair in [(0, 2), (0, 6), (2, 5)]:
        plan = MeasurementPlan("current_correlation", pair, shots=None)
        est = estimate_plan(measure(psi, plan, spec), plan, spec)
        assert est[("g", *pair)][0] == pytest.approx(g[pair], abs=1e-10)
    plan = MeasurementPlan("bond_kinetic", (1, 3, 5), shots=None, delta=2 * math.pi * 10e6)
    est = estimate_plan(measure(psi, plan, spec), plan, spec)
    for r in (1, 3, 5):
        assert est[("bond", r)][0] == pytest.approx(bond_kinetic(psi, r), abs=1e-10)


def test_soft_core_estimator_is_exact_without_interaction():
    # n_max = N, so the pair rotation is never clipped by the truncation
    spec, b, psi = ladder(-1.22, n_max=4)
    plan = MeasurementPlan("current_correlation", (0, 6), shots=None)
    value, _ = estimate_plan(measure(psi, plan, spec), plan, spec)[("g", 0, 6)]
    assert value == pytest.approx(correlation_map(psi, spec)[(0, 6)], abs=1e-10)


@pytest.mark.parametrize("ratio", [-1.22, 0.98])
def test_soft_core_bias_with_interaction_matches_oracle(ratio):
    golden = load_golden()[f"soft_core_bias/{ratio:+.2f}"]["value"]
    spec = LatticeSpec.from_ratio(ratio, j=1.0, u=-186.1 / 6.1, n_max=4)
    b = build_basis(8, 4, 4)
    psi = prepared_state(spec, b)
    plan = MeasurementPlan("current_correlation", (0, 6), shots=None)
    value, _ = estimate_plan(measure(psi, plan, spec, include_interaction=True), plan, spec)[("g", 0, 6)]
    assert value == pytest.approx(golden["estimate"], abs=1e-8)
    assert correlation_map(psi, spec)[(0, 6)] == pytest.approx(golden["exact"], abs=1e-8)


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2 ** 63))
def test_shot_estimates_within_error_bars(seed):
    spec, b, psi = ladder(-1.22)
    exact = correlation_map(psi, spec)[(0, 6)]
    plan = MeasurementPlan("current_correlation", (0, 6), shots=20000, seed=seed)
    value, err = estimate_plan(measure(psi, plan, spec), plan, spec)[("g", 0, 6)]
    # 5 sigma keeps the false-alarm rate negligible over hypothesis draws
    assert abs(value - exact) < 5 * err


def test_jackknife_matches_bootstrap_scale():
    spec, b, psi = ladder(-1.22)
    exact = correlation_map(psi, spec)[(0, 6)]
    values, errs = [], []
    for seed in range(40):
        plan = MeasurementPlan("current_correlation", (0, 6), shots=2000, seed=seed)
        v, e = estimate_plan(measure(psi, plan, spec), plan, spec)[("g", 0, 6)]
        values.append(v)
        errs.append(e)
    assert np.std(values, ddof=1) == pytest.approx(np.mean(errs), rel=0.3)
    assert abs(np.mean(values) - exact) < 4 * np.mean(errs) / math.sqrt(40)


def test_born_table_from_density_matrix():
    from triladder.noise import DensityMatrix
    spec, psi = two_site(1, 1j)
    rho = DensityMatrix.from_state(psi, multi_sector=False)
    assert isinstance(born_table(rho), BornTable)
    assert born_table(rho).probabilities == pytest.approx(born_table(psi).probabilities)
