"""Triangular-ladder Bose-Hubbard simulator with 0 or pi synthetic flux.

Exact diagonalization, time evolution, an emulated measurement chain with
shot sampling, and open-system dynamics for few-site lattices.
"""
from .engine import (
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
                     prepared_state,
                     top_manifold,
                     top_state,
)
from .fock import (
                     DEVICE_J,
                     DEVICE_U,
                     FockBasis,
                     LatticeSpec,
                     MultiSectorBasis,
                     ParameterError,
                     StateVector,
                     apply_hop,
                     build_basis,
                     inner,
                     occupation_string,
)
from .hamiltonian import (
                     NonMeasurablePairError,
                     PairHamiltonianSpec,
                     SparseOperator,
                     assemble,
                     assemble_pair,
                     bond_operator,
                     current_operator,
                     expectation,
                     negate_map,
)
from .noise import DensityMatrix, NoiseModel, lindblad_evolve, trajectory_evolve
from .observables import (
                     ObservableReport,
                     bond_kinetic,
                     bond_order,
                     build_report,
                     chiral_order,
                     current_correlation,
                     one_body_matrix,
                     rung_current,
)
from .protocol import (
                     MeasurementPlan,
                     ShotTable,
                     apply_protocol,
                     calibrate_tbs,
                     estimate_bond_kinetic,
                     estimate_current,
                     estimate_current_correlation,
                     fit_tbs_from_trace,
                     sample,
)

__version__ = "0.1.0"

__all__ = [
    "apply_hop", "apply_protocol", "assemble", "assemble_pair", "bond_kinetic", "bond_operator", "bond_order",
    "build_basis", "build_report", "calibrate_tbs", "chiral_order", "ConvergenceError", "current_correlation",
    "current_operator", "DegeneracyWarning", "DensityMatrix", "DEVICE_J", "DEVICE_U", "EngineError",
    "estimate_bond_kinetic", "estimate_current", "estimate_current_correlation", "evolve", "evolve_ramp",
    "expectation", "fit_tbs_from_trace", "FockBasis", "ground_manifold", "ground_state", "inner", "LatticeSpec",
    "lindblad_evolve", "MeasurementPlan", "MultiSectorBasis", "negate_map", "NoiseModel", "NonMeasurablePairError",
    "ObservableReport", "occupation_string", "one_body_matrix", "PairHamiltonianSpec", "device_schedule",
    "ParameterError", "prepared_state", "RampSchedule", "RampSegment", "rung_current", "sample", "ShotTable",
    "SparseOperator", "StateVector", "top_manifold", "top_state", "trajectory_evolve",
]
