"""
membranas - Simulador de membranas relativistas axisimétricas
=============================================================
Evolución del sistema reducido en gauge fijo, diagnósticos de ruptura y
oráculo homogéneo de referencia.
"""

__version__ = "0.1.0"

from membranas.errors import MembraneError
from membranas.geometry import AxisymmetryShape, FieldState, MetricField, compute_metric, immersivity_indicator
from membranas.gauge import GaugeConstant, comoving_project, fix_parametrization, gauge_residuals
from membranas.evolution import Direction, RunResult, SolverParams, Termination, evolve
from membranas.diagnostics import BreakdownReport, DiagnosticsRecord, convexity_check, detect_breakdown
from membranas.oracle import CliffordState, clifford_integrate, clifford_rhs, lift_to_grid

__all__ = [
    "__version__",
    "MembraneError",
    "AxisymmetryShape",
    "FieldState",
    "MetricField",
    "compute_metric",
    "immersivity_indicator",
    "GaugeConstant",
    "comoving_project",
    "fix_parametrization",
    "gauge_residuals",
    "Direction",
    "RunResult",
    "SolverParams",
    "Termination",
    "evolve",
    "BreakdownReport",
    "DiagnosticsRecord",
    "convexity_check",
    "detect_breakdown",
    "CliffordState",
    "clifford_integrate",
    "clifford_rhs",
    "lift_to_grid",
]
