"""
Diagnósticos de la corrida
==========================
Cantidades conservadas y monótonas registradas en cada registro, y la
clasificación heurística del mecanismo de ruptura.

RegularitySuspected es una etiqueta heurística: el resultado teórico deja
abierta la posibilidad de que la pérdida de inmersión venga acompañada de
pérdida de regularidad.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from membranas.errors import InsufficientHistory, InvariantViolation
from membranas.gauge import GaugeConstant, as_gauge_value, gauge_residuals
from membranas.geometry import (
    AxisymmetryShape,
    FieldState,
    compute_metric,
    g_tt_from_velocities,
    immersivity_indicator,
    radius_power_product,
)

if TYPE_CHECKING:
    from membranas.evolution import RunResult

logger = logging.getLogger(__name__)

CONVEXITY_REL_TOL = 1e-8
DEFAULT_TREND_WINDOW = 10
A_PRIORI_TOL = 1e-6


# ============================================
# 1. TIPOS
# ============================================
@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    min_indicator: float
    mean_radii: tuple[float, ...]
    density_spread: float
    x_inf: float
    y_inf: float
    max_speed: float
    velocity_margin: float
    gtt_integral: float
    max_radii: tuple[float, ...] = ()
    max_z_norm: float = 0.0
    min_radius_product: float = 0.0

    @property
    def gauge_residual(self) -> float:
        return max(self.x_inf, self.y_inf)

    def to_row(self) -> dict[str, float]:
        """Fila con las columnas estables de diagnostics.csv."""
        row = {"t": self.t, "min_indicator": self.min_indicator}
        for j, value in enumerate(self.mean_radii, start=1):
            row[f"mean_r_{j}"] = value
        row.update(
            density_spread=self.density_spread,
            X_inf=self.x_inf,
            Y_inf=self.y_inf,
            max_speed=self.max_speed,
            velocity_margin=self.velocity_margin,
            gtt_integral=self.gtt_integral,
        )
        return row


class Mechanism(str, Enum):
    IMMERSIVITY_LOSS = "ImmersivityLoss"
    REGULARITY_SUSPECTED = "RegularitySuspected"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True)
class ConvexityVerdict:
    factor: int
    convex: bool
    second_differences: np.ndarray
    tolerance: float


@dataclass
class BreakdownReport:
    direction: str
    t_star_estimate: Optional[float]
    mechanism: Mechanism
    trigger: str
    t_star_method: str = "power"
    trend_summary: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["mechanism"] = self.mechanism.value
        return data


# ============================================
# 2. CANTIDADES PUNTUALES
# ============================================
def conserved_density(state: FieldState, C: GaugeConstant | float, shape: AxisymmetryShape) -> tuple[np.ndarray, float]:
    """√|det g| / |g_tt| en cada punto y su máxima desviación relativa respecto a 1/C."""
    c = as_gauge_value(C)
    metric = compute_metric(state, shape)
    density = metric.sqrt_det / np.abs(metric.g_tt)
    spread = float(np.max(np.abs(density * c - 1.0)))
    return density, spread


def mean_radii(state: FieldState) -> tuple[float, ...]:
    """Media trapezoidal (1/2π) ∮ r_j dy de cada radio."""
    return tuple(float(v) for v in np.mean(state.r, axis=1))


def gtt_integral(state: FieldState) -> float:
    """∮ |g_tt| dy por la regla trapezoidal."""
    return state.h * float(np.sum(np.abs(g_tt_from_velocities(state))))


def compute_record(state: FieldState, C: GaugeConstant | float, shape: AxisymmetryShape) -> DiagnosticsRecord:
    c = as_gauge_value(C)
    metric = compute_metric(state, shape)
    _, min_indicator = immersivity_indicator(state, metric, shape)
    _, spread = conserved_density(state, c, shape)
    residuals = gauge_residuals(state, c, shape)
    power_product = radius_power_product(state.r, shape)
    speed_sq = np.sum(state.vz ** 2, axis=0) + np.sum(state.vr ** 2, axis=0)
    return DiagnosticsRecord(
        t=state.t,
        min_indicator=min_indicator,
        mean_radii=mean_radii(state),
        density_spread=spread,
        x_inf=residuals.x_inf,
        y_inf=residuals.y_inf,
        max_speed=float(np.max(c * power_product)),
        velocity_margin=float(1.0 - np.max(speed_sq)),
        gtt_integral=gtt_integral(state),
        max_radii=tuple(float(v) for v in np.max(state.r, axis=1)),
        max_z_norm=float(np.max(np.linalg.norm(state.z, axis=0))),
        min_radius_product=float(np.min(np.prod(state.r, axis=0))),
    )


# ============================================
# 3. CONVEXIDAD DE LOS RADIOS MEDIOS
# ============================================
def second_divided_differences(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """
    Segunda derivada en los nodos interiores, 2·f[t_{i-1}, t_i, t_{i+1}].
    Exacta para cuadráticas; vale con espaciado no uniforme y en ambos sentidos.
    """
    t = np.asarray(times, dtype=float)
    f = np.asarray(values, dtype=float)
    h1 = t[1:-1] - t[:-2]
    h2 = t[2:] - t[1:-1]
    return 2.0 * (h1 * f[2:] - (h1 + h2) * f[1:-1] + h2 * f[:-2]) / (h1 * h2 * (h1 + h2))


def convexity_check(records: Sequence[DiagnosticsRecord], rel_tol: float = CONVEXITY_REL_TOL) -> list[ConvexityVerdict]:
    """Veredicto por factor j: todas las segundas diferencias de r̄_j por debajo de +tol."""
    if len(records) < 3:
        raise InsufficientHistory(f"Se requieren al menos 3 registros, hay {len(records)}")
    times = np.array([rec.t for rec in records])
    means = np.array([rec.mean_radii for rec in records])
    verdicts = []
    for j in range(means.shape[1]):
        second = second_divided_differences(times, means[:, j])
        tol = rel_tol * float(np.max(np.abs(means[:, j])))
        verdicts.append(ConvexityVerdict(factor=j + 1, convex=bool(np.all(second < tol)),
                                         second_differences=second, tolerance=tol))
    return verdicts


# ============================================
# 4. RUPTURA
# ============================================
def _root_of_linear_fit(times: np.ndarray, values: np.ndarray) -> Optional[float]:
    slope, intercept = np.polyfit(times, values, 1)
    if slope == 0.0 or not np.isfinite(slope):
        return None
    root = -intercept / slope
    # la raíz debe quedar por delante del último registro en el sentido de la corrida
    if (root - times[-1]) * (times[-1] - times[0]) < 0.0:
        return None
    return float(root)


def estimate_t_star(times: Sequence[float], indicator: Sequence[float], method: str = "power") -> Optional[float]:
    """
    Extrapola el cruce por cero del indicador.

    linear: ajuste lineal del indicador.
    power:  ajuste lineal de I / İ, exacto para I ∝ (T - t)^p.
    """
    t = np.asarray(times, dtype=float)
    values = np.asarray(indicator, dtype=float)
    if t.size < 2:
        return None
    if method == "linear":
        return _root_of_linear_fit(t, values)
    if method == "power":
        if t.size < 3:
            return None
        rate = np.gradient(values, t, edge_order=2)
        if np.any(rate == 0.0):
            return None
        return _root_of_linear_fit(t, values / rate)
    raise ValueError(f"Método de extrapolación desconocido: {method}")


def detect_breakdown(
    result: "RunResult",
    budget: float,
    *,
    window: int = DEFAULT_TREND_WINDOW,
    method: str = "power",
) -> BreakdownReport:
    """
    Clasifica la terminación: ImmersivityLoss si el indicador decrece
    monótonamente en la ventana final con residuos dentro del presupuesto;
    RegularitySuspected si hubo NaN o los residuos lo excedieron.
    """
    records = result.records
    if len(records) < 3:
        raise InsufficientHistory(f"Se requieren al menos 3 registros, hay {len(records)}")
    termination = result.termination.value
    direction = getattr(result.direction, "value", str(result.direction))

    tail = records[-window:]
    times = np.array([rec.t for rec in tail])
    indicator = np.array([rec.min_indicator for rec in tail])
    monotone = bool(np.all(np.diff(indicator) < 0.0))
    worst_residual = max(rec.gauge_residual for rec in records)
    within_budget = worst_residual <= budget

    means = np.array([rec.mean_radii for rec in tail])
    mean_second = ([second_divided_differences(times, means[:, j]).tolist() for j in range(means.shape[1])]
                   if len(tail) >= 3 else [])
    min_product = min(rec.min_radius_product for rec in tail)
    summary = {
        "final_times": times.tolist(),
        "final_min_indicator": indicator.tolist(),
        "mean_radius_second_differences": mean_second,
        "non_monotone_window": not monotone,
        "max_gauge_residual": worst_residual,
        "min_radius_product": min_product,
    }

    if termination in ("HorizonReached", "MaxSteps"):
        return BreakdownReport(direction, None, Mechanism.UNDETERMINED, termination, method, summary)

    t_star = estimate_t_star(times, indicator, method) if monotone else None
    if termination == "NaNDetected" or not within_budget:
        mechanism = Mechanism.REGULARITY_SUSPECTED
    elif monotone:
        mechanism = Mechanism.IMMERSIVITY_LOSS
    else:
        mechanism = Mechanism.UNDETERMINED
    if not monotone:
        logger.warning("Ventana final no monótona (%s): no se extrapola T*", direction)
    return BreakdownReport(direction, t_star, mechanism, termination, method, summary)


# ============================================
# 5. COTAS A PRIORI
# ============================================
def a_priori_violations(result: "RunResult", tol: float = A_PRIORI_TOL) -> list[str]:
    """
    Revisa en cada registro: margen de velocidad positivo, cota de Lipschitz
    de los radios y cota de |z|, relativas al primer registro.
    """
    if not result.records:
        return []
    first = result.records[0]
    violations = []
    for rec in result.records:
        elapsed = abs(rec.t - first.t)
        if rec.velocity_margin <= 0.0:
            violations.append(f"t={rec.t:.8g}: margen de velocidad {rec.velocity_margin:.3e} <= 0")
        for j, (r_now, r_start) in enumerate(zip(rec.max_radii, first.max_radii), start=1):
            if r_now > r_start + elapsed + tol:
                violations.append(f"t={rec.t:.8g}: max r_{j} = {r_now:.8g} excede {r_start + elapsed:.8g}")
        if rec.max_z_norm > first.max_z_norm + elapsed + tol:
            violations.append(f"t={rec.t:.8g}: max |z| = {rec.max_z_norm:.8g} excede la cota de Lipschitz")
    return violations


def check_a_priori_bounds(result: "RunResult", tol: float = A_PRIORI_TOL) -> None:
    """Lanza InvariantViolation salvo que la violación coincida con una terminación NonTimelike."""
    violations = a_priori_violations(result, tol)
    if violations and result.termination.value != "NonTimelike":
        raise InvariantViolation("; ".join(violations[:5]))
