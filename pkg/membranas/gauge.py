"""
Gauge comóvil y de densidad de área
===================================
Prepara datos iniciales que cumplen g_ty = 0 y |g_tt| / √|det g| = C, y mide
la deriva del gauge durante la evolución mediante los residuos

    X = R⁻¹ g_tt + C² g_yy,   Y = g_ty,   R = Π r_i^{2 d_i}.

El gauge se fija una sola vez en t₀; durante la corrida solo se monitorea.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from membranas.errors import (
    DegenerateParametrization,
    InvalidGaugeConstant,
    NonPositiveRadius,
)
from membranas.geometry import (
    AxisymmetryShape,
    FieldState,
    compute_metric,
    radius_power_product,
    spatial_derivative,
)

logger = logging.getLogger(__name__)

DEGENERATE_G_YY = 1e-14
TWO_PI = 2.0 * np.pi
MAX_GAUGE_PASSES = 4


@dataclass(frozen=True)
class GaugeConstant:
    """Constante C del gauge de densidad de área, fija durante toda la corrida."""

    value: float

    def __post_init__(self):
        value = float(self.value)
        if not math.isfinite(value) or value <= 0.0:
            raise InvalidGaugeConstant(f"C debe ser positiva y finita, recibido {self.value}")
        object.__setattr__(self, "value", value)

    def __float__(self) -> float:
        return self.value


def as_gauge_value(C: GaugeConstant | float) -> float:
    return float(C) if isinstance(C, GaugeConstant) else GaugeConstant(C).value


@dataclass(frozen=True)
class GaugeResiduals:
    X: np.ndarray
    Y: np.ndarray
    x_inf: float
    y_inf: float
    x_l2: float
    y_l2: float
    weighted_energy: float

    @property
    def max_norm(self) -> float:
        return max(self.x_inf, self.y_inf)


# ============================================
# 1. PROYECCIÓN COMÓVIL
# ============================================
def comoving_project(state: FieldState) -> FieldState:
    """
    Quita a (vz, vr) su componente tangente a la curva espacial, de modo que
    g_ty = 0. Las posiciones no cambian.
    """
    zy = spatial_derivative(state.z)
    ry = spatial_derivative(state.r)
    g_yy = np.sum(zy ** 2, axis=0) + np.sum(ry ** 2, axis=0)
    if np.any(g_yy < DEGENERATE_G_YY):
        j = int(np.argmin(g_yy))
        raise DegenerateParametrization(f"g_yy = {g_yy[j]:.3e} en y_{j}: parametrización degenerada")

    g_ty = np.sum(state.vz * zy, axis=0) + np.sum(state.vr * ry, axis=0)
    ratio = g_ty / g_yy
    return state.replace(vz=state.vz - ratio * zy, vr=state.vr - ratio * ry)


# ============================================
# 2. REPARAMETRIZACIÓN (GAUGE DE DENSIDAD DE ÁREA)
# ============================================
def _periodic_spline(x: np.ndarray, values: np.ndarray, degree: int):
    """Spline periódico sobre [x_0, x_0 + 2π] a partir de muestras en x (sin repetir el extremo)."""
    x_ext = np.append(x, x[0] + TWO_PI)
    v_ext = np.concatenate([values, values[:1]], axis=0)
    return make_interp_spline(x_ext, v_ext, k=degree, bc_type="periodic")


def _reparametrize_once(
    state: FieldState,
    shape: AxisymmetryShape,
    spline_degree: int,
) -> tuple[FieldState, float, float]:
    """Una pasada de reparametrización; devuelve el estado, C y la dispersión del peso de entrada."""
    metric = compute_metric(state, shape)
    if np.any(metric.g_yy < DEGENERATE_G_YY):
        j = int(np.argmin(metric.g_yy))
        raise DegenerateParametrization(f"g_yy = {metric.g_yy[j]:.3e} en y_{j}")

    weight = radius_power_product(state.r, shape) * np.sqrt(metric.g_yy / np.abs(metric.g_tt))
    C = TWO_PI / (state.h * float(np.sum(weight)))

    y = state.y
    # ỹ(y) por integración del spline del peso, normalizada a período 2π
    antiderivative = _periodic_spline(y, weight, spline_degree).antiderivative()
    total = float(antiderivative(TWO_PI) - antiderivative(0.0))
    y_new_at_old = TWO_PI * (antiderivative(y) - antiderivative(0.0)) / total

    # mapa inverso y(ỹ) = ỹ + s(ỹ), con s periódica
    shift = y - y_new_at_old
    inverse_shift = _periodic_spline(y_new_at_old, shift, spline_degree)
    y_sample = np.mod(y + inverse_shift(y), TWO_PI)

    stacked = np.vstack([state.z, state.r, state.vz, state.vr])
    resampled = _periodic_spline(y, stacked.T, spline_degree)(y_sample).T

    m, k = state.z.shape[0], state.r.shape[0]
    z, r = resampled[:m], resampled[m:m + k]
    vz, vr = resampled[m + k:2 * m + k], resampled[2 * m + k:]
    if np.any(r <= 0.0):
        raise NonPositiveRadius("El remuestreo produjo radios no positivos")
    return state.replace(z=z, r=r, vz=vz, vr=vr), C, relative_spread(weight)


def fix_parametrization(
    state: FieldState,
    shape: AxisymmetryShape,
    *,
    spline_degree: int = 5,
    max_passes: int = MAX_GAUGE_PASSES,
) -> tuple[FieldState, GaugeConstant]:
    """
    Reparametriza y para que |g_tt| / √|det g| = C sea uniforme.

    dỹ/dy = C · Π r_i^{d_i} · √(g_yy / |g_tt|), con C elegida para que ỹ tenga
    período 2π. Todos los campos se remuestrean en la malla equiespaciada de ỹ
    con splines periódicos del mapa inverso.

    Una pasada deja el error de interpolación del peso; la reparametrización se
    repite mientras el residuo discreto max|X| siga bajando.
    """
    if np.any(state.r <= 0.0):
        raise NonPositiveRadius("fix_parametrization requiere radios positivos")

    best_state, best_C, best_x = None, None, math.inf
    current = state
    for attempt in range(1, max_passes + 1):
        candidate, C, weight_spread = _reparametrize_once(current, shape, spline_degree)
        x_inf = gauge_residuals(candidate, C, shape).x_inf
        logger.debug("Pasada %d del gauge: C=%.12g, dispersión del peso %.3e, max|X|=%.3e",
                     attempt, C, weight_spread, x_inf)
        if best_state is not None and x_inf >= best_x:
            break
        best_state, best_C, best_x = candidate, C, x_inf
        current = candidate

    return best_state, GaugeConstant(best_C)


# ============================================
# 3. RESIDUOS X / Y
# ============================================
def gauge_residuals(state: FieldState, C: GaugeConstant | float, shape: AxisymmetryShape) -> GaugeResiduals:
    """Residuos X, Y con normas máximo y L² discreta, más la energía ponderada."""
    c = as_gauge_value(C)
    metric = compute_metric(state, shape, require_timelike=False)
    R = radius_power_product(state.r, shape) ** 2
    X = metric.g_tt / R + c ** 2 * metric.g_yy
    Y = metric.g_ty
    h = state.h
    energy = h * float(np.sum(Y ** 2 + R * X ** 2 / (4.0 * c ** 2)))
    return GaugeResiduals(
        X=X,
        Y=Y,
        x_inf=float(np.max(np.abs(X))),
        y_inf=float(np.max(np.abs(Y))),
        x_l2=float(np.sqrt(h * np.sum(X ** 2))),
        y_l2=float(np.sqrt(h * np.sum(Y ** 2))),
        weighted_energy=energy,
    )


def relative_spread(values: np.ndarray) -> float:
    """(max - min) / |media|."""
    values = np.asarray(values, dtype=float)
    return float((np.max(values) - np.min(values)) / abs(np.mean(values)))
