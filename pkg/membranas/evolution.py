"""
Evolución temporal del sistema reducido
=======================================
Método de líneas: derivadas espaciales de cuarto orden y Runge-Kutta clásico
de cuarto orden con paso controlado por CFL. Incluye también el sistema
previo al gauge (coeficientes calculados desde la métrica) para validación
cruzada; ese lado no se usa dentro del integrador.

La corrida termina con la primera condición de la taxonomía Termination;
los fallos numéricos se reportan como datos, no como excepciones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt

from membranas.diagnostics import DiagnosticsRecord, compute_record
from membranas.errors import (
    DegenerateParametrization,
    DtFloorReached,
    GaugeNotSatisfied,
    NaNDetected,
    NonPositiveRadius,
    NonTimelike,
)
from membranas.gauge import DEGENERATE_G_YY, GaugeConstant, as_gauge_value, gauge_residuals
from membranas.geometry import (
    AxisymmetryShape,
    FieldState,
    compute_metric,
    g_tt_from_velocities,
    immersivity_indicator,
    radius_power_product,
    spatial_derivative,
)

logger = logging.getLogger(__name__)

Accelerations = tuple[np.ndarray, np.ndarray]
RhsFunction = Callable[[FieldState, GaugeConstant, AxisymmetryShape], Accelerations]


# ============================================
# 1. PARÁMETROS Y RESULTADOS
# ============================================
class SolverParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    cfl: float = Field(0.4, gt=0.0, le=1.0)
    t_end: PositiveFloat = 10.0
    indicator_floor: PositiveFloat = 1e-3
    radius_floor: PositiveFloat = 1e-4
    dt_floor: PositiveFloat = 1e-12
    record_every: PositiveInt = 1
    max_steps: PositiveInt = 1_000_000
    light_crossing_cap: bool = True
    initial_residual_tol: PositiveFloat = 1e-3
    keep_snapshots: bool = False
    rhs: Literal["reduced", "general"] = "reduced"


class Termination(str, Enum):
    HORIZON_REACHED = "HorizonReached"
    INDICATOR_FLOOR = "IndicatorFloor"
    RADIUS_FLOOR = "RadiusFloor"
    DT_FLOOR = "DtFloor"
    NON_TIMELIKE = "NonTimelike"
    NAN_DETECTED = "NaNDetected"
    MAX_STEPS = "MaxSteps"


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class RunResult:
    termination: Termination
    final_state: Optional[FieldState]
    records: list[DiagnosticsRecord]
    direction: Direction
    t0: float = 0.0
    steps: int = 0
    snapshots: list[FieldState] = field(default_factory=list)

    @property
    def final_time(self) -> float:
        return self.records[-1].t if self.records else self.t0


# ============================================
# 2. LADOS DERECHOS
# ============================================
def _abs_g_tt(state: FieldState) -> np.ndarray:
    g_tt = g_tt_from_velocities(state)
    if np.any(g_tt >= 0.0):
        j = int(np.argmax(g_tt))
        raise NonTimelike(f"g_tt = {g_tt[j]:.3e} >= 0 en y_{j}", index=j, value=float(g_tt[j]))
    return -g_tt


def rhs_reduced(state: FieldState, C: GaugeConstant | float, shape: AxisymmetryShape) -> Accelerations:
    """
    Aceleraciones del sistema en gauge fijo:
        ∂²_tt z   = C² ∂_y(R ∂_y z)
        ∂²_tt r_j = C² ∂_y(R ∂_y r_j) - d_j |g_tt| / r_j
    con el flujo R·∂_y u derivado en forma de divergencia.
    """
    if np.any(state.r <= 0.0):
        raise NonPositiveRadius(f"Radio no positivo en t={state.t:.6g}")
    c2 = as_gauge_value(C) ** 2
    abs_g_tt = _abs_g_tt(state)
    R = radius_power_product(state.r, shape) ** 2

    acc = c2 * spatial_derivative(R * spatial_derivative(state.positions))
    m = state.z.shape[0]
    acc_z, acc_r = acc[:m], acc[m:]
    acc_r = acc_r - shape.d_column * abs_g_tt / state.r
    return acc_z, acc_r


def rhs_general(state: FieldState, shape: AxisymmetryShape) -> Accelerations:
    """
    Aceleraciones del sistema con parametrización arbitraria: coeficiente
    |g_tt| / √|det g| y flujo √|det g| / g_yy calculados desde la métrica.
    """
    if np.any(state.r <= 0.0):
        raise NonPositiveRadius(f"Radio no positivo en t={state.t:.6g}")
    metric = compute_metric(state, shape)
    if np.any(metric.g_yy < DEGENERATE_G_YY):
        raise DegenerateParametrization("rhs_general requiere g_yy > 0")

    abs_g_tt = np.abs(metric.g_tt)
    coefficient = abs_g_tt / metric.sqrt_det
    flux_weight = metric.sqrt_det / metric.g_yy

    acc = coefficient * spatial_derivative(flux_weight * spatial_derivative(state.positions))
    m = state.z.shape[0]
    acc_z, acc_r = acc[:m], acc[m:]
    acc_r = acc_r - shape.d_column * abs_g_tt / state.r
    return acc_z, acc_r


# ============================================
# 3. PASO TEMPORAL
# ============================================
def rhs_general_gauged(state: FieldState, C: GaugeConstant | float, shape: AxisymmetryShape) -> Accelerations:
    """rhs_general con la firma de rhs_reduced; C no interviene."""
    return rhs_general(state, shape)


RHS_FUNCTIONS: dict[str, RhsFunction] = {"reduced": rhs_reduced, "general": rhs_general_gauged}


def wave_speed(state: FieldState, C: GaugeConstant | float, shape: AxisymmetryShape) -> np.ndarray:
    """Velocidad característica C · Π r_i^{d_i} de la parte principal."""
    return as_gauge_value(C) * radius_power_product(state.r, shape)


def cfl_dt(state: FieldState, C: GaugeConstant | float, shape: AxisymmetryShape, params: SolverParams) -> float:
    """dt = cfl · h / max_y(C Π r_i^{d_i}); opcionalmente acotado por cfl · min r."""
    if np.any(state.r <= 0.0):
        raise NonPositiveRadius("cfl_dt requiere radios positivos")
    dt = params.cfl * state.h / float(np.max(wave_speed(state, C, shape)))
    if params.light_crossing_cap:
        dt = min(dt, params.cfl * float(np.min(state.r)))
    if dt < params.dt_floor:
        raise DtFloorReached(f"dt = {dt:.3e} < dt_floor = {params.dt_floor:.3e}", dt=dt)
    return dt


def step_rk4(
    state: FieldState,
    dt: float,
    C: GaugeConstant | float,
    shape: AxisymmetryShape,
    rhs: RhsFunction = rhs_reduced,
) -> FieldState:
    """Un paso de RK4 clásico del sistema de primer orden (posiciones, velocidades)."""
    m = state.z.shape[0]
    q0, v0 = state.positions, state.velocities

    def acceleration(t: float, q: np.ndarray, v: np.ndarray) -> np.ndarray:
        acc_z, acc_r = rhs(FieldState.from_stacked(t, q, v, m), C, shape)
        return np.vstack([acc_z, acc_r])

    t0 = state.t
    k1q, k1v = v0, acceleration(t0, q0, v0)
    q2, v2 = q0 + 0.5 * dt * k1q, v0 + 0.5 * dt * k1v
    k2q, k2v = v2, acceleration(t0 + 0.5 * dt, q2, v2)
    q3, v3 = q0 + 0.5 * dt * k2q, v0 + 0.5 * dt * k2v
    k3q, k3v = v3, acceleration(t0 + 0.5 * dt, q3, v3)
    q4, v4 = q0 + dt * k3q, v0 + dt * k3v
    k4q, k4v = v4, acceleration(t0 + dt, q4, v4)

    q_new = q0 + (dt / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
    v_new = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    if not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(v_new))):
        raise NaNDetected(f"Valores no finitos tras el paso en t={t0:.6g}, dt={dt:.3e}")
    return FieldState.from_stacked(t0 + dt, q_new, v_new, m)


# ============================================
# 4. BUCLE DE EVOLUCIÓN
# ============================================
def evolve(
    initial: FieldState,
    C: GaugeConstant | float,
    shape: AxisymmetryShape,
    params: SolverParams,
    direction: Direction = Direction.FORWARD,
) -> RunResult:
    """
    Integra desde `initial` en la dirección pedida hasta la primera condición
    de terminación. La evolución hacia el pasado es la evolución hacia el
    futuro del estado reflejado en el tiempo.
    """
    direction = Direction(direction)
    initial.validate()
    compute_metric(initial, shape)
    residuals = gauge_residuals(initial, C, shape)
    if residuals.max_norm > params.initial_residual_tol:
        raise GaugeNotSatisfied(
            f"Datos iniciales fuera de gauge: max(|X|, |Y|) = {residuals.max_norm:.3e} "
            f"> {params.initial_residual_tol:.3e}"
        )

    def physical(s: FieldState) -> FieldState:
        return s if direction is Direction.FORWARD else s.time_reflected()

    rhs = RHS_FUNCTIONS[params.rhs]
    t0 = initial.t
    state = physical(initial)
    records = [compute_record(initial, C, shape)]
    snapshots = [initial] if params.keep_snapshots else []
    last_recorded_step = 0
    steps = 0

    def finish(termination: Termination, final: FieldState) -> RunResult:
        if last_recorded_step != steps:
            records.append(compute_record(physical(final), C, shape))
            if params.keep_snapshots:
                snapshots.append(physical(final))
        logger.info("Corrida %s terminada: %s en t=%.8g tras %d pasos",
                    direction.value, termination.value, records[-1].t, steps)
        return RunResult(
            termination=termination,
            final_state=physical(final),
            records=records,
            direction=direction,
            t0=t0,
            steps=steps,
            snapshots=snapshots,
        )

    logger.info("Iniciando corrida %s: n=%d, C=%.10g, t_end=%g, lado derecho %s",
                direction.value, initial.n, as_gauge_value(C), params.t_end, params.rhs)
    start = state.t
    horizon_tol = 1e-12 * max(1.0, params.t_end)

    while True:
        _, min_indicator = immersivity_indicator(state, compute_metric(state, shape), shape)
        if min_indicator <= params.indicator_floor:
            return finish(Termination.INDICATOR_FLOOR, state)
        if float(np.min(state.r)) <= params.radius_floor:
            return finish(Termination.RADIUS_FLOOR, state)
        remaining = params.t_end - (state.t - start)
        if remaining <= horizon_tol:
            return finish(Termination.HORIZON_REACHED, state)
        if steps >= params.max_steps:
            return finish(Termination.MAX_STEPS, state)

        try:
            dt = min(cfl_dt(state, C, shape, params), remaining)
        except DtFloorReached as exc:
            logger.warning("%s", exc)
            return finish(Termination.DT_FLOOR, state)

        try:
            candidate = step_rk4(state, dt, C, shape, rhs)
            candidate.validate()
            compute_metric(candidate, shape)
        except NonTimelike as exc:
            logger.warning("Pérdida de la condición temporal: %s", exc)
            return finish(Termination.NON_TIMELIKE, state)
        except NaNDetected as exc:
            logger.warning("%s", exc)
            return finish(Termination.NAN_DETECTED, state)
        except NonPositiveRadius as exc:
            logger.warning("%s", exc)
            return finish(Termination.RADIUS_FLOOR, state)

        state = candidate
        steps += 1
        if steps % params.record_every == 0:
            record = compute_record(physical(state), C, shape)
            records.append(record)
            if params.keep_snapshots:
                snapshots.append(physical(state))
            last_recorded_step = steps
            logger.debug("t=%.6g min_indicator=%.4e", record.t, record.min_indicator)
