"""
Oráculo homogéneo (reducción tipo Clifford)
===========================================
Con z = ρ(t)(cos y, sin y) y radios r_j = a_j(t) constantes en y, el sistema
reducido se convierte en las EDOs

    ρ̈   = -C² ρ Π a_i^{2 d_i}
    ä_j = -d_j (1 - ρ̇² - Σ ȧ_i²) / a_j

que se integran con alta precisión y sirven de verdad de referencia para la
EDP. Las constantes de referencia se fijan en un archivo dorado de texto plano
(una constante por línea: nombre, valor, tolerancia).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from membranas.errors import InvalidGaugeConstant, NonPositiveRadius, NonTimelike
from membranas.gauge import GaugeConstant
from membranas.geometry import AxisymmetryShape, FieldState, compute_metric, grid, radius_power_product

logger = logging.getLogger(__name__)

COLLAPSE_FLOOR = 1e-8
DEFAULT_HORIZON = 50.0
GAUGE_MATCH_RTOL = 1e-9


# ============================================
# 1. ESTADO HOMOGÉNEO
# ============================================
def _as_tuple(values: float | Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(values))


@dataclass(frozen=True)
class CliffordState:
    t: float
    rho: float
    a: tuple[float, ...]
    rho_dot: float
    a_dot: tuple[float, ...]
    C: float
    d: tuple[int, ...] = (1,)

    def __post_init__(self):
        object.__setattr__(self, "a", _as_tuple(self.a))
        object.__setattr__(self, "a_dot", _as_tuple(self.a_dot))
        object.__setattr__(self, "d", tuple(int(x) for x in self.d))
        if not (len(self.a) == len(self.a_dot) == len(self.d)):
            raise ValueError("a, a_dot y d deben tener la misma longitud k")

    @classmethod
    def gauged(
        cls,
        rho: float,
        a: float | Sequence[float],
        rho_dot: float = 0.0,
        a_dot: float | Sequence[float] = 0.0,
        d: Sequence[int] = (1,),
        t: float = 0.0,
    ) -> "CliffordState":
        """Estado con C = √|g_tt| / (ρ Π a_j^{d_j}), la constante del gauge de densidad de área."""
        a = _as_tuple(a)
        a_dot = _as_tuple(a_dot) if np.ndim(a_dot) else tuple(float(a_dot) for _ in a)
        abs_g_tt = 1.0 - rho_dot ** 2 - sum(v ** 2 for v in a_dot)
        if abs_g_tt <= 0.0:
            raise NonTimelike(f"ρ̇² + Σȧ² = {1.0 - abs_g_tt:.6g} >= 1")
        if rho <= 0.0 or min(a) <= 0.0:
            raise NonPositiveRadius("ρ y a_j deben ser positivos")
        C = math.sqrt(abs_g_tt) / (rho * math.prod(aj ** dj for aj, dj in zip(a, d)))
        return cls(t=t, rho=rho, a=a, rho_dot=rho_dot, a_dot=a_dot, C=C, d=tuple(d))

    @property
    def shape(self) -> AxisymmetryShape:
        return AxisymmetryShape(d=self.d, m=2)

    @property
    def abs_g_tt(self) -> float:
        return 1.0 - self.rho_dot ** 2 - sum(v ** 2 for v in self.a_dot)

    def validate(self) -> None:
        if self.rho <= 0.0 or min(self.a) <= 0.0:
            raise NonPositiveRadius(f"ρ={self.rho:.3e}, a={self.a}")
        if self.abs_g_tt <= 0.0:
            raise NonTimelike(f"|g_tt| = {self.abs_g_tt:.3e} <= 0")

    @property
    def gauge_constant(self) -> float:
        """√|g_tt| / (ρ Π a_j^{d_j}) evaluada en este estado."""
        return math.sqrt(max(self.abs_g_tt, 0.0)) / (self.rho * math.prod(aj ** dj for aj, dj in zip(self.a, self.d)))

    def check_gauge(self, rtol: float = GAUGE_MATCH_RTOL) -> None:
        """C debe coincidir con la constante del gauge de densidad de área del estado."""
        if not math.isclose(self.C, self.gauge_constant, rel_tol=rtol):
            raise InvalidGaugeConstant(
                f"C={self.C:.12g} no es la constante del gauge del estado ({self.gauge_constant:.12g})"
            )

    def as_vector(self) -> np.ndarray:
        return np.array([self.rho, *self.a, self.rho_dot, *self.a_dot])

    def with_vector(self, t: float, vector: np.ndarray) -> "CliffordState":
        k = len(self.a)
        return CliffordState(t=t, rho=float(vector[0]), a=vector[1:1 + k], rho_dot=float(vector[1 + k]),
                             a_dot=vector[2 + k:], C=self.C, d=self.d)


class CliffordAcceleration(NamedTuple):
    rho: float
    a: np.ndarray


# ============================================
# 2. LADO DERECHO E INTEGRACIÓN
# ============================================
def _rhs_vector(C: float, d: np.ndarray, vector: np.ndarray) -> np.ndarray:
    k = d.size
    rho, a = vector[0], vector[1:1 + k]
    rho_dot, a_dot = vector[1 + k], vector[2 + k:]
    abs_g_tt = 1.0 - rho_dot ** 2 - np.sum(a_dot ** 2)
    rho_ddot = -C ** 2 * rho * np.prod(a ** (2.0 * d))
    a_ddot = -d * abs_g_tt / a
    return np.concatenate([[rho_dot], a_dot, [rho_ddot], a_ddot])


def clifford_rhs(s: CliffordState) -> CliffordAcceleration:
    """(ρ̈, ä) del estado homogéneo."""
    s.validate()
    derivative = _rhs_vector(s.C, np.asarray(s.d, dtype=float), s.as_vector())
    k = len(s.a)
    return CliffordAcceleration(rho=float(derivative[1 + k]), a=derivative[2 + k:])


@dataclass
class OracleTrajectory:
    t: np.ndarray
    states: np.ndarray
    collapse_time: Optional[float]
    stop_reason: str
    initial: CliffordState
    _solution: object = field(default=None, repr=False)

    def state_at(self, t: float) -> CliffordState:
        """Interpolación densa de la trayectoria."""
        return self.initial.with_vector(t, self._solution.sol(t))


def collapse_quantity(C: float, d: np.ndarray, vector: np.ndarray) -> float:
    """
    min(ρ, a_j, |g_tt|) con |g_tt| en su forma de gauge C² ρ² Π a^{2d}.

    Coincide con 1 - ρ̇² - Σȧ² cuando C es la constante del gauge del estado
    inicial, lo que clifford_integrate verifica.
    """
    k = d.size
    rho, a = vector[0], vector[1:1 + k]
    abs_g_tt = C ** 2 * rho ** 2 * np.prod(a ** (2.0 * d))
    return float(min(rho, float(np.min(a)), abs_g_tt))


def clifford_integrate(
    s0: CliffordState,
    tol: float = 1e-12,
    *,
    horizon: float = DEFAULT_HORIZON,
    backward: bool = False,
    floor: float = COLLAPSE_FLOOR,
) -> OracleTrajectory:
    """
    Integra la reducción con DOP853 (rtol = atol = tol) hasta que la cantidad
    de colapso cae por debajo de `floor` o se alcanza el horizonte. El instante
    de colapso se localiza con el buscador de raíces de eventos de solve_ivp.
    """
    s0.validate()
    s0.check_gauge()
    d = np.asarray(s0.d, dtype=float)

    def event(t, vector):
        return collapse_quantity(s0.C, d, vector) - floor

    event.terminal = True
    event.direction = -1

    t_final = s0.t - horizon if backward else s0.t + horizon
    solution = solve_ivp(
        lambda t, v: _rhs_vector(s0.C, d, v),
        (s0.t, t_final),
        s0.as_vector(),
        method="DOP853",
        rtol=tol,
        atol=tol,
        events=event,
        dense_output=True,
    )
    if solution.status == -1:
        logger.warning("La integración del oráculo falló: %s", solution.message)

    collapse_time = float(solution.t_events[0][0]) if solution.t_events[0].size else None
    stop_reason = "collapse" if collapse_time is not None else ("horizon" if solution.success else "failure")
    logger.info("Oráculo %s: %s en t=%.12g", "hacia atrás" if backward else "hacia adelante",
                stop_reason, solution.t[-1])
    return OracleTrajectory(
        t=solution.t,
        states=solution.y.T,
        collapse_time=collapse_time,
        stop_reason=stop_reason,
        initial=s0,
        _solution=solution,
    )


# ============================================
# 3. ELEVACIÓN A LA MALLA
# ============================================
def lift_to_grid(s: CliffordState, n: int) -> tuple[FieldState, GaugeConstant]:
    """
    FieldState homogéneo en la malla de n puntos y su constante de gauge.
    La constante se toma de la métrica discreta, de modo que X e Y quedan a
    nivel de redondeo.
    """
    s.validate()
    y = grid(n)
    circle = np.vstack([np.cos(y), np.sin(y)])
    ones = np.ones((len(s.a), n))
    state = FieldState(
        t=s.t,
        z=s.rho * circle,
        r=np.asarray(s.a)[:, None] * ones,
        vz=s.rho_dot * circle,
        vr=np.asarray(s.a_dot)[:, None] * ones,
    )
    shape = s.shape
    metric = compute_metric(state, shape)
    R = radius_power_product(state.r, shape) ** 2
    C = float(np.mean(np.sqrt(np.abs(metric.g_tt) / (metric.g_yy * R))))

    continuum = math.sqrt(s.abs_g_tt) / (s.rho * math.prod(aj ** dj for aj, dj in zip(s.a, s.d)))
    if abs(s.C - continuum) > 1e-12 * continuum:
        logger.warning("El estado trae C=%.12g pero su gauge es %.12g; se usa el del gauge", s.C, continuum)
    return state, GaugeConstant(C)


def radii_of_grid_state(state: FieldState) -> tuple[float, np.ndarray]:
    """Recupera (ρ, a) medios de un estado de malla homogéneo."""
    rho = float(np.mean(np.linalg.norm(state.z, axis=0)))
    return rho, np.mean(state.r, axis=1)


# ============================================
# 4. ARCHIVO DORADO
# ============================================
@dataclass(frozen=True)
class GoldenConstant:
    name: str
    value: float
    tolerance: float

    def matches(self, value: float) -> bool:
        return abs(value - self.value) <= self.tolerance


def write_golden(path: str | Path, constants: Sequence[GoldenConstant]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# nombre valor tolerancia"]
    lines += [f"{c.name} {c.value!r} {c.tolerance!r}" for c in constants]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_golden(path: str | Path) -> dict[str, GoldenConstant]:
    constants = {}
    for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{number}: se esperaban 'nombre valor tolerancia'")
        name, value, tolerance = parts
        constants[name] = GoldenConstant(name, float(value), float(tolerance))
    return constants


GOLDEN_TOLERANCE = 1e-9


def collapse_constants(s0: CliffordState, tol: float = 1e-12, prefix: str = "clifford") -> list[GoldenConstant]:
    """Instantes de colapso en ambos sentidos como constantes fijables."""
    constants = []
    for label, backward in (("forward", False), ("backward", True)):
        collapse_time = clifford_integrate(s0, tol, backward=backward).collapse_time
        if collapse_time is not None:
            constants.append(GoldenConstant(f"{prefix}_collapse_{label}", collapse_time, GOLDEN_TOLERANCE))
    return constants
