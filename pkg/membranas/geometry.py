"""
Geometría de membranas axisimétricas
====================================
Ansatz de simetría, representación discreta de la generatriz y cálculos
puntuales de la métrica inducida (producto deformado), del volumen y del
indicador de inmersión.

Todas las funciones son puras; las reducciones sobre la malla se hacen en
orden de índice ascendente.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from membranas.errors import (
    DimensionMismatch,
    InvalidGrid,
    InvalidShape,
    NaNDetected,
    NonPositiveRadius,
    NonTimelike,
)

MIN_GRID_SIZE = 8
UNIT_NORM_TOL = 1e-12


# ============================================
# 1. TIPOS DEL DOMINIO
# ============================================
@dataclass(frozen=True)
class AxisymmetryShape:
    """
    Datos discretos de simetría: dimensiones d_1..d_k de las esferas y
    dimensión m del factor z.
    """

    d: tuple[int, ...]
    m: int

    def __post_init__(self):
        object.__setattr__(self, "d", tuple(int(x) for x in self.d))
        if len(self.d) < 1:
            raise InvalidShape("Se requiere al menos un factor esférico (k >= 1)")
        if any(dj < 1 for dj in self.d):
            raise InvalidShape(f"Todas las dimensiones d_j deben ser >= 1, recibido {self.d}")
        if int(self.m) < 1:
            raise InvalidShape(f"La dimensión de z debe ser >= 1, recibido m={self.m}")

    @property
    def k(self) -> int:
        return len(self.d)

    @property
    def dtot(self) -> int:
        """Dimensión espacial 1 + Σ d_j."""
        return 1 + sum(self.d)

    @property
    def ambient_dim(self) -> int:
        """N = m + Σ (d_j + 1)."""
        return self.m + sum(self.d) + self.k

    @property
    def d_column(self) -> np.ndarray:
        """Dimensiones como columna (k, 1) para operar contra arreglos (k, n)."""
        return np.asarray(self.d, dtype=float)[:, None]


@dataclass(frozen=True)
class FieldState:
    """
    Generatriz y sus velocidades muestreadas en la malla periódica
    y_j = 2πj/n en el tiempo t.
    """

    t: float
    z: np.ndarray
    r: np.ndarray
    vz: np.ndarray
    vr: np.ndarray

    def __post_init__(self):
        for name in ("z", "r", "vz", "vr"):
            arr = np.atleast_2d(np.asarray(getattr(self, name), dtype=float))
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t", float(self.t))
        if self.z.shape != self.vz.shape or self.r.shape != self.vr.shape:
            raise DimensionMismatch("Posiciones y velocidades deben tener la misma forma")
        if self.z.shape[1] != self.r.shape[1]:
            raise DimensionMismatch("z y r deben muestrearse en la misma malla")
        check_grid_size(self.n)

    @property
    def n(self) -> int:
        return self.r.shape[1]

    @property
    def h(self) -> float:
        return 2.0 * np.pi / self.n

    @property
    def y(self) -> np.ndarray:
        return grid(self.n)

    @property
    def positions(self) -> np.ndarray:
        """Filas de z seguidas de las filas de r, forma (m + k, n)."""
        return np.vstack([self.z, self.r])

    @property
    def velocities(self) -> np.ndarray:
        return np.vstack([self.vz, self.vr])

    @classmethod
    def from_stacked(cls, t: float, positions: np.ndarray, velocities: np.ndarray, m: int) -> "FieldState":
        return cls(t=t, z=positions[:m], r=positions[m:], vz=velocities[:m], vr=velocities[m:])

    def replace(self, **changes) -> "FieldState":
        return dataclasses.replace(self, **changes)

    def time_reflected(self) -> "FieldState":
        """Estado bajo t -> -t: mismas posiciones, velocidades con signo opuesto."""
        return self.replace(t=-self.t, vz=-self.vz, vr=-self.vr)

    def validate(self) -> None:
        """Comprueba finitud y radios positivos."""
        for name in ("z", "r", "vz", "vr"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise NaNDetected(f"Valores no finitos en {name} (t={self.t:.6g})")
        if np.any(self.r <= 0.0):
            i, j = np.unravel_index(int(np.argmin(self.r)), self.r.shape)
            raise NonPositiveRadius(f"r_{i + 1}(y_{j}) = {self.r[i, j]:.3e} <= 0 (t={self.t:.6g})")


@dataclass(frozen=True)
class MetricField:
    """Coeficientes de la métrica inducida en cada punto de la malla."""

    g_tt: np.ndarray
    g_yy: np.ndarray
    g_ty: np.ndarray
    sqrt_det: np.ndarray


# ============================================
# 2. MALLA Y DERIVADA ESPACIAL
# ============================================
def check_grid_size(n: int) -> None:
    if n < MIN_GRID_SIZE or n % 2:
        raise InvalidGrid(f"El tamaño de malla debe ser par y >= {MIN_GRID_SIZE}, recibido n={n}")


def grid(n: int) -> np.ndarray:
    check_grid_size(n)
    return 2.0 * np.pi * np.arange(n) / n


def spatial_derivative(field: np.ndarray) -> np.ndarray:
    """
    Derivada periódica centrada de cuarto orden sobre el último eje:
    (8 (f_{j+1} - f_{j-1}) - (f_{j+2} - f_{j-2})) / (12 h).
    """
    f = np.asarray(field, dtype=float)
    n = f.shape[-1]
    check_grid_size(n)
    h = 2.0 * np.pi / n
    near = np.roll(f, -1, axis=-1) - np.roll(f, 1, axis=-1)
    far = np.roll(f, -2, axis=-1) - np.roll(f, 2, axis=-1)
    return (8.0 * near - far) / (12.0 * h)


def stencil_symbol(n: int, mode: int = 1) -> float:
    """
    Factor λ tal que spatial_derivative(e^{i·mode·y}) = i·mode·λ·e^{i·mode·y}.
    Para modo 1: λ = (8 sin h - sin 2h) / (6h).
    """
    h = 2.0 * np.pi / n
    kh = mode * h
    return float((8.0 * np.sin(kh) - np.sin(2.0 * kh)) / (6.0 * kh))


# ============================================
# 3. MÉTRICA INDUCIDA
# ============================================
def radius_power_product(r: np.ndarray, shape: AxisymmetryShape) -> np.ndarray:
    """Π r_i^{d_i} en cada punto; su cuadrado es el peso R del sistema reducido."""
    return np.prod(np.asarray(r, dtype=float) ** shape.d_column, axis=0)


def g_tt_from_velocities(state: FieldState) -> np.ndarray:
    return -1.0 + np.sum(state.vz ** 2, axis=0) + np.sum(state.vr ** 2, axis=0)


def compute_metric(state: FieldState, shape: AxisymmetryShape, *, require_timelike: bool = True) -> MetricField:
    """
    Coeficientes g_tt, g_yy, g_ty y √|det g| de la métrica en forma de
    producto deformado. Lanza NonTimelike si g_tt >= 0 en algún punto.
    """
    zy = spatial_derivative(state.z)
    ry = spatial_derivative(state.r)

    g_tt = g_tt_from_velocities(state)
    if require_timelike and np.any(g_tt >= 0.0):
        j = int(np.argmax(g_tt))
        raise NonTimelike(
            f"g_tt = {g_tt[j]:.3e} >= 0 en y_{j} (t={state.t:.6g})", index=j, value=float(g_tt[j])
        )

    g_yy = np.sum(zy ** 2, axis=0) + np.sum(ry ** 2, axis=0)
    g_ty = np.sum(state.vz * zy, axis=0) + np.sum(state.vr * ry, axis=0)
    sqrt_det = np.sqrt(np.abs(g_tt) * g_yy) * radius_power_product(state.r, shape)
    return MetricField(g_tt=g_tt, g_yy=g_yy, g_ty=g_ty, sqrt_det=sqrt_det)


def immersivity_indicator(state: FieldState, metric: MetricField, shape: AxisymmetryShape) -> tuple[np.ndarray, float]:
    """|g_tt| · r_1 ⋯ r_k en cada punto y su mínimo sobre la malla."""
    if state.r.shape[0] != shape.k:
        raise DimensionMismatch(f"El estado tiene {state.r.shape[0]} radios, la forma pide k={shape.k}")
    values = np.abs(metric.g_tt) * np.prod(state.r, axis=0)
    return values, float(np.min(values))


# ============================================
# 4. RECONSTRUCCIÓN DEL EMBEBIMIENTO
# ============================================
def reconstruct_embedding(
    state: FieldState,
    shape: AxisymmetryShape,
    sphere_samples: Sequence[np.ndarray],
) -> np.ndarray:
    """
    Nube de puntos (t, z(y_j), r_1(y_j) θ_1, ..., r_k(y_j) θ_k) en R^{1+N}
    para cada punto de la malla y cada combinación de muestras de las esferas.
    Solo para exportación y visualización.
    """
    if len(sphere_samples) != shape.k:
        raise DimensionMismatch(f"Se esperaban muestras para {shape.k} esferas, recibidas {len(sphere_samples)}")

    blocks = []
    for j, (dj, samples) in enumerate(zip(shape.d, sphere_samples), start=1):
        thetas = np.atleast_2d(np.asarray(samples, dtype=float))
        if thetas.shape[1] != dj + 1:
            raise DimensionMismatch(f"Las muestras de S^{dj} (factor {j}) deben tener dimensión {dj + 1}")
        norms = np.linalg.norm(thetas, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise DimensionMismatch(f"Muestras no unitarias en el factor {j}: normas {norms}")
        blocks.append(thetas)

    points = []
    for col in range(state.n):
        head = [state.t, *state.z[:, col]]
        for combo in itertools.product(*blocks):
            tail = [state.r[i, col] * theta for i, theta in enumerate(combo)]
            points.append(np.concatenate([head, *tail]))
    return np.asarray(points)
