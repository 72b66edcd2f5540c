"""
Familias de datos iniciales: clifford, torus_of_revolution y perturbed.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from membranas.config import CliffordFamily, PerturbedFamily, RunConfig, TorusFamily
from membranas.errors import ConfigError
from membranas.geometry import AxisymmetryShape, FieldState, grid

logger = logging.getLogger(__name__)

TARGETS = ("z", "r", "vz", "vr")


@dataclass(frozen=True)
class AppliedPerturbation:
    target: str
    component: int
    mode: int
    amplitude: float
    phase: float
    random: bool = False


def portable_rng(seed: int) -> np.random.Generator:
    """Generador PCG64DXSM sembrado; la secuencia es la misma en toda plataforma."""
    return np.random.Generator(np.random.PCG64DXSM(seed))


def clifford_state(family: CliffordFamily, shape: AxisymmetryShape, n: int) -> FieldState:
    y = grid(n)
    circle = np.vstack([np.cos(y), np.sin(y)])
    ones = np.ones((shape.k, n))
    return FieldState(
        t=0.0,
        z=family.rho0 * circle,
        r=np.asarray(family.radii(shape.k))[:, None] * ones,
        vz=family.rho_dot0 * circle,
        vr=np.asarray(family.radial_speeds(shape.k))[:, None] * ones,
    )


def torus_state(family: TorusFamily, n: int) -> FieldState:
    y = grid(n)
    z = family.b * np.sin(y)[None, :]
    r = (family.R0 + family.b * np.cos(y))[None, :]
    return FieldState(t=0.0, z=z, r=r, vz=np.zeros_like(z), vr=np.zeros_like(r))


def random_perturbations(family: PerturbedFamily, shape: AxisymmetryShape, seed: int) -> list[AppliedPerturbation]:
    rng = portable_rng(seed)
    drawn = []
    for _ in range(family.random_modes):
        target = TARGETS[int(rng.integers(len(TARGETS)))]
        rows = shape.m if target in ("z", "vz") else shape.k
        drawn.append(AppliedPerturbation(
            target=target,
            component=int(rng.integers(1, rows + 1)),
            mode=int(rng.integers(1, family.random_max_mode + 1)),
            amplitude=float(family.random_amplitude * rng.uniform(-1.0, 1.0)),
            phase=float(rng.uniform(0.0, 2.0 * np.pi)),
            random=True,
        ))
    return drawn


def apply_perturbations(state: FieldState, perturbations: list[AppliedPerturbation]) -> FieldState:
    y = state.y
    fields = {name: getattr(state, name).copy() for name in TARGETS}
    for p in perturbations:
        fields[p.target][p.component - 1] += p.amplitude * np.cos(p.mode * y + p.phase)
    return state.replace(**fields)


def check_admissible(state: FieldState) -> None:
    """r > 0 y velocidad total < 1 en t₀; si no, error de configuración."""
    if not np.all(np.isfinite(state.positions)) or not np.all(np.isfinite(state.velocities)):
        raise ConfigError("Los datos iniciales contienen valores no finitos")
    if np.any(state.r <= 0.0):
        raise ConfigError(f"Los datos iniciales tienen radios no positivos (min r = {float(np.min(state.r)):.3e})")
    speed_sq = np.sum(state.velocities ** 2, axis=0)
    if np.any(speed_sq >= 1.0):
        raise ConfigError(f"Los datos iniciales violan la cota de velocidad (max |v|² = {float(np.max(speed_sq)):.6g})")


def build_initial_state(config: RunConfig) -> tuple[FieldState, list[AppliedPerturbation]]:
    """Estado en la malla de n puntos y la lista de perturbaciones efectivamente aplicadas."""
    shape = config.shape.build()
    family = config.initial_data
    base = family.base if isinstance(family, PerturbedFamily) else family

    if isinstance(base, CliffordFamily):
        state = clifford_state(base, shape, config.n)
    else:
        state = torus_state(base, config.n)

    applied: list[AppliedPerturbation] = []
    if isinstance(family, PerturbedFamily):
        applied = [AppliedPerturbation(**p.model_dump()) for p in family.perturbations]
        applied += random_perturbations(family, shape, config.seed)
        state = apply_perturbations(state, applied)
        logger.info("Aplicadas %d perturbaciones (%d aleatorias, semilla %d)",
                    len(applied), family.random_modes, config.seed)

    check_admissible(state)
    return state, applied


def describe(applied: list[AppliedPerturbation]) -> list[dict]:
    return [asdict(p) for p in applied]
