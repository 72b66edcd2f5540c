"""
Configuración de corridas
=========================
Esquema pydantic de los archivos YAML de corrida y carga con posiciones de
error explícitas (ruta, línea y columna).

Ejemplo mínimo:

    shape: {d: [1], m: 2}
    initial_data: {family: clifford, rho0: 1.0, a0: 1.0}
    n: 256
    solver: {t_end: 3.0}
"""

from __future__ import annotations

import copy
import hashlib
import io
import os
from pathlib import Path
from typing import Annotated, Any, Literal, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, ValidationError, field_validator, model_validator
from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from membranas.errors import ConfigError
from membranas.evolution import Direction, SolverParams
from membranas.geometry import MIN_GRID_SIZE, AxisymmetryShape

DEFAULT_OUTPUT_ROOT = "salidas"


def output_root() -> Path:
    """Raíz de salidas; MEMBRANAS_OUTPUT_ROOT la sobrescribe."""
    return Path(os.getenv("MEMBRANAS_OUTPUT_ROOT", DEFAULT_OUTPUT_ROOT))


# ============================================
# 1. FORMA Y FAMILIAS DE DATOS INICIALES
# ============================================
class ShapeConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: list[int] = Field(default_factory=lambda: [1], min_length=1)
    m: int = Field(2, ge=1)
    k: Optional[int] = None

    @model_validator(mode="after")
    def _check_k(self):
        if any(dj < 1 for dj in self.d):
            raise ValueError("todas las dimensiones d_j deben ser >= 1")
        if self.k is not None and self.k != len(self.d):
            raise ValueError(f"k={self.k} no coincide con len(d)={len(self.d)}")
        return self

    def build(self) -> AxisymmetryShape:
        return AxisymmetryShape(d=tuple(self.d), m=self.m)


def _as_list(value: float | list[float]) -> list[float]:
    return list(value) if isinstance(value, list) else [value]


class CliffordFamily(BaseModel):
    """z = ρ₀(cos y, sin y), r_j = a₀_j; velocidades ρ̇₀, ȧ₀_j."""

    model_config = ConfigDict(extra="forbid")

    family: Literal["clifford"] = "clifford"
    rho0: PositiveFloat
    a0: Union[PositiveFloat, list[PositiveFloat]]
    rho_dot0: float = 0.0
    a_dot0: Union[float, list[float]] = 0.0

    def radii(self, k: int) -> list[float]:
        values = _as_list(self.a0)
        return values * k if len(values) == 1 else values

    def radial_speeds(self, k: int) -> list[float]:
        values = _as_list(self.a_dot0)
        return values * k if len(values) == 1 else values

    @model_validator(mode="after")
    def _timelike(self):
        k = max(len(_as_list(self.a0)), len(_as_list(self.a_dot0)))
        speed_sq = self.rho_dot0 ** 2 + sum(v ** 2 for v in self.radial_speeds(k))
        if speed_sq >= 1.0:
            raise ValueError(f"ρ̇₀² + Σȧ₀² = {speed_sq:.6g} debe ser < 1")
        return self


class TorusFamily(BaseModel):
    """Superficie de revolución: z = b sin y, r = R₀ + b cos y, en reposo."""

    model_config = ConfigDict(extra="forbid")

    family: Literal["torus_of_revolution"] = "torus_of_revolution"
    R0: PositiveFloat
    b: PositiveFloat

    @model_validator(mode="after")
    def _embedded(self):
        if self.R0 <= self.b:
            raise ValueError(f"se requiere R0 > b para r > 0 (R0={self.R0}, b={self.b})")
        return self


BaseFamily = Annotated[Union[CliffordFamily, TorusFamily], Field(discriminator="family")]


class Perturbation(BaseModel):
    """Término amplitude · cos(mode · y + phase) sumado a una componente."""

    model_config = ConfigDict(extra="forbid")

    target: Literal["z", "r", "vz", "vr"]
    component: int = Field(1, ge=1)
    mode: int = Field(1, ge=0)
    amplitude: float
    phase: float = 0.0


class PerturbedFamily(BaseModel):
    model_config = ConfigDict(extra="forbid")

    family: Literal["perturbed"] = "perturbed"
    base: BaseFamily
    perturbations: list[Perturbation] = Field(default_factory=list)
    random_modes: int = Field(0, ge=0)
    random_amplitude: float = Field(1e-2, ge=0.0)
    random_max_mode: int = Field(4, ge=1)


InitialDataConfig = Annotated[
    Union[CliffordFamily, TorusFamily, PerturbedFamily],
    Field(discriminator="family"),
]


# ============================================
# 2. CONFIGURACIÓN DE CORRIDA
# ============================================
class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    shape: ShapeConfig = Field(default_factory=ShapeConfig)
    initial_data: InitialDataConfig
    n: int = Field(128, ge=MIN_GRID_SIZE)
    solver: SolverParams = Field(default_factory=SolverParams)
    directions: list[Direction] = Field(default_factory=lambda: [Direction.FORWARD, Direction.BACKWARD], min_length=1)
    output_dir: Optional[str] = None
    seed: int = Field(0, ge=0)
    residual_budget: PositiveFloat = 1e-4
    t_star_method: Literal["linear", "power"] = "power"
    trend_window: int = Field(10, ge=3)
    spline_degree: Literal[3, 5] = 5
    snapshot_every: int = Field(1, ge=1)

    @field_validator("n")
    @classmethod
    def _even(cls, n: int) -> int:
        if n % 2:
            raise ValueError(f"n debe ser par, recibido {n}")
        return n

    @model_validator(mode="after")
    def _family_matches_shape(self):
        family = self.initial_data
        base = family.base if isinstance(family, PerturbedFamily) else family
        k, m = len(self.shape.d), self.shape.m
        if isinstance(base, CliffordFamily):
            if m != 2:
                raise ValueError("la familia clifford requiere m = 2")
            for name in ("a0", "a_dot0"):
                values = _as_list(getattr(base, name))
                if len(values) not in (1, k):
                    raise ValueError(f"{name} debe tener 1 o k={k} valores")
        if isinstance(base, TorusFamily) and (k != 1 or m != 1):
            raise ValueError("torus_of_revolution requiere k = 1 y m = 1")
        if isinstance(family, PerturbedFamily):
            for p in family.perturbations:
                rows = m if p.target in ("z", "vz") else k
                if p.component > rows:
                    raise ValueError(f"perturbación sobre {p.target}_{p.component}: solo hay {rows} componentes")
        return self

    @property
    def name(self) -> str:
        family = self.initial_data.family
        return self.output_dir or f"{family}_n{self.n}"


# ============================================
# 3. CARGA CON POSICIONES DE ERROR
# ============================================
def _yaml() -> YAML:
    yaml = YAML(typ="rt")
    yaml.preserve_quotes = True
    return yaml


def _locate(data: Any, loc: tuple) -> Optional[tuple[int, int]]:
    """(línea, columna) 1-based del nodo más profundo de `loc` presente en el YAML."""
    position = None
    node = data
    for key in loc:
        lc = getattr(node, "lc", None)
        if isinstance(node, Mapping) and key in node:
            if lc is not None:
                line, col = lc.key(key)
                position = (line + 1, col + 1)
            node = node[key]
        elif isinstance(node, list) and isinstance(key, int) and 0 <= key < len(node):
            if lc is not None:
                line, col = lc.item(key)
                position = (line + 1, col + 1)
            node = node[key]
        # etiquetas de unión discriminada y de tipo no aparecen en el documento
    return position


def format_validation_error(exc: ValidationError, data: Any, source: str = "<config>") -> str:
    lines = []
    for err in exc.errors():
        loc = tuple(err["loc"])
        path = ".".join(str(part) for part in loc) or "<raíz>"
        position = _locate(data, loc)
        where = f" (línea {position[0]}, col {position[1]})" if position else ""
        lines.append(f"{source}: {path}{where}: {err['msg']}")
    return "\n".join(lines)


def parse_config(text: str, source: str = "<config>") -> tuple[RunConfig, Any]:
    """Valida el texto YAML y devuelve (RunConfig, documento crudo)."""
    try:
        data = _yaml().load(text)
    except YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" (línea {mark.line + 1}, col {mark.column + 1})" if mark is not None else ""
        raise ConfigError(f"{source}{where}: YAML inválido: {getattr(exc, 'problem', exc)}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError(f"{source}: la raíz de la configuración debe ser un mapeo")
    return validate_config(data, source), data


def validate_config(data: Mapping, source: str = "<config>") -> RunConfig:
    try:
        return RunConfig.model_validate(to_plain(data))
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc, data, source)) from exc


def load_config(path: str | Path) -> tuple[RunConfig, str]:
    """Lee y valida un archivo de configuración; devuelve (RunConfig, texto original)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"No se pudo leer {path}: {exc}") from exc
    config, _ = parse_config(text, source=str(path))
    return config, text


def load_mapping(path: str | Path) -> dict:
    """Documento YAML genérico como dict plano (plantillas y grillas de barrido)."""
    path = Path(path)
    try:
        data = _yaml().load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"No se pudo leer {path}: {exc}") from exc
    except YAMLError as exc:
        raise ConfigError(f"{path}: YAML inválido: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: se esperaba un mapeo")
    return to_plain(data)


def to_plain(data: Any) -> Any:
    """CommentedMap/CommentedSeq a dict/list nativos."""
    if isinstance(data, Mapping):
        return {str(key): to_plain(value) for key, value in data.items()}
    if isinstance(data, list):
        return [to_plain(value) for value in data]
    if isinstance(data, bool) or data is None:
        return data
    if isinstance(data, int):
        return int(data)
    if isinstance(data, float):
        return float(data)
    if isinstance(data, str):
        return str(data)
    return data


def dump_yaml(data: Mapping) -> str:
    stream = io.StringIO()
    yaml = YAML(typ="safe", pure=True)
    yaml.default_flow_style = False
    yaml.dump(to_plain(data), stream)
    return stream.getvalue()


def set_dotted(data: dict, dotted_key: str, value: Any) -> dict:
    """Copia de `data` con `value` en la ruta "a.b.c" (crea mapeos intermedios)."""
    result = copy.deepcopy(data)
    node = result
    *parents, leaf = dotted_key.split(".")
    for key in parents:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[leaf] = value
    return result


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
