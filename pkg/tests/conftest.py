from pathlib import Path

import numpy as np
import pytest
from ruamel.yaml import YAML

from membranas.geometry import AxisymmetryShape, FieldState, grid
from membranas.oracle import read_golden


@pytest.fixture
def clifford_shape():
    return AxisymmetryShape(d=(1,), m=2)


@pytest.fixture
def torus_shape():
    return AxisymmetryShape(d=(1,), m=1)


@pytest.fixture
def unit_torus():
    """Toro de Clifford estático ρ = a = 1 en una malla de n puntos."""

    def build(n=64, rho=1.0, a=1.0):
        y = grid(n)
        circle = np.vstack([np.cos(y), np.sin(y)])
        return FieldState(t=0.0, z=rho * circle, r=np.full((1, n), a),
                          vz=np.zeros((2, n)), vr=np.zeros((1, n)))

    return build


@pytest.fixture
def revolution_torus():
    """z = b sin φ(y), r = R0 + b cos φ(y) con φ(y) = y + skew·sin y, en reposo."""

    def build(n=128, R0=2.0, b=0.5, skew=0.3):
        y = grid(n)
        phi = y + skew * np.sin(y)
        z = b * np.sin(phi)[None, :]
        r = (R0 + b * np.cos(phi))[None, :]
        return FieldState(t=0.0, z=z, r=r, vz=np.zeros_like(z), vr=np.zeros_like(r))

    return build


@pytest.fixture
def write_yaml(tmp_path):
    """Escribe un dict como YAML en tmp_path y devuelve la ruta."""

    def write(data, name="config.yaml"):
        path = tmp_path / name
        yaml = YAML(typ="safe", pure=True)
        yaml.default_flow_style = False
        with path.open("w", encoding="utf-8") as fh:
            yaml.dump(data, fh)
        return path

    return write


@pytest.fixture
def output_root(tmp_path, monkeypatch):
    root = tmp_path / "salidas"
    monkeypatch.setenv("MEMBRANAS_OUTPUT_ROOT", str(root))
    return root


@pytest.fixture
def clifford_config():
    """Configuración mínima de datos en reposo, barata de correr.

    Los dicts de `shape` y `solver` se combinan con los valores base; el resto se reemplaza.
    """

    def build(**overrides):
        data = {
            "shape": {"d": [1], "m": 2},
            "initial_data": {"family": "clifford", "rho0": 1.0, "a0": 1.0},
            "n": 32,
            "solver": {"t_end": 1e-3},
            "directions": ["forward"],
        }
        for key, value in overrides.items():
            if key in ("shape", "solver"):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return data

    return build


@pytest.fixture
def rest_golden():
    """Constantes de colapso fijadas para el dato en reposo ρ₀ = a₀ = 1."""
    return read_golden(Path(__file__).resolve().parents[1] / "golden" / "clifford_rest.txt")
