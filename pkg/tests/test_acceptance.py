"""
Corridas de aceptación a escala de escritorio. Lentas: pytest -m slow
"""

import json
from pathlib import Path

import numpy as np
import pytest

from membranas import cli_io
from membranas.config import RunConfig, load_config
from membranas.diagnostics import Mechanism, detect_breakdown
from membranas.evolution import Direction, SolverParams, Termination, evolve
from membranas.oracle import CliffordState, clifford_integrate, lift_to_grid, radii_of_grid_state

pytestmark = pytest.mark.slow

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

REST_TEMPLATE = {
    "shape": {"d": [1], "m": 2},
    "initial_data": {"family": "clifford", "rho0": 1.0, "a0": 1.0},
    "n": 256,
    "solver": {"cfl": 0.2, "t_end": 20.0, "record_every": 1},
    "directions": ["forward", "backward"],
}


def oracle_collapse(rho0, a0, backward=False):
    return clifford_integrate(CliffordState.gauged(rho=rho0, a=a0), backward=backward).collapse_time


def smooth_window_run(n):
    config, _ = load_config(CONFIGS / "perturbed.yaml")
    prepared = cli_io.prepare(config.model_copy(update={"n": n}))
    result = evolve(prepared.state, prepared.C, prepared.shape, config.solver, Direction.FORWARD)
    assert result.termination is Termination.HORIZON_REACHED
    return result


def test_pde_matches_oracle_on_rest_data(clifford_shape):
    s0 = CliffordState.gauged(rho=1.0, a=1.0)
    state, C = lift_to_grid(s0, 256)
    params = SolverParams(t_end=5.0, indicator_floor=0.1, keep_snapshots=True)
    result = evolve(state, C, clifford_shape, params)
    assert result.termination is Termination.INDICATOR_FLOOR

    trajectory = clifford_integrate(s0)
    for snapshot in result.snapshots:
        exact = trajectory.state_at(snapshot.t)
        rho, a = radii_of_grid_state(snapshot)
        assert rho == pytest.approx(exact.rho, rel=1e-6)
        assert a[0] == pytest.approx(exact.a[0], rel=1e-6)


def test_default_t_star_estimate_on_rest_run(clifford_shape, rest_golden):
    state, C = lift_to_grid(CliffordState.gauged(rho=1.0, a=1.0), 256)
    result = evolve(state, C, clifford_shape, SolverParams(cfl=0.2, t_end=20.0))
    assert result.termination in (Termination.INDICATOR_FLOOR, Termination.RADIUS_FLOOR)
    report = detect_breakdown(result, RunConfig.model_fields["residual_budget"].default)
    assert report.t_star_method == "power"
    assert report.mechanism is Mechanism.IMMERSIVITY_LOSS
    assert report.t_star_estimate == pytest.approx(rest_golden["clifford_collapse_forward"].value, rel=0.02)


def test_rest_sweep_collapses_with_oracle_times(write_yaml, tmp_path, rest_golden):
    out = tmp_path / "barrido"
    table = cli_io.sweep(write_yaml(REST_TEMPLATE, "plantilla.yaml"), CONFIGS / "sweep_rest_grid.yaml", out_dir=out)
    assert len(table) == 9
    assert set(table["status"]) == {"ok"}

    floors = {Termination.INDICATOR_FLOOR.value, Termination.RADIUS_FLOOR.value}
    for _, row in table.iterrows():
        rho0, a0 = row["initial_data.rho0"], row["initial_data.a0"]
        for direction in Direction:
            assert row[f"termination_{direction.value}"] in floors
            if (rho0, a0) == (1.0, 1.0):
                expected = rest_golden[f"clifford_collapse_{direction.value}"].value
            else:
                expected = oracle_collapse(rho0, a0, backward=direction is Direction.BACKWARD)
            assert row[f"t_star_{direction.value}"] == pytest.approx(expected, rel=0.02)

            result = json.loads((out / f"case_{row['case']:03d}" / direction.value / "result.json")
                                .read_text(encoding="utf-8"))
            assert result["convexity"] and all(item["convex"] for item in result["convexity"])
            assert result["a_priori_violations"] == []


def test_gauge_residuals_refine_on_smooth_window():
    coarse, fine = (smooth_window_run(n) for n in (128, 256))
    residual = [max(rec.gauge_residual for rec in run.records) for run in (coarse, fine)]
    spread = [max(rec.density_spread for rec in run.records) for run in (coarse, fine)]
    assert residual[1] <= residual[0] / 10.0
    assert spread[1] <= 1e-6
    assert spread[1] <= spread[0] / 2.0 ** 3.3
    for run in (coarse, fine):
        assert all(rec.velocity_margin > 0.0 for rec in run.records)


def test_convergence_order_on_perturbed_benchmark():
    config, _ = load_config(CONFIGS / "perturbed.yaml")
    table = cli_io.convergence(config, [64, 128, 256], window=0.5)
    assert table["observed_order"].iloc[1] >= 3.5


def test_collapse_is_stable_under_random_perturbations(write_yaml, tmp_path, rest_golden):
    template = {
        **REST_TEMPLATE,
        "initial_data": {
            "family": "perturbed",
            "base": {"family": "clifford", "rho0": 1.0, "a0": 1.0},
            "random_modes": 3,
            "random_amplitude": 1e-2,
        },
        "directions": ["forward"],
        "residual_budget": 1e-3,
    }
    grid = write_yaml({"seed": list(range(20))}, "semillas.yaml")
    table = cli_io.sweep(write_yaml(template, "plantilla.yaml"), grid, out_dir=tmp_path / "semillas", workers=2)

    reference = rest_golden["clifford_collapse_forward"].value
    assert len(table) == 20
    assert set(table["status"]) == {"ok"}
    assert set(table["mechanism_forward"]) == {"ImmersivityLoss"}
    ratios = table["t_star_forward"].to_numpy(dtype=float) / reference
    assert np.all((ratios > 1.0 / 1.5) & (ratios < 1.5))
