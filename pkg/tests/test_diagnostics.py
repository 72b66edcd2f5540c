import numpy as np
import pytest

from membranas.diagnostics import (
    DiagnosticsRecord,
    Mechanism,
    a_priori_violations,
    check_a_priori_bounds,
    compute_record,
    conserved_density,
    convexity_check,
    detect_breakdown,
    estimate_t_star,
    gtt_integral,
    mean_radii,
    second_divided_differences,
)
from membranas.errors import InsufficientHistory, InvariantViolation
from membranas.evolution import Direction, RunResult, Termination
from membranas.oracle import CliffordState, lift_to_grid


def make_records(times, indicators, mean_radii=None, residual=1e-9, margin=0.5, max_radius=None):
    times = list(times)
    if mean_radii is None:
        mean_radii = [1.0 - 0.1 * t ** 2 for t in times]
    if max_radius is None:
        max_radius = mean_radii
    return [
        DiagnosticsRecord(
            t=t, min_indicator=i, mean_radii=(m,), density_spread=1e-12, x_inf=residual, y_inf=residual,
            max_speed=1.0, velocity_margin=margin, gtt_integral=1.0, max_radii=(mr,), max_z_norm=1.0,
            min_radius_product=m,
        )
        for t, i, m, mr in zip(times, indicators, mean_radii, max_radius)
    ]


def make_result(records, termination=Termination.INDICATOR_FLOOR, direction=Direction.FORWARD):
    return RunResult(termination=termination, final_state=None, records=records, direction=direction)


# === Cantidades puntuales ===================================================


def test_record_of_lifted_state(clifford_shape):
    s = CliffordState.gauged(rho=1.0, a=0.8, a_dot=0.3)
    state, C = lift_to_grid(s, 32)
    record = compute_record(state, C, clifford_shape)
    assert record.min_indicator == pytest.approx(s.abs_g_tt * 0.8, rel=1e-12)
    assert record.mean_radii == pytest.approx((0.8,))
    assert record.density_spread < 1e-12
    assert record.gauge_residual < 1e-12
    assert record.velocity_margin == pytest.approx(1.0 - 0.09)
    assert record.gtt_integral == pytest.approx(2.0 * np.pi * s.abs_g_tt)
    assert record.max_z_norm == pytest.approx(1.0)


def test_conserved_density_is_inverse_gauge_constant(clifford_shape):
    state, C = lift_to_grid(CliffordState.gauged(rho=1.3, a=0.7, rho_dot=-0.2), 32)
    density, spread = conserved_density(state, C, clifford_shape)
    np.testing.assert_allclose(density, 1.0 / C.value, rtol=1e-12)
    assert spread < 1e-12


def test_mean_radii_and_gtt_integral(unit_torus):
    state = unit_torus(32).replace(vr=np.full((1, 32), 0.6))
    r = state.r.copy()
    r[0] += 0.2 * np.cos(state.y)
    state = state.replace(r=r)
    assert mean_radii(state) == pytest.approx((1.0,))
    assert gtt_integral(state) == pytest.approx(2.0 * np.pi * 0.64)


def test_mean_radii_matches_oversampled_quadrature(unit_torus):
    n = 256
    state = unit_torus(n)
    state = state.replace(r=np.exp(0.3 * np.cos(state.y) + 0.1 * np.sin(2.0 * state.y))[None, :])
    fine = np.linspace(0.0, 2.0 * np.pi, 16 * n, endpoint=False)
    reference = np.mean(np.exp(0.3 * np.cos(fine) + 0.1 * np.sin(2.0 * fine)))
    assert mean_radii(state)[0] == pytest.approx(reference, rel=1e-12)


def test_gtt_integral_of_resting_torus_of_revolution(revolution_torus):
    assert gtt_integral(revolution_torus(64)) == pytest.approx(2.0 * np.pi, rel=1e-14)


def test_row_has_stable_columns():
    row = make_records([0.0], [1.0])[0].to_row()
    assert list(row) == ["t", "min_indicator", "mean_r_1", "density_spread", "X_inf", "Y_inf",
                         "max_speed", "velocity_margin", "gtt_integral"]


# === Convexidad =============================================================


def test_second_divided_differences_exact_on_quadratics():
    times = np.array([0.0, 0.1, 0.25, 0.3, 0.7, 1.0])
    values = 3.0 - 2.0 * times + 1.5 * times ** 2
    np.testing.assert_allclose(second_divided_differences(times, values), 3.0)
    np.testing.assert_allclose(second_divided_differences(-times, values), 3.0)


def test_convexity_check_accepts_concave_means():
    times = np.linspace(0.0, 1.0, 12) ** 1.3
    verdict, = convexity_check(make_records(times, np.ones_like(times)))
    assert verdict.convex
    assert verdict.factor == 1
    np.testing.assert_allclose(verdict.second_differences, -0.2)


def test_convexity_check_flags_convex_means():
    times = np.linspace(0.0, 1.0, 6)
    verdict, = convexity_check(make_records(times, np.ones_like(times), mean_radii=1.0 + times ** 2))
    assert not verdict.convex


def test_convexity_check_needs_three_records():
    with pytest.raises(InsufficientHistory):
        convexity_check(make_records([0.0, 0.1], [1.0, 0.9]))


# === Extrapolación de T* ====================================================


def test_linear_estimate_of_linear_indicator():
    times = np.linspace(0.0, 1.0, 11)
    assert estimate_t_star(times, 2.0 - times) == pytest.approx(2.0)


def test_power_estimate_of_power_law():
    times = np.linspace(0.0, 1.0, 201)
    indicator = (1.5 - times) ** 5
    assert estimate_t_star(times, indicator, method="power") == pytest.approx(1.5, abs=1e-3)


def test_default_breakdown_estimate_follows_power_law():
    times = np.linspace(0.0, 1.2, 25)
    report = detect_breakdown(make_result(make_records(times, (1.5 - times) ** 3)), budget=1e-6)
    assert report.t_star_method == "power"
    assert report.t_star_estimate == pytest.approx(1.5, abs=1e-2)


def test_power_estimate_in_backward_direction():
    times = -np.linspace(0.0, 1.0, 201)
    indicator = (1.5 + times) ** 3
    assert estimate_t_star(times, indicator, method="power") == pytest.approx(-1.5, abs=1e-3)


def test_estimate_rejects_roots_behind_the_run():
    times = np.linspace(0.0, 1.0, 11)
    assert estimate_t_star(times, 0.5 + times) is None


def test_estimate_unknown_method():
    with pytest.raises(ValueError):
        estimate_t_star([0.0, 1.0, 2.0], [3.0, 2.0, 1.0], method="cubic")


# === Clasificación de la ruptura ============================================


def test_breakdown_immersivity_loss():
    times = np.linspace(0.0, 1.0, 20)
    report = detect_breakdown(make_result(make_records(times, 1.2 - times)), budget=1e-6)
    assert report.mechanism is Mechanism.IMMERSIVITY_LOSS
    assert report.trigger == "IndicatorFloor"
    assert report.t_star_estimate == pytest.approx(1.2)
    assert report.trend_summary["non_monotone_window"] is False
    assert len(report.trend_summary["final_times"]) == 10


def test_breakdown_residual_over_budget():
    times = np.linspace(0.0, 1.0, 20)
    report = detect_breakdown(make_result(make_records(times, 1.2 - times, residual=1e-3)), budget=1e-4)
    assert report.mechanism is Mechanism.REGULARITY_SUSPECTED


def test_breakdown_nan_termination():
    times = np.linspace(0.0, 1.0, 20)
    result = make_result(make_records(times, 1.2 - times), termination=Termination.NAN_DETECTED)
    assert detect_breakdown(result, budget=1e-4).mechanism is Mechanism.REGULARITY_SUSPECTED


def test_breakdown_horizon_is_undetermined():
    times = np.linspace(0.0, 1.0, 20)
    result = make_result(make_records(times, 1.2 - times), termination=Termination.HORIZON_REACHED)
    report = detect_breakdown(result, budget=1e-4)
    assert report.mechanism is Mechanism.UNDETERMINED
    assert report.t_star_estimate is None


def test_breakdown_non_monotone_window():
    times = np.linspace(0.0, 1.0, 20)
    indicator = 1.2 - times
    indicator[-3] = indicator[-4] + 0.01
    report = detect_breakdown(make_result(make_records(times, indicator)), budget=1e-4)
    assert report.mechanism is Mechanism.UNDETERMINED
    assert report.t_star_estimate is None
    assert report.trend_summary["non_monotone_window"] is True


def test_breakdown_needs_history():
    with pytest.raises(InsufficientHistory):
        detect_breakdown(make_result(make_records([0.0, 0.1], [1.0, 0.9])), budget=1e-4)


def test_breakdown_report_serializes():
    times = np.linspace(0.0, 1.0, 5)
    data = detect_breakdown(make_result(make_records(times, 1.2 - times)), budget=1e-6).to_dict()
    assert data["mechanism"] == "ImmersivityLoss"
    assert data["direction"] == "forward"


# === Cotas a priori =========================================================


def test_a_priori_bounds_hold_for_shrinking_radii():
    times = np.linspace(0.0, 1.0, 5)
    result = make_result(make_records(times, 1.2 - times))
    assert a_priori_violations(result) == []
    check_a_priori_bounds(result)


def test_a_priori_radius_growth_faster_than_light():
    times = np.linspace(0.0, 1.0, 5)
    records = make_records(times, 1.2 - times, max_radius=1.0 + 2.0 * times)
    violations = a_priori_violations(make_result(records))
    assert violations and "max r_1" in violations[0]
    with pytest.raises(InvariantViolation):
        check_a_priori_bounds(make_result(records))


def test_a_priori_violation_tolerated_with_non_timelike():
    times = np.linspace(0.0, 1.0, 5)
    records = make_records(times, 1.2 - times, margin=-0.1)
    result = make_result(records, termination=Termination.NON_TIMELIKE)
    assert a_priori_violations(result)
    check_a_priori_bounds(result)
