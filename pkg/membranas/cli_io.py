"""
Orquestación y persistencia
===========================
Subcomandos de alto nivel: run (evolve), sweep, convergence, oracle y
diagnose. Cada corrida deja un directorio autocontenido:

    <salida>/
        manifest.json        configuración, versión y hash de entrada
        config.yaml          copia de la configuración efectiva
        plot.gp              script gnuplot genérico
        forward/ backward/
            diagnostics.csv  t, min_indicator, mean_r_1..k, density_spread,
                             X_inf, Y_inf, max_speed, velocity_margin, gtt_integral
            extras.csv       t, max_r_1..k, max_z_norm, min_radius_product
            snapshots/       snapshot_NNNNN.csv (y, z_*, r_*, vz_*, vr_*) e index.csv
            breakdown.json
            result.json

Todas las escrituras son atómicas (archivo temporal + os.replace).
"""

from __future__ import annotations

import itertools
import json
import logging
import os
import platform
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np
import pandas as pd

from membranas import __version__
from membranas.config import (
    RunConfig,
    dump_yaml,
    load_config,
    load_mapping,
    output_root,
    set_dotted,
    sha256_text,
    validate_config,
)
from membranas.diagnostics import (
    BreakdownReport,
    DiagnosticsRecord,
    Mechanism,
    a_priori_violations,
    check_a_priori_bounds,
    convexity_check,
    detect_breakdown,
)
from membranas.errors import (
    ConfigError,
    DegenerateParametrization,
    InsufficientHistory,
    InvariantViolation,
    MembraneError,
    NonPositiveRadius,
    NonTimelike,
    ResolutionChainError,
    WindowTooLong,
)
from membranas.evolution import Direction, RunResult, Termination, evolve
from membranas.gauge import GaugeConstant, comoving_project, fix_parametrization
from membranas.geometry import AxisymmetryShape, FieldState
from membranas.initial_data import build_initial_state, describe
from membranas.oracle import CliffordState, clifford_integrate, collapse_constants, write_golden

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

UNEXPECTED_STATUS = "UNEXPECTED_ERROR"


# ============================================
# 1. ESCRITURA ATÓMICA Y ERRORES
# ============================================
def atomic_write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", encoding="utf-8", dir=path.parent,
                                     prefix=f".{path.name}.", suffix=".tmp", delete=False) as fh:
        fh.write(text)
        tmp = Path(fh.name)
    os.replace(tmp, path)
    return path


def atomic_write_json(path: Path, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def atomic_write_csv(path: Path, frame: pd.DataFrame) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False))


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"No serializable: {type(value).__name__}")


def report_error(exc: MembraneError) -> int:
    """Una línea JSON en stderr con el código de máquina; devuelve el código de salida."""
    print(json.dumps({"error": exc.code, "message": str(exc)}, ensure_ascii=False), file=sys.stderr)
    return exc.exit_code


# ============================================
# 2. PREPARACIÓN Y CORRIDA
# ============================================
@dataclass
class PreparedRun:
    config: RunConfig
    shape: AxisymmetryShape
    state: FieldState
    C: GaugeConstant
    perturbations: list[dict] = field(default_factory=list)


@dataclass
class DirectionOutcome:
    result: RunResult
    report: BreakdownReport
    violations: list[str]


def prepare(config: RunConfig) -> PreparedRun:
    """Datos iniciales → proyección comóvil → gauge de densidad de área."""
    shape = config.shape.build()
    state, applied = build_initial_state(config)
    try:
        projected = comoving_project(state)
        gauged, C = fix_parametrization(projected, shape, spline_degree=config.spline_degree)
    except (DegenerateParametrization, NonPositiveRadius, NonTimelike) as exc:
        raise ConfigError(f"Datos iniciales no admisibles: {exc}") from exc
    logger.info("Gauge fijado: C=%.12g (n=%d, familia %s)", C.value, config.n, config.initial_data.family)
    return PreparedRun(config=config, shape=shape, state=gauged, C=C, perturbations=describe(applied))


def undetermined_report(result: RunResult, method: str) -> BreakdownReport:
    return BreakdownReport(
        direction=result.direction.value,
        t_star_estimate=None,
        mechanism=Mechanism.UNDETERMINED,
        trigger=result.termination.value,
        t_star_method=method,
        trend_summary={"records": len(result.records)},
    )


def analyse(result: RunResult, config: RunConfig) -> DirectionOutcome:
    try:
        report = detect_breakdown(result, config.residual_budget, window=config.trend_window,
                                  method=config.t_star_method)
    except InsufficientHistory as exc:
        logger.warning("%s: %s", result.direction.value, exc)
        report = undetermined_report(result, config.t_star_method)
    return DirectionOutcome(result=result, report=report, violations=a_priori_violations(result))


def run_prepared(prepared: PreparedRun) -> dict[Direction, DirectionOutcome]:
    outcomes = {}
    for direction in prepared.config.directions:
        result = evolve(prepared.state, prepared.C, prepared.shape, prepared.config.solver, direction)
        outcomes[direction] = analyse(result, prepared.config)
    return outcomes


# ============================================
# 3. PERSISTENCIA
# ============================================
def records_frame(records: Sequence[DiagnosticsRecord]) -> pd.DataFrame:
    return pd.DataFrame([rec.to_row() for rec in records])


def extras_frame(records: Sequence[DiagnosticsRecord]) -> pd.DataFrame:
    rows = []
    for rec in records:
        row = {"t": rec.t}
        row.update({f"max_r_{j}": value for j, value in enumerate(rec.max_radii, start=1)})
        row.update(max_z_norm=rec.max_z_norm, min_radius_product=rec.min_radius_product)
        rows.append(row)
    return pd.DataFrame(rows)


def snapshot_frame(state: FieldState) -> pd.DataFrame:
    columns = {"y": state.y}
    for name in ("z", "r", "vz", "vr"):
        for i, row in enumerate(getattr(state, name), start=1):
            columns[f"{name}_{i}"] = row
    return pd.DataFrame(columns)


def _convexity_summary(records: Sequence[DiagnosticsRecord]) -> list[dict]:
    try:
        verdicts = convexity_check(records)
    except InsufficientHistory:
        return []
    return [{"factor": v.factor, "convex": v.convex, "max_second_difference": float(np.max(v.second_differences)),
             "tolerance": v.tolerance} for v in verdicts]


def write_direction(directory: Path, outcome: DirectionOutcome, prepared: PreparedRun) -> None:
    result = outcome.result
    atomic_write_csv(directory / "diagnostics.csv", records_frame(result.records))
    atomic_write_csv(directory / "extras.csv", extras_frame(result.records))

    snapshots = result.snapshots[:: prepared.config.snapshot_every] if result.snapshots else []
    if not snapshots:
        snapshots = [prepared.state] + ([result.final_state] if result.final_state is not None else [])
    index = []
    for i, snap in enumerate(snapshots):
        name = f"snapshot_{i:05d}.csv"
        atomic_write_csv(directory / "snapshots" / name, snapshot_frame(snap))
        index.append({"file": name, "t": snap.t})
    atomic_write_csv(directory / "snapshots" / "index.csv", pd.DataFrame(index))

    atomic_write_json(directory / "breakdown.json", outcome.report.to_dict())
    last = result.records[-1]
    atomic_write_json(directory / "result.json", {
        "direction": result.direction.value,
        "termination": result.termination.value,
        "t0": result.t0,
        "final_time": result.final_time,
        "steps": result.steps,
        "records": len(result.records),
        "C": prepared.C.value,
        "n": prepared.config.n,
        "final_min_indicator": last.min_indicator,
        "max_gauge_residual": max(rec.gauge_residual for rec in result.records),
        "max_density_spread": max(rec.density_spread for rec in result.records),
        "convexity": _convexity_summary(result.records),
        "a_priori_violations": outcome.violations,
    })


def gnuplot_script(config: RunConfig, directions: Sequence[Direction]) -> str:
    k = len(config.shape.d)
    lines = [
        "# Uso: gnuplot plot.gp (desde el directorio de la corrida)",
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 1000,700",
        "set xlabel 't'",
    ]
    for direction in directions:
        data = f"{direction.value}/diagnostics.csv"
        lines += [
            f"set output '{direction.value}_indicator.png'",
            "set ylabel 'min |g_tt| r_1...r_k'",
            "set logscale y",
            f"plot '{data}' using 1:2 with lines",
            "unset logscale y",
            f"set output '{direction.value}_mean_radii.png'",
            "set ylabel 'radio medio'",
            "plot " + ", ".join(f"'{data}' using 1:{2 + j} with lines" for j in range(1, k + 1)),
            f"set output '{direction.value}_gauge.png'",
            "set ylabel 'residuo de gauge'",
            "set logscale y",
            f"plot '{data}' using 1:{4 + k} with lines, '' using 1:{5 + k} with lines",
            "unset logscale y",
        ]
    return "\n".join(lines) + "\n"


def write_manifest(run_dir: Path, prepared: PreparedRun, config_text: str) -> None:
    config = prepared.config
    atomic_write_text(run_dir / "config.yaml", dump_yaml(config.model_dump(mode="json")))
    atomic_write_json(run_dir / "manifest.json", {
        "tool": "membranas",
        "version": __version__,
        "input_sha256": sha256_text(config_text),
        "config": config.model_dump(mode="json"),
        "gauge_constant": prepared.C.value,
        "perturbations": prepared.perturbations,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
    })
    atomic_write_text(run_dir / "plot.gp", gnuplot_script(config, config.directions))


def resolve_run_dir(config: RunConfig, out_dir: Optional[str | Path] = None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    return output_root() / config.name


def execute(config: RunConfig, config_text: str, run_dir: Path) -> dict[Direction, DirectionOutcome]:
    """Prepara, integra cada dirección, escribe salidas y verifica las cotas a priori."""
    prepared = prepare(config)
    outcomes = run_prepared(prepared)
    write_manifest(run_dir, prepared, config_text)
    for direction, outcome in outcomes.items():
        write_direction(run_dir / direction.value, outcome, prepared)

    for direction, outcome in outcomes.items():
        try:
            check_a_priori_bounds(outcome.result)
        except InvariantViolation as exc:
            raise InvariantViolation(f"{direction.value}: {exc}") from exc
    return outcomes


def run(config_path: str | Path, out_dir: Optional[str | Path] = None) -> int:
    """Subcomando evolve. Devuelve el código de salida."""
    try:
        config, text = load_config(config_path)
        run_dir = resolve_run_dir(config, out_dir)
        outcomes = execute(config, text, run_dir)
    except MembraneError as exc:
        return report_error(exc)

    print("\n" + "=" * 60)
    print(f"🌀 CORRIDA: {run_dir}")
    print("=" * 60)
    for direction, outcome in outcomes.items():
        report = outcome.report
        t_star = "n/d" if report.t_star_estimate is None else f"{report.t_star_estimate:.8g}"
        print(f"  {direction.value:>8}: {outcome.result.termination.value} en t={outcome.result.final_time:.8g}"
              f" | {report.mechanism.value} | T* ≈ {t_star}")
    print("-" * 60)
    return EXIT_OK


# ============================================
# 4. BARRIDOS
# ============================================
def grid_cases(grid: dict[str, list]) -> list[dict[str, Any]]:
    """Producto cartesiano de la grilla {clave.punteada: [valores]}; grilla vacía → sin casos."""
    if not grid:
        return []
    keys = list(grid)
    values = [v if isinstance(v, list) else [v] for v in grid.values()]
    return [dict(zip(keys, combo)) for combo in itertools.product(*values)]


def _summary_row(index: int, params: dict, outcomes: Optional[dict], error: Optional[Exception]) -> dict:
    row = {"case": index, **params}
    if error is not None:
        row.update(status=getattr(error, "code", UNEXPECTED_STATUS), message=str(error))
        return row
    row["status"] = "ok"
    residuals = []
    for direction in Direction:
        outcome = outcomes.get(direction)
        if outcome is None:
            continue
        row[f"termination_{direction.value}"] = outcome.result.termination.value
        row[f"final_time_{direction.value}"] = outcome.result.final_time
        row[f"t_star_{direction.value}"] = outcome.report.t_star_estimate
        row[f"mechanism_{direction.value}"] = outcome.report.mechanism.value
        residuals.append(max(rec.gauge_residual for rec in outcome.result.records))
    row["max_gauge_residual"] = max(residuals) if residuals else None
    return row


def _sweep_case(index: int, params: dict, template: dict, sweep_dir: str) -> dict:
    data = template
    for key, value in params.items():
        data = set_dotted(data, key, value)
    try:
        config = validate_config(data, source=f"caso {index}")
        outcomes = execute(config, dump_yaml(data), Path(sweep_dir) / f"case_{index:03d}")
    except MembraneError as exc:
        logger.warning("Caso %d falló: %s", index, exc)
        return _summary_row(index, params, None, exc)
    except Exception as exc:
        logger.exception("Caso %d terminó con un error inesperado", index)
        return _summary_row(index, params, None, exc)
    return _summary_row(index, params, outcomes, None)


def sweep(
    template_path: str | Path,
    grid_path: str | Path,
    out_dir: Optional[str | Path] = None,
    workers: int = 1,
) -> pd.DataFrame:
    """Una fila por caso; los fallos individuales quedan registrados como filas."""
    template = load_mapping(template_path)
    grid = load_mapping(grid_path)
    cases = grid_cases(grid)
    sweep_dir = Path(out_dir) if out_dir is not None else output_root() / f"sweep_{Path(template_path).stem}"
    logger.info("Barrido de %d casos en %s", len(cases), sweep_dir)

    if workers > 1 and len(cases) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_sweep_case, i, params, template, str(sweep_dir)) for i, params in enumerate(cases)]
            rows = [future.result() for future in futures]
    else:
        rows = [_sweep_case(i, params, template, str(sweep_dir)) for i, params in enumerate(cases)]

    table = pd.DataFrame(rows, columns=None if rows else ["case", *grid.keys(), "status"])
    atomic_write_csv(sweep_dir / "summary.csv", table)
    return table


def run_sweep(template_path: str | Path, grid_path: str | Path, out_dir: Optional[str | Path] = None,
              workers: int = 1) -> int:
    try:
        table = sweep(template_path, grid_path, out_dir=out_dir, workers=workers)
    except MembraneError as exc:
        return report_error(exc)
    print("\n" + "=" * 60)
    print(f"🧪 BARRIDO: {len(table)} casos")
    print("=" * 60)
    if len(table):
        print(table.to_string(index=False))
    print("-" * 60)
    return EXIT_OK


# ============================================
# 5. CONVERGENCIA
# ============================================
def check_resolution_chain(resolutions: Sequence[int]) -> list[int]:
    resolutions = [int(n) for n in resolutions]
    if len(resolutions) < 3:
        raise ResolutionChainError(f"Se requieren al menos 3 resoluciones, recibidas {resolutions}")
    for coarse, fine in zip(resolutions, resolutions[1:]):
        if fine != 2 * coarse:
            raise ResolutionChainError(f"Cada resolución debe duplicar la anterior: {coarse} → {fine}")
    return resolutions


def state_difference(coarse: FieldState, fine: FieldState) -> float:
    """Norma máxima de u_n − u_{2n} restringida a la malla gruesa."""
    diff = np.vstack([coarse.positions - fine.positions[:, ::2], coarse.velocities - fine.velocities[:, ::2]])
    return float(np.max(np.abs(diff)))


def convergence(config: RunConfig, resolutions: Sequence[int], window: float) -> pd.DataFrame:
    """
    Misma física en cada n sobre [t₀, t₀ + window]: errores entre pares
    sucesivos, orden observado log2(e_i / e_{i+1}) y residuos por n.
    """
    resolutions = check_resolution_chain(resolutions)
    finals, rows = [], []
    for n in resolutions:
        solver = config.solver.model_copy(update={"t_end": window})
        cfg = config.model_copy(update={"n": n, "solver": solver, "directions": [Direction.FORWARD]})
        prepared = prepare(cfg)
        result = evolve(prepared.state, prepared.C, prepared.shape, solver, Direction.FORWARD)
        if result.termination is not Termination.HORIZON_REACHED:
            raise WindowTooLong(f"n={n}: {result.termination.value} en t={result.final_time:.6g} "
                                f"dentro de la ventana {window}")
        finals.append(result.final_state)
        rows.append({
            "n": n,
            "steps": result.steps,
            "max_gauge_residual": max(rec.gauge_residual for rec in result.records),
            "max_density_spread": max(rec.density_spread for rec in result.records),
        })

    errors = [state_difference(c, f) for c, f in zip(finals, finals[1:])]
    for i, row in enumerate(rows):
        row["error_vs_next"] = errors[i] if i < len(errors) else np.nan
        row["observed_order"] = (float(np.log2(errors[i - 1] / errors[i]))
                                 if 0 < i < len(errors) and errors[i] > 0.0 else np.nan)
    table = pd.DataFrame(rows, columns=["n", "steps", "error_vs_next", "observed_order",
                                        "max_gauge_residual", "max_density_spread"])
    return table


def run_convergence(config_path: str | Path, resolutions: Sequence[int], window: float,
                    out_dir: Optional[str | Path] = None) -> int:
    try:
        config, _ = load_config(config_path)
        table = convergence(config, resolutions, window)
    except MembraneError as exc:
        return report_error(exc)
    target = Path(out_dir) if out_dir is not None else output_root() / f"{config.name}_convergencia"
    atomic_write_csv(target / "convergence.csv", table)
    print("\n" + "=" * 60)
    print("📐 CONVERGENCIA")
    print("=" * 60)
    print(table.to_string(index=False))
    print("-" * 60)
    return EXIT_OK


# ============================================
# 6. ORÁCULO Y DIAGNÓSTICO
# ============================================
def oracle_command(
    rho0: float,
    a0: Sequence[float],
    rho_dot0: float = 0.0,
    a_dot0: Sequence[float] | float = 0.0,
    tol: float = 1e-12,
    pin: Optional[str | Path] = None,
) -> int:
    try:
        s0 = CliffordState.gauged(rho=rho0, a=a0, rho_dot=rho_dot0, a_dot=a_dot0, d=(1,) * len(a0))
    except (MembraneError, ValueError) as exc:
        return report_error(ConfigError(f"Dato homogéneo no admisible: {exc}"))

    forward = clifford_integrate(s0, tol)
    backward = clifford_integrate(s0, tol, backward=True)
    print("\n" + "=" * 60)
    print(f"🔭 ORÁCULO CLIFFORD (C = {s0.C:.12g})")
    print("=" * 60)
    for label, trajectory in (("forward", forward), ("backward", backward)):
        value = "sin colapso" if trajectory.collapse_time is None else f"{trajectory.collapse_time:.12f}"
        print(f"  {label:>8}: {trajectory.stop_reason} | T = {value}")

    if pin is not None:
        write_golden(pin, collapse_constants(s0, tol))
        print(f"  Constantes fijadas en {pin}")
    print("-" * 60)
    return EXIT_OK


def _load_direction(directory: Path) -> tuple[RunResult, dict]:
    meta = json.loads((directory / "result.json").read_text(encoding="utf-8"))
    table = pd.read_csv(directory / "diagnostics.csv")
    extras_path = directory / "extras.csv"
    extras = pd.read_csv(extras_path) if extras_path.exists() else None
    mean_cols = [c for c in table.columns if c.startswith("mean_r_")]
    records = []
    for i, row in table.iterrows():
        extra = {}
        if extras is not None:
            erow = extras.iloc[i]
            extra = {
                "max_radii": tuple(float(erow[c]) for c in extras.columns if c.startswith("max_r_")),
                "max_z_norm": float(erow["max_z_norm"]),
                "min_radius_product": float(erow["min_radius_product"]),
            }
        records.append(DiagnosticsRecord(
            t=float(row["t"]),
            min_indicator=float(row["min_indicator"]),
            mean_radii=tuple(float(row[c]) for c in mean_cols),
            density_spread=float(row["density_spread"]),
            x_inf=float(row["X_inf"]),
            y_inf=float(row["Y_inf"]),
            max_speed=float(row["max_speed"]),
            velocity_margin=float(row["velocity_margin"]),
            gtt_integral=float(row["gtt_integral"]),
            **extra,
        ))
    result = RunResult(
        termination=Termination(meta["termination"]),
        final_state=None,
        records=records,
        direction=Direction(meta["direction"]),
        t0=float(meta["t0"]),
        steps=int(meta["steps"]),
    )
    return result, meta


def diagnose(run_dir: str | Path) -> dict[str, dict]:
    """Relee una corrida y recalcula convexidad y clasificación de ruptura."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"{run_dir} no contiene manifest.json")
    config = RunConfig.model_validate(json.loads(manifest_path.read_text(encoding="utf-8"))["config"])

    verdicts = {}
    for direction in Direction:
        directory = run_dir / direction.value
        if not (directory / "diagnostics.csv").exists():
            continue
        result, _ = _load_direction(directory)
        outcome = analyse(result, config)
        verdicts[direction.value] = {
            "termination": result.termination.value,
            "mechanism": outcome.report.mechanism.value,
            "t_star_estimate": outcome.report.t_star_estimate,
            "convexity": _convexity_summary(result.records),
            "a_priori_violations": outcome.violations,
        }
    return verdicts


def run_diagnose(run_dir: str | Path) -> int:
    try:
        verdicts = diagnose(run_dir)
    except MembraneError as exc:
        return report_error(exc)
    print("\n" + "=" * 60)
    print(f"🩺 DIAGNÓSTICO: {run_dir}")
    print("=" * 60)
    for direction, verdict in verdicts.items():
        convex = all(item["convex"] for item in verdict["convexity"]) if verdict["convexity"] else None
        print(f"  {direction:>8}: {verdict['termination']} | {verdict['mechanism']} | "
              f"T* ≈ {verdict['t_star_estimate']} | convexo={convex} | "
              f"violaciones={len(verdict['a_priori_violations'])}")
    print("-" * 60)
    return EXIT_OK
