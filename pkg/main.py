"""
Main - Orquestador del simulador de membranas
=============================================
Punto de entrada centralizado para todos los subcomandos:

    python main.py evolve configs/clifford_rest.yaml
    python main.py sweep configs/clifford_rest.yaml configs/sweep_rest_grid.yaml --workers 4
    python main.py convergence configs/perturbed.yaml --resolutions 64 128 256 --window 0.5
    python main.py oracle clifford --rho0 1 --a0 1 --pin golden/clifford_rest.txt
    python main.py diagnose salidas/clifford_rest
"""

import argparse
import logging
import os
import sys

from dotenv import find_dotenv, load_dotenv

# Cargar variables de entorno
load_dotenv(find_dotenv())

from membranas import cli_io  # noqa: E402


def configurar_logging() -> None:
    """Nivel desde MEMBRANAS_LOG_LEVEL (INFO por defecto)."""
    nivel = os.getenv("MEMBRANAS_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, nivel, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.captureWarnings(True)


def construir_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Simulador de membranas relativistas axisimétricas")
    sub = parser.add_subparsers(dest="comando", required=True)

    evolve = sub.add_parser("evolve", help="Corre una configuración en cada dirección pedida")
    evolve.add_argument("config")
    evolve.add_argument("--out", default=None, help="Directorio de salida (por defecto bajo MEMBRANAS_OUTPUT_ROOT)")

    sweep = sub.add_parser("sweep", help="Barrido sobre una grilla de parámetros")
    sweep.add_argument("template")
    sweep.add_argument("grid", help="YAML {clave.punteada: [valores]}")
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--workers", type=int, default=1)

    conv = sub.add_parser("convergence", help="Estudio de refinamiento")
    conv.add_argument("config")
    conv.add_argument("--resolutions", type=int, nargs="+", required=True)
    conv.add_argument("--window", type=float, required=True, help="Longitud de la ventana suave")
    conv.add_argument("--out", default=None)

    oracle = sub.add_parser("oracle", help="Integra la reducción homogénea")
    oracle.add_argument("family", choices=["clifford"])
    oracle.add_argument("--rho0", type=float, required=True)
    oracle.add_argument("--a0", type=float, nargs="+", required=True)
    oracle.add_argument("--rho-dot0", type=float, default=0.0)
    oracle.add_argument("--a-dot0", type=float, nargs="+", default=[0.0])
    oracle.add_argument("--tol", type=float, default=1e-12)
    oracle.add_argument("--pin", default=None, help="Archivo dorado donde fijar los instantes de colapso")

    diagnose = sub.add_parser("diagnose", help="Recalcula diagnósticos de una corrida existente")
    diagnose.add_argument("run_dir")
    return parser


def main(argv=None) -> int:
    """Función principal del orquestador."""
    configurar_logging()
    args = construir_parser().parse_args(argv)

    if args.comando == "evolve":
        return cli_io.run(args.config, out_dir=args.out)

    if args.comando == "sweep":
        return cli_io.run_sweep(args.template, args.grid, out_dir=args.out, workers=args.workers)

    if args.comando == "convergence":
        return cli_io.run_convergence(args.config, args.resolutions, args.window, out_dir=args.out)

    if args.comando == "oracle":
        a_dot0 = args.a_dot0 if len(args.a_dot0) > 1 else args.a_dot0[0]
        return cli_io.oracle_command(args.rho0, args.a0, args.rho_dot0, a_dot0, tol=args.tol, pin=args.pin)

    return cli_io.run_diagnose(args.run_dir)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\n\n¡Interrumpido! 👋\n")
        sys.exit(130)
