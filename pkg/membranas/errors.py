"""
Errores del simulador de membranas
==================================
Jerarquía común de excepciones. Las que describen datos inválidos también
heredan de ValueError.
"""


class MembraneError(Exception):
    """Base de todos los errores del paquete."""

    code = "MEMBRANE_ERROR"
    exit_code = 3


# ============================================
# GEOMETRÍA Y ESTADO
# ============================================
class InvalidShape(MembraneError, ValueError):
    code = "INVALID_SHAPE"


class InvalidGrid(MembraneError, ValueError):
    code = "INVALID_GRID"


class NonTimelike(MembraneError):
    """g_tt >= 0 en algún punto: el estado deja de ser temporal."""

    code = "NON_TIMELIKE"

    def __init__(self, message: str, index: int | None = None, value: float | None = None):
        super().__init__(message)
        self.index = index
        self.value = value


class NonPositiveRadius(MembraneError, ValueError):
    code = "NON_POSITIVE_RADIUS"


class DegenerateParametrization(MembraneError):
    code = "DEGENERATE_PARAMETRIZATION"


class DimensionMismatch(MembraneError, ValueError):
    code = "DIMENSION_MISMATCH"


class NaNDetected(MembraneError):
    code = "NAN_DETECTED"


# ============================================
# GAUGE Y EVOLUCIÓN
# ============================================
class InvalidGaugeConstant(MembraneError, ValueError):
    code = "INVALID_GAUGE_CONSTANT"


class GaugeNotSatisfied(MembraneError):
    code = "GAUGE_NOT_SATISFIED"


class DtFloorReached(MembraneError):
    code = "DT_FLOOR"

    def __init__(self, message: str, dt: float):
        super().__init__(message)
        self.dt = dt


# ============================================
# DIAGNÓSTICOS Y ORQUESTACIÓN
# ============================================
class InsufficientHistory(MembraneError):
    code = "INSUFFICIENT_HISTORY"


class WindowTooLong(MembraneError):
    code = "WINDOW_TOO_LONG"
    exit_code = 2


class ResolutionChainError(MembraneError, ValueError):
    code = "RESOLUTION_CHAIN"
    exit_code = 2


class ConfigError(MembraneError, ValueError):
    code = "CONFIG_ERROR"
    exit_code = 2


class InvariantViolation(MembraneError):
    code = "INVARIANT_VIOLATION"
