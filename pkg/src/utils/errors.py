from typing import Optional


class DisbecError(Exception):
    """Base class for every error raised by the disbec solvers and harness."""


class ResolutionError(DisbecError):
    """Grid too coarse for the requested computation."""


class DomainError(DisbecError):
    """Argument outside the domain of an operation."""


class ConvergenceError(DisbecError):
    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class TableError(DisbecError):
    """An auxiliary table violates concavity, convexity or derivative bounds."""


class RangeError(DisbecError):
    """Auxiliary table range exhausted after the extension cap."""


class BracketError(DisbecError):
    pass


class ConsistencyError(DisbecError):
    """Two independent evaluations of the same quantity disagree."""


class DegenerateConfigurationError(DisbecError):
    pass


class DimensionError(DisbecError):
    pass


class QuadratureError(DisbecError):
    pass


class OutputError(DisbecError):
    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{message}: {path}" if path else message)
        self.path = path
