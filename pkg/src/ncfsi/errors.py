"""Exception types raised by the solver."""


class NcfsiError(Exception):
    """Base class for all solver errors."""


class GeometryError(NcfsiError, ValueError):
    """Invalid benchmark geometry or mesh construction input."""


class MeshInversion(NcfsiError):
    """A mesh move produced a triangle with non-positive signed area."""

    def __init__(self, triangle: int, area: float, step: int | None = None):
        self.triangle = int(triangle)
        self.area = float(area)
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(
            f"triangle {self.triangle} inverted{where} (signed area {self.area:.3e})"
        )


class PointOutsideDomain(NcfsiError):
    """A point could not be located in any triangle of the mesh."""


class SingularMatrix(NcfsiError):
    """Direct factorization hit a (numerically) zero pivot."""

    def __init__(self, pivot: int | None, message: str = ""):
        self.pivot = pivot
        text = message or "matrix is singular"
        if pivot is not None:
            text += f" (pivot {pivot})"
        super().__init__(text)


class SolverFailure(NcfsiError):
    """The linear solve failed or did not reach the residual contract."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        where = f" at step {step}" if step is not None else ""
        super().__init__(message + where)


class ConfigError(NcfsiError, ValueError):
    """Malformed configuration file or constraint violation."""

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
