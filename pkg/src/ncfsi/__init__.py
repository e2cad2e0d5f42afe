"""Monolithic Eulerian fluid-structure interaction with a Cosserat (micropolar) fluid in 2D."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    GeometryError,
    MeshInversion,
    NcfsiError,
    PointOutsideDomain,
    SingularMatrix,
    SolverFailure,
)
from .mesh import BenchmarkGeometry, TriMesh, build_benchmark_mesh  # noqa: E402
from .physics import MaterialParams  # noqa: E402

__all__ = [
    "BenchmarkGeometry",
    "ConfigError",
    "GeometryError",
    "MaterialParams",
    "MeshInversion",
    "NcfsiError",
    "PointOutsideDomain",
    "SingularMatrix",
    "SolverFailure",
    "TriMesh",
    "build_benchmark_mesh",
]
