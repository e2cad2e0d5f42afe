"""Run configuration: flat ``key = value`` files with ``#`` comments."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .mesh import BenchmarkGeometry
from .physics import MaterialParams

MODES = ("cosserat", "classical")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one simulation.

    In classical mode the microrotational coefficients are forced to zero and
    the microrotation block is left out of the linear system.
    """

    geometry: BenchmarkGeometry = field(default_factory=BenchmarkGeometry)
    material: MaterialParams = field(default_factory=MaterialParams)
    dt: float = 0.005
    t_max: float = 5.0
    mesh_vertices: int = 2199
    output: str = "output"
    snapshot_every: int = 0
    mode: str = "cosserat"
    deterministic: bool = True
    ramp: bool = False
    t_ramp: float = 0.0
    control_point: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}", key="dt")
        if not self.t_max >= self.dt:
            raise ConfigError(f"t_max must be at least dt, got {self.t_max}", key="t_max")
        if self.mesh_vertices < 500:
            raise ConfigError(f"mesh_vertices must be at least 500, got {self.mesh_vertices}", key="mesh_vertices")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every must be non-negative", key="snapshot_every")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}", key="mode")
        if self.ramp and not self.t_ramp > 0:
            raise ConfigError("t_ramp must be positive when ramp is on", key="t_ramp")
        if self.mode == "classical":
            m = self.material
            if m.mu_r != 0 or m.lambda1 != 0 or m.lambda2 != 0:
                object.__setattr__(self, "material", m.classical())

    @property
    def classical(self) -> bool:
        return self.mode == "classical"

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    def to_dict(self) -> dict:
        out = {
            "geometry": asdict(self.geometry),
            "material": {f.name: getattr(self.material, f.name) for f in fields(self.material)},
        }
        for f in fields(self):
            if f.name not in ("geometry", "material"):
                v = getattr(self, f.name)
                out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


_GEOMETRY_KEYS = {"L", "H", "cx", "cy", "r", "l", "h"}
_MATERIAL_KEYS = {
    "rho_f",
    "rho_s",
    "mu_r",
    "lambda1",
    "lambda2",
    "micro_inertia",
    "c1",
    "c2",
    "zeta",
    "Ubar",
}
_RUN_KEYS = {
    "dt": float,
    "t_max": float,
    "mesh_vertices": int,
    "output": str,
    "snapshot_every": int,
    "mode": str,
    "deterministic": "bool",
    "ramp": "bool",
    "t_ramp": float,
}
#: nu_f is converted to the dynamic viscosity mu = nu_f * rho_f; control_x/y override point A
KNOWN_KEYS = _GEOMETRY_KEYS | _MATERIAL_KEYS | set(_RUN_KEYS) | {"nu_f", "control_x", "control_y"}


def _to_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_assignments(lines, source: str = "<config>") -> dict[str, tuple[str, int | None]]:
    """``key -> (raw value, line number)`` from ``key = value`` lines."""
    out = {}
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}: expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in text.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}: empty key or value", line=lineno)
        out[key] = (value, lineno)
    return out


def build_config(values: dict[str, tuple[str, int | None]]) -> RunConfig:
    """Convert raw assignments to a :class:`RunConfig`; unknown keys are rejected."""
    for key, (_, line) in values.items():
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}", key=key, line=line)

    def conv(key, kind):
        text, line = values[key]
        try:
            return _to_bool(text) if kind == "bool" else kind(text)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {text!r}", key=key, line=line) from None

    def checked(build, key_of_error=None):
        try:
            return build()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), key=key_of_error) from None

    geo_kw = {k: conv(k, float) for k in _GEOMETRY_KEYS if k in values}
    geometry = BenchmarkGeometry(**geo_kw)
    try:
        geometry.validate()
    except ValueError as exc:
        raise ConfigError(f"geometry: {exc}", key="geometry") from None

    mat_kw = {k: conv(k, float) for k in _MATERIAL_KEYS if k in values}
    if "nu_f" in values:
        nu = conv("nu_f", float)
        if not nu > 0:
            raise ConfigError(f"nu_f must be positive, got {nu}", key="nu_f", line=values["nu_f"][1])
        mat_kw["mu"] = nu * mat_kw.get("rho_f", MaterialParams.rho_f)
    material = checked(lambda: MaterialParams(**mat_kw), "material")

    run_kw = {k: conv(k, kind) for k, kind in _RUN_KEYS.items() if k in values}
    if ("control_x" in values) != ("control_y" in values):
        raise ConfigError("control_x and control_y must be given together", key="control_x")
    if "control_x" in values:
        run_kw["control_point"] = (conv("control_x", float), conv("control_y", float))
    return checked(lambda: RunConfig(geometry=geometry, material=material, **run_kw))


def parse_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    """Read a config file; ``overrides`` (e.g. from ``--set``) win over file values."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    values = parse_assignments(path.read_text(encoding="utf-8").splitlines(), source=str(path))
    for k, v in (overrides or {}).items():
        values[k] = (v, None)
    return build_config(values)


def default_config(overrides: dict[str, str] | None = None) -> RunConfig:
    return build_config({k: (v, None) for k, v in (overrides or {}).items()})


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
