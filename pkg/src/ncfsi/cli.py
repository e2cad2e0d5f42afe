"""Command-line driver: run the flag benchmark or the verification suites."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_config, default_config, parse_assignments
from .errors import ConfigError, MeshInversion, NcfsiError, SolverFailure
from .mesh import SOLID, TriMesh, build_benchmark_mesh
from .output import TipWriter, write_snapshot
from .stepper import State, advance, benchmark_conditions, extract_tip_displacement, initial_state

logger = logging.getLogger(__name__)


def select_control_point(mesh: TriMesh, cy: float) -> tuple[float, float]:
    """Solid vertex with maximal x; ties go to the one closest to the flag midline."""
    solid = mesh.region_vertices(SOLID)
    if len(solid) == 0:
        raise ValueError("mesh has no solid vertices")
    v = mesh.vertices[solid]
    xmax = v[:, 0].max()
    cand = np.flatnonzero(v[:, 0] >= xmax - 1e-12 * max(1.0, abs(xmax)))
    k = cand[np.argmin(np.abs(v[cand, 1] - cy))]
    return float(v[k, 0]), float(v[k, 1])


def _snapshot(cfg: RunConfig, out: Path, state: State) -> None:
    fields = {"u": state.u, "omega": state.omega, "p": state.p, "d": state.d}
    write_snapshot(out / f"snapshot_{state.step:06d}.txt", state.mesh, fields, state.step * cfg.dt, state.step)


def run_simulation(cfg: RunConfig, mesh: TriMesh | None = None, on_step=None) -> int:
    """Run ``cfg`` and write ``tip.csv``, snapshots and ``run.json`` into ``cfg.output``.

    Returns 0 on success. Solver and mesh failures propagate with their step
    index after ``run.json`` has recorded the failure; outputs written so far
    are kept. ``on_step(state)`` is called after every completed step.
    """
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    geom = cfg.geometry
    mesh = mesh or build_benchmark_mesh(geom, cfg.mesh_vertices)
    point = cfg.control_point or select_control_point(mesh, geom.cy)
    params = cfg.material
    bcs = benchmark_conditions(params, geom.H, cfg.t_ramp if cfg.ramp else None)
    state = initial_state(mesh)
    record = {
        "version": __version__,
        "config": cfg.to_dict(),
        "mesh": {
            "vertices": mesh.n_vertices,
            "triangles": mesh.n_triangles,
            "solid_triangles": int(np.sum(mesh.region == SOLID)),
            "p2_nodes": mesh.n_p2,
        },
        "control_point_A": list(point),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    status, error = "ok", None
    with TipWriter(out / "tip.csv") as tip:
        tip.write(0.0, *extract_tip_displacement(state, point))
        if cfg.snapshot_every:
            _snapshot(cfg, out, state)
        try:
            for k in range(1, cfg.n_steps + 1):
                state = advance(state, params, cfg.dt, bcs, with_microrotation=not cfg.classical)
                tip.write(k * cfg.dt, *extract_tip_displacement(state, point))
                if on_step is not None:
                    on_step(state)
                if cfg.snapshot_every and k % cfg.snapshot_every == 0:
                    _snapshot(cfg, out, state)
        except (MeshInversion, SolverFailure) as exc:
            status, error = "failed", f"{type(exc).__name__}: {exc}"
            raise
        finally:
            record.update(
                status=status,
                error=error,
                steps_completed=state.step,
                wall_time_s=time.perf_counter() - t_start,
            )
            (out / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def run_verification(stream=sys.stdout) -> int:
    """Chain check, MMS study and classical regression; 0 when all pass."""
    from .verification import classical_regression, mms_cosserat_fixed_domain, mooney_rivlin_chain_check

    ok = True
    chain = mooney_rivlin_chain_check(100)
    print(chain, file=stream)
    ok &= chain.passed

    table = mms_cosserat_fixed_domain([1 / 4, 1 / 8, 1 / 16], n_steps=5)
    print("MMS convergence (unit square)", file=stream)
    print(table.to_csv(), file=stream, end="")
    for key, need in (("err_u_H1", 1.8), ("err_w_H1", 1.8), ("err_p_L2", 1.5)):
        good = table.monotone(key) and min(table.orders(key)) >= need
        print(f"  {key}: orders {[round(o, 3) for o in table.orders(key)]} (need >= {need}) {'pass' if good else 'FAIL'}", file=stream)
        ok &= good

    reg = classical_regression(10)
    good = reg.max_deviation <= 1e-12
    print(f"classical regression: max |u_on - u_off| = {reg.max_deviation:.3e} {'pass' if good else 'FAIL'}", file=stream)
    ok &= good
    return 0 if ok else 1


def _parse_set(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncfsi", description="Monolithic Eulerian Cosserat fluid-structure solver.")
    p.add_argument("--config", type=Path, help="key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key (repeatable)")
    p.add_argument("--tmax", type=float, help="final time (s)")
    p.add_argument("--dt", type=float, help="time step (s)")
    p.add_argument("--classical", action="store_true", help="switch off microrotation")
    p.add_argument("--output", help="output directory")
    p.add_argument("--snapshot-every", type=int, help="write a snapshot every N steps (0 = never)")
    p.add_argument("--verify", action="store_true", help="run the verification suites instead of a simulation")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = _parse_set(args.set)
    for key, val in (("t_max", args.tmax), ("dt", args.dt), ("output", args.output), ("snapshot_every", args.snapshot_every)):
        if val is not None:
            overrides[key] = str(val)
    if args.classical:
        overrides["mode"] = "classical"
    if args.config is None:
        return default_config(overrides)
    if not args.config.is_file():
        raise ConfigError(f"config file {str(args.config)!r} does not exist")
    values = parse_assignments(args.config.read_text(encoding="utf-8").splitlines(), source=str(args.config))
    values.update({k: (v, None) for k, v in overrides.items()})
    return build_config(values)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.verify:
        return run_verification()
    try:
        cfg = config_from_args(args)
        return run_simulation(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NcfsiError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
