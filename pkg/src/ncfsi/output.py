"""Tip time series and mesh+field snapshots.

Numbers are written with 17 significant digits (tip series) or ``repr``
(snapshots), so every file is byte-reproducible and snapshots round-trip.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fem import P1B, P2, P2V, Field
from .mesh import TriMesh, format_mesh, parse_mesh

TIP_HEADER = "t,dx_A,dy_A"

# (name, number of components, space)
SNAPSHOT_FIELDS = (("u", 2, P2V), ("omega", 1, P2), ("p", 1, P1B), ("d", 2, P2V))


def format_tip_row(t: float, dx: float, dy: float) -> str:
    return f"{t:.17g},{dx:.17g},{dy:.17g}"


class TipWriter:
    """Append-only ``tip.csv``; each row is flushed so a failed run keeps its history."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._fh.write(TIP_HEADER + "\n")

    def write(self, t: float, dx: float, dy: float) -> None:
        self._fh.write(format_tip_row(t, dx, dy) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_tip_csv(path: str | Path) -> np.ndarray:
    """``(n, 3)`` array of ``t, dx_A, dy_A``."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != TIP_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        return np.loadtxt(fh, delimiter=",", ndmin=2)


def _fmt(x: float) -> str:
    return repr(float(x))


def format_snapshot(mesh: TriMesh, fields: dict[str, Field], t: float, step: int) -> str:
    """Mesh record followed by ``TIME``, ``STEP`` and one ``FIELD name ncomp`` block per field."""
    parts = [format_mesh(mesh), f"TIME {_fmt(t)}\nSTEP {int(step)}\n"]
    for name, ncomp, space in SNAPSHOT_FIELDS:
        if name not in fields:
            continue
        f = fields[name]
        if f.space != space:
            raise ValueError(f"snapshot field {name} must be {space}, got {f.space}")
        vals = f.values.reshape(len(f.values), ncomp)
        rows = [" ".join(_fmt(v) for v in row) for row in vals]
        parts.append(f"FIELD {name} {ncomp}\n{len(rows)}\n" + "\n".join(rows) + "\n")
    return "".join(parts)


def parse_snapshot(text: str) -> tuple[TriMesh, dict[str, Field], float, int]:
    lines = text.splitlines()
    mesh, pos = parse_mesh(lines)
    tag, t = lines[pos].split()
    if tag != "TIME":
        raise ValueError(f"line {pos + 1}: expected TIME")
    tag, step = lines[pos + 1].split()
    if tag != "STEP":
        raise ValueError(f"line {pos + 2}: expected STEP")
    pos += 2
    spaces = {name: (ncomp, space) for name, ncomp, space in SNAPSHOT_FIELDS}
    fields = {}
    while pos < len(lines):
        head = lines[pos].split()
        if len(head) != 3 or head[0] != "FIELD" or head[1] not in spaces:
            raise ValueError(f"line {pos + 1}: expected 'FIELD name ncomp'")
        name = head[1]
        ncomp, space = spaces[name]
        if int(head[2]) != ncomp:
            raise ValueError(f"line {pos + 1}: field {name} has {ncomp} components")
        n = int(lines[pos + 1])
        vals = np.array([[float(s) for s in lines[pos + 2 + i].split()] for i in range(n)]).reshape(n, ncomp)
        fields[name] = Field(space, vals if ncomp == 2 else vals[:, 0], mesh)
        pos += 2 + n
    return mesh, fields, float(t), int(step)


def write_snapshot(path: str | Path, mesh: TriMesh, fields: dict[str, Field], t: float, step: int) -> None:
    Path(path).write_text(format_snapshot(mesh, fields, t, step), encoding="utf-8", newline="\n")


def read_snapshot(path: str | Path):
    return parse_snapshot(Path(path).read_text(encoding="utf-8"))
