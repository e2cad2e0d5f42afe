"""Triangulated computational domain with fluid/solid regions and labeled boundaries.

A :class:`TriMesh` is an immutable value. Connectivity never changes during a
simulation; :func:`move_vertices` returns a new mesh that shares the topology
of its parent.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .errors import GeometryError, MeshInversion, SingularMatrix

logger = logging.getLogger(__name__)

FLUID = 0
SOLID = 1
REGION_NAMES = ("fluid", "solid")

INLET, OUTLET, WALL, CYLINDER, INTERFACE = "inlet", "outlet", "wall", "cylinder", "interface"
BOUNDARY_LABELS = (INLET, OUTLET, WALL, CYLINDER, INTERFACE)

#: labels of the fixed outer boundary (everything but the fluid-solid interface)
OUTER_LABELS = (INLET, OUTLET, WALL, CYLINDER)

BARY_TOL = 1e-12


def _edge_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1]))


@dataclass(frozen=True)
class Topology:
    """Connectivity derived from the triangle list; shared by all moved copies."""

    edges: np.ndarray  # (ne, 2) sorted vertex pairs
    tri_edges: np.ndarray  # (nt, 3) edges (v0,v1), (v1,v2), (v2,v0)
    edge_tris: np.ndarray  # (ne, 2) adjacent triangles, -1 if none
    edge_label: np.ndarray  # (ne,) index into BOUNDARY_LABELS, -1 if unlabeled
    n_vertices: int

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_p2(self) -> int:
        return self.n_vertices + len(self.edges)


def _build_topology(n_vertices: int, triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nt = len(triangles)
    local = np.array([[0, 1], [1, 2], [2, 0]])
    pairs = triangles[:, local].reshape(-1, 2)
    pairs = np.sort(pairs, axis=1)
    edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if counts.max(initial=0) > 2:
        bad = edges[np.argmax(counts)]
        raise GeometryError(f"edge {tuple(bad)} shared by more than two triangles")
    tri_edges = inverse.reshape(nt, 3)
    edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
    owner = np.repeat(np.arange(nt), 3)
    # first occurrence in slot 0, second in slot 1 (stable order)
    order = np.argsort(inverse, kind="stable")
    sorted_e = inverse[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_e[1:] != sorted_e[:-1]
    edge_tris[sorted_e[first], 0] = owner[order[first]]
    edge_tris[sorted_e[~first], 1] = owner[order[~first]]
    return edges, tri_edges, edge_tris


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation tagged with fluid/solid regions.

    Parameters
    ----------
    vertices : (nv, 2) array
        Vertex coordinates in metres.
    triangles : (nt, 3) int array
        Counter-clockwise vertex triples.
    region : (nt,) int array
        ``FLUID`` (0) or ``SOLID`` (1) per triangle.
    boundary_edges : mapping
        ``(i, j) -> label`` with ``i < j``. Every boundary edge must carry one of
        the outer labels and every fluid/solid edge must be labeled ``interface``.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    boundary_edges: Mapping[tuple[int, int], str]

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        t = np.array(self.triangles, dtype=np.int64)
        r = np.array(self.region, dtype=np.int8)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("vertices must have shape (nv, 2)")
        if t.ndim != 2 or t.shape[1] != 3 or len(t) == 0:
            raise GeometryError("triangles must have shape (nt, 3), nt > 0")
        if r.shape != (len(t),) or not np.isin(r, (FLUID, SOLID)).all():
            raise GeometryError("region must hold one fluid/solid tag per triangle")
        if t.min() < 0 or t.max() >= len(v):
            raise GeometryError("triangle references a missing vertex")
        for arr in (v, t, r):
            arr.setflags(write=False)
        labels = {_edge_key(int(i), int(j)): str(lab) for (i, j), lab in dict(self.boundary_edges).items()}
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "region", r)
        object.__setattr__(self, "boundary_edges", labels)
        if "topology" not in self.__dict__:
            self._validate_topology()
        self._validate_areas()

    # -- validation -------------------------------------------------------

    def _validate_areas(self):
        areas = self.areas
        bad = np.flatnonzero(areas <= 0.0)
        if len(bad):
            raise MeshInversion(bad[0], areas[bad[0]])

    def _validate_topology(self):
        topo = self.topology
        used = np.zeros(len(self.vertices), dtype=bool)
        used[self.triangles.ravel()] = True
        if not used.all():
            raise GeometryError(f"vertex {int(np.flatnonzero(~used)[0])} belongs to no triangle")
        for (i, j), lab in self.boundary_edges.items():
            if lab not in BOUNDARY_LABELS:
                raise GeometryError(f"unknown boundary label {lab!r}")
        lab = topo.edge_label
        t0, t1 = topo.edge_tris[:, 0], topo.edge_tris[:, 1]
        on_boundary = t1 < 0
        missing = np.flatnonzero(on_boundary & (lab < 0))
        if len(missing):
            raise GeometryError(f"boundary edge {tuple(topo.edges[missing[0]])} is unlabeled (hanging node?)")
        self._check_hanging_nodes(np.flatnonzero(on_boundary))
        iface = BOUNDARY_LABELS.index(INTERFACE)
        if np.any(on_boundary & (lab == iface)):
            raise GeometryError("edge on the domain boundary labeled interface")
        mixed = ~on_boundary
        mixed[mixed] = self.region[t0[mixed]] != self.region[t1[mixed]]
        if np.any(mixed != (lab == iface)):
            k = np.flatnonzero(mixed != (lab == iface))[0]
            raise GeometryError(
                f"edge {tuple(topo.edges[k])} must be labeled interface iff it separates fluid and solid"
            )
        interior_labeled = ~on_boundary & (lab >= 0) & (lab != iface)
        if np.any(interior_labeled):
            k = np.flatnonzero(interior_labeled)[0]
            raise GeometryError(f"interior edge {tuple(topo.edges[k])} carries an outer-boundary label")

    def _check_hanging_nodes(self, boundary: np.ndarray):
        # a vertex strictly inside a boundary edge means the neighbour was split without us
        if len(boundary) == 0:
            return
        e = self.topology.edges[boundary]
        a, b = self.vertices[e[:, 0]], self.vertices[e[:, 1]]
        mid = 0.5 * (a + b)
        half = 0.5 * np.hypot(*(b - a).T)
        tree = cKDTree(self.vertices)
        for k, near in enumerate(tree.query_ball_point(mid, half * (1 + 1e-9))):
            ab = b[k] - a[k]
            L2 = ab @ ab
            for j in near:
                if j in (e[k, 0], e[k, 1]):
                    continue
                ap = self.vertices[j] - a[k]
                s = (ap @ ab) / L2
                dist2 = ap @ ap - s * s * L2
                if 0 < s < 1 and dist2 <= (1e-10 * half[k]) ** 2:
                    raise GeometryError(f"hanging node {j} on edge {tuple(e[k])}")

    # -- topology ---------------------------------------------------------

    @cached_property
    def topology(self) -> Topology:
        edges, tri_edges, edge_tris = _build_topology(len(self.vertices), self.triangles)
        index = {(int(a), int(b)): k for k, (a, b) in enumerate(edges)}
        edge_label = -np.ones(len(edges), dtype=np.int64)
        for key, lab in self.boundary_edges.items():
            k = index.get(key)
            if k is None:
                raise GeometryError(f"labeled edge {key} is not an edge of the mesh")
            edge_label[k] = BOUNDARY_LABELS.index(lab) if lab in BOUNDARY_LABELS else -2
        for arr in (edges, tri_edges, edge_tris, edge_label):
            arr.setflags(write=False)
        return Topology(edges, tri_edges, edge_tris, edge_label, len(self.vertices))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def edges(self) -> np.ndarray:
        return self.topology.edges

    @cached_property
    def p2_cells(self) -> np.ndarray:
        """(nt, 6) P2 node indices: three vertices then midpoints of edges 01, 12, 20."""
        topo = self.topology
        cells = np.hstack([self.triangles, self.n_vertices + topo.tri_edges])
        cells.setflags(write=False)
        return cells

    @property
    def n_p2(self) -> int:
        return self.topology.n_p2

    @cached_property
    def p2_nodes(self) -> np.ndarray:
        """Coordinates of all P2 nodes (vertices first, then straight edge midpoints)."""
        e = self.topology.edges
        mid = 0.5 * (self.vertices[e[:, 0]] + self.vertices[e[:, 1]])
        nodes = np.vstack([self.vertices, mid])
        nodes.setflags(write=False)
        return nodes

    def edges_with_label(self, labels: str | Iterable[str]) -> np.ndarray:
        if isinstance(labels, str):
            labels = (labels,)
        codes = [BOUNDARY_LABELS.index(lab) for lab in labels]
        return np.flatnonzero(np.isin(self.topology.edge_label, codes))

    def vertices_on(self, labels: str | Iterable[str]) -> np.ndarray:
        e = self.edges_with_label(labels)
        return np.unique(self.topology.edges[e].ravel())

    def p2_nodes_on(self, labels: str | Iterable[str]) -> np.ndarray:
        """Sorted P2 node indices lying on edges carrying any of ``labels``."""
        e = self.edges_with_label(labels)
        ends = self.topology.edges[e].ravel()
        return np.unique(np.concatenate([ends, self.n_vertices + e]))

    def region_vertices(self, region: int) -> np.ndarray:
        return np.unique(self.triangles[self.region == region].ravel())

    @cached_property
    def interface_vertices(self) -> np.ndarray:
        v = np.intersect1d(self.region_vertices(FLUID), self.region_vertices(SOLID))
        v.setflags(write=False)
        return v

    @cached_property
    def region_p2_nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """P2 nodes touched by fluid triangles and by solid triangles."""
        cells = self.p2_cells
        return (np.unique(cells[self.region == FLUID]), np.unique(cells[self.region == SOLID]))

    @cached_property
    def broken_p1(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Layout of the region-wise continuous P1 space.

        Returns ``(cell_dofs, dof_vertex, dof_region)``. Fluid DOFs come first;
        vertices shared by both regions carry one DOF per side.
        """
        fluid_v = self.region_vertices(FLUID)
        solid_v = self.region_vertices(SOLID)
        nv = self.n_vertices
        fmap = -np.ones(nv, dtype=np.int64)
        smap = -np.ones(nv, dtype=np.int64)
        fmap[fluid_v] = np.arange(len(fluid_v))
        smap[solid_v] = len(fluid_v) + np.arange(len(solid_v))
        cell = np.where((self.region == FLUID)[:, None], fmap[self.triangles], smap[self.triangles])
        dof_vertex = np.concatenate([fluid_v, solid_v])
        dof_region = np.concatenate([np.full(len(fluid_v), FLUID), np.full(len(solid_v), SOLID)]).astype(np.int8)
        for arr in (cell, dof_vertex, dof_region):
            arr.setflags(write=False)
        return cell, dof_vertex, dof_region

    # -- geometry ---------------------------------------------------------

    @cached_property
    def areas(self) -> np.ndarray:
        a = signed_areas(self.vertices, self.triangles)
        a.setflags(write=False)
        return a

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def _inverse_maps(self) -> np.ndarray:
        """Per-triangle inverse of the affine map [b - a, c - a]."""
        x = self.vertices[self.triangles]
        jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
        return np.linalg.inv(jac)

    @cached_property
    def _centroid_tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    def region_area(self, region: int) -> float:
        return float(self.areas[self.region == region].sum())

    def total_area(self) -> float:
        return float(self.areas.sum())

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same connectivity and labels at new vertex positions."""
        new = TriMesh.__new__(TriMesh)
        new.__dict__["topology"] = self.topology
        for name in ("p2_cells", "interface_vertices", "region_p2_nodes", "broken_p1"):
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        object.__setattr__(new, "vertices", vertices)
        object.__setattr__(new, "triangles", self.triangles)
        object.__setattr__(new, "region", self.region)
        object.__setattr__(new, "boundary_edges", self.boundary_edges)
        new.__post_init__()
        return new

    def __repr__(self) -> str:
        nf = int((self.region == FLUID).sum())
        return f"TriMesh(nv={self.n_vertices}, nt={self.n_triangles}, fluid={nf}, solid={self.n_triangles - nf})"


def label_edges(vertices: np.ndarray, triangles: np.ndarray, region: np.ndarray, classify) -> dict:
    """Label every boundary edge via ``classify(midpoint) -> label`` and tag fluid/solid edges."""
    edges, _, edge_tris = _build_topology(len(vertices), np.asarray(triangles))
    region = np.asarray(region)
    labels = {}
    for k, (a, b) in enumerate(edges):
        t0, t1 = edge_tris[k]
        if t1 < 0:
            labels[(int(a), int(b))] = classify(0.5 * (vertices[a] + vertices[b]))
        elif region[t0] != region[t1]:
            labels[(int(a), int(b))] = INTERFACE
    return labels


def rectangle_mesh(nx: int, ny: int, x0=0.0, x1=1.0, y0=0.0, y1=1.0, solid=None, classify=None) -> TriMesh:
    """Structured criss-cross-free triangulation of a rectangle.

    ``solid(centroid) -> bool`` tags solid triangles; ``classify(midpoint)``
    labels boundary edges (default: every boundary edge is ``wall``).
    """
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, 1:].ravel()
    d = idx[1:, :-1].ravel()
    tris = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    cent = verts[tris].mean(axis=1)
    region = np.zeros(len(tris), dtype=np.int8)
    if solid is not None:
        region[[bool(solid(p)) for p in cent]] = SOLID
    labels = label_edges(verts, tris, region, classify or (lambda p: WALL))
    return TriMesh(verts, tris, region, labels)


# -- benchmark geometry ------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkGeometry:
    """Channel ``[0, L] x [0, H]`` with a cylinder and an attached flag (metres)."""

    L: float = 2.5
    H: float = 0.41
    cx: float = 0.2
    cy: float = 0.2
    r: float = 0.05
    l: float = 0.35
    h: float = 0.02

    def validate(self) -> None:
        for name in ("L", "H", "r", "l", "h"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive, got {getattr(self, name)}")
        if self.h >= 2 * self.r:
            raise GeometryError("flag thickness must be smaller than the cylinder diameter")
        if not (self.cx - self.r > 0 and self.cy - self.r > 0 and self.cy + self.r < self.H):
            raise GeometryError("cylinder must lie strictly inside the channel")
        if not self.tip_x < self.L:
            raise GeometryError(f"flag tip x={self.tip_x:g} leaves the channel (L={self.L:g})")
        if not (self.cy - self.h / 2 > 0 and self.cy + self.h / 2 < self.H):
            raise GeometryError("flag leaves the channel vertically")

    @property
    def root_x(self) -> float:
        """x of the two points where the flag meets the cylinder."""
        return self.cx + math.sqrt(self.r**2 - (self.h / 2) ** 2)

    @property
    def tip_x(self) -> float:
        return self.cx + self.r + self.l

    @property
    def control_point(self) -> tuple[float, float]:
        """Midline point of the flag tip (control point A)."""
        return (self.tip_x, self.cy)


def _size_function(geom: BenchmarkGeometry):
    """Relative element size: fine at the cylinder and flag, coarse far away."""
    cyl = np.array([geom.cx, geom.cy])
    tip = np.array([geom.tip_x, geom.cy])
    x_lo, x_hi = geom.root_x, geom.tip_x
    y_lo, y_hi = geom.cy - geom.h / 2, geom.cy + geom.h / 2

    def size(p: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p)
        d_cyl = np.abs(np.hypot(p[:, 0] - cyl[0], p[:, 1] - cyl[1]) - geom.r)
        dx = np.maximum(np.maximum(x_lo - p[:, 0], p[:, 0] - x_hi), 0.0)
        dy = np.maximum(np.maximum(y_lo - p[:, 1], p[:, 1] - y_hi), 0.0)
        d_flag = np.hypot(dx, dy)
        d_tip = np.hypot(p[:, 0] - tip[0], p[:, 1] - tip[1])
        # wake band behind the flag
        d_wake = np.where(p[:, 0] > tip[0], np.abs(p[:, 1] - geom.cy), np.inf)
        h = np.minimum.reduce(
            [
                np.full(len(p), 0.055),
                0.011 + 0.30 * d_cyl,
                0.012 + 0.30 * d_flag,
                0.009 + 0.30 * d_tip,
                0.030 + 0.30 * d_wake,
            ]
        )
        return h

    return size


def _benchmark_pslg(geom: BenchmarkGeometry, scale: float, size) -> dict:
    L, H = geom.L, geom.H
    cx, cy, r = geom.cx, geom.cy, geom.r
    pts: list[tuple[float, float]] = [(0.0, 0.0), (L, 0.0), (L, H), (0.0, H)]
    segs = [(0, 1), (1, 2), (2, 3), (3, 0)]

    theta_a = math.asin(geom.h / (2 * r))
    h_cyl = scale * float(size(np.array([[cx + r, cy]]))[0])
    h_cyl = min(h_cyl, scale * float(size(np.array([[cx - r, cy]]))[0]))
    n_free = max(16, int(math.ceil((2 * math.pi - 2 * theta_a) * r / h_cyl)))
    n_root = max(1, int(math.ceil(2 * theta_a * r / h_cyl)))
    # circle polygon counter-clockwise starting at the lower attachment point
    angles = [-theta_a + 2 * theta_a * k / n_root for k in range(n_root)]
    angles += [theta_a + (2 * math.pi - 2 * theta_a) * k / n_free for k in range(n_free)]
    c0 = len(pts)
    pts += [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in angles]
    nc = len(angles)
    segs += [(c0 + k, c0 + (k + 1) % nc) for k in range(nc)]
    low, up = c0, c0 + n_root  # attachment points
    xt = geom.tip_x
    f0 = len(pts)
    pts += [(xt, cy - geom.h / 2), (xt, cy), (xt, cy + geom.h / 2)]
    segs += [(low, f0), (f0, f0 + 1), (f0 + 1, f0 + 2), (f0 + 2, up)]
    regions = [
        [0.5 * (cx - r), cy, FLUID, 0.0],
        [0.5 * (geom.root_x + xt), cy, SOLID, 0.0],
    ]
    return {
        "vertices": np.array(pts, dtype=float),
        "segments": np.array(segs, dtype=np.int32),
        "holes": np.array([[cx, cy]], dtype=float),
        "regions": np.array(regions, dtype=float),
    }


def _triangulate(geom: BenchmarkGeometry, scale: float, size) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    import triangle

    pslg = _benchmark_pslg(geom, scale, size)
    a_far = math.sqrt(3) / 4 * (scale * 0.055) ** 2
    out = triangle.triangulate(pslg, f"pq30Aa{a_far:.12f}")
    for _ in range(12):
        verts, tris = out["vertices"], out["triangles"]
        cent = verts[tris].mean(axis=1)
        target = math.sqrt(3) / 4 * (scale * size(cent)) ** 2
        areas = np.abs(signed_areas(verts, tris))
        if np.all(areas <= 1.5 * target):
            break
        out = triangle.triangulate(
            {
                "vertices": verts,
                "triangles": tris,
                "segments": out["segments"],
                "holes": pslg["holes"],
                "triangle_attributes": out["triangle_attributes"],
                "triangle_max_area": target,
            },
            "rpq30Aa",
        )
    verts = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=np.int64)
    region = np.rint(out["triangle_attributes"][:, 0]).astype(np.int8)
    return verts, tris, region


def build_benchmark_mesh(geom: BenchmarkGeometry, target_vertex_count: int) -> TriMesh:
    """Triangulate the flag-behind-cylinder channel with roughly ``target_vertex_count`` vertices.

    Element size is graded from the cylinder, the flag and its tip; a global
    scale factor is adjusted until the vertex count is within 5 % of the target.
    The flag tip midpoint (control point A) is always a mesh vertex.
    """
    geom.validate()
    if int(target_vertex_count) < 500:
        raise GeometryError("target_vertex_count must be at least 500")
    target = int(target_vertex_count)
    size = _size_function(geom)
    scale = 1.0
    best = None
    for _ in range(10):
        verts, tris, region = _triangulate(geom, scale, size)
        n = len(verts)
        if best is None or abs(n - target) < abs(len(best[0]) - target):
            best = (verts, tris, region)
        if abs(n - target) <= 0.05 * target:
            break
        scale *= math.sqrt(n / target)
    verts, tris, region = best

    areas = signed_areas(verts, tris)
    flip = areas < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    L, H = geom.L, geom.H
    tol = 1e-9 * max(L, H)

    def classify(p):
        if abs(p[0]) < tol:
            return INLET
        if abs(p[0] - L) < tol:
            return OUTLET
        if abs(p[1]) < tol or abs(p[1] - H) < tol:
            return WALL
        if math.hypot(p[0] - geom.cx, p[1] - geom.cy) < geom.r * 1.01:
            return CYLINDER
        raise GeometryError(f"boundary edge at {p} is on no known boundary")

    labels = label_edges(verts, tris, region, classify)
    mesh = TriMesh(verts, tris, region, labels)
    if not ((mesh.region == SOLID).any() and (mesh.region == FLUID).any()):
        raise GeometryError("benchmark mesh lacks a fluid or a solid region")
    logger.info("benchmark mesh: %r", mesh)
    return mesh


# -- point location ----------------------------------------------------------


def barycentric(mesh: TriMesh, tri: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``points[i]`` with respect to triangle ``tri[i]``."""
    tri = np.asarray(tri)
    points = np.asarray(points, dtype=float)
    a = mesh.vertices[mesh.triangles[tri, 0]]
    lam = np.einsum("...ij,...j->...i", mesh._inverse_maps[tri], points - a)
    return np.concatenate([1.0 - lam.sum(axis=-1, keepdims=True), lam], axis=-1)


def locate_points(mesh: TriMesh, points: np.ndarray, tol: float = BARY_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized point location.

    Returns ``(tri, bary)``; ``tri[i] == -1`` marks points outside the mesh.
    Candidates come from the nearest centroids; misses fall back to a scan of
    every triangle.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(points)
    tri = -np.ones(n, dtype=np.int64)
    bary = np.zeros((n, 3))
    if n == 0:
        return tri, bary
    k = min(10, mesh.n_triangles)
    _, cand = mesh._centroid_tree.query(points, k=k)
    cand = cand.reshape(n, k)
    lam = barycentric(mesh, cand, points[:, None, :])
    score = lam.min(axis=2)
    best = np.argmax(score, axis=1)
    rows = np.arange(n)
    ok = score[rows, best] >= -tol
    tri[ok] = cand[rows[ok], best[ok]]
    bary[ok] = lam[rows[ok], best[ok]]
    for i in np.flatnonzero(~ok):
        lam_all = barycentric(mesh, np.arange(mesh.n_triangles), np.broadcast_to(points[i], (mesh.n_triangles, 2)))
        s = lam_all.min(axis=1)
        j = int(np.argmax(s))
        if s[j] >= -tol:
            tri[i] = j
            bary[i] = lam_all[j]
    return tri, bary


def locate_point(mesh: TriMesh, x) -> tuple[int, np.ndarray] | None:
    """Containing triangle and barycentric coordinates of ``x``, or ``None``."""
    tri, bary = locate_points(mesh, np.asarray(x, dtype=float)[None, :])
    if tri[0] < 0:
        return None
    return int(tri[0]), bary[0]


def nearest_boundary_points(mesh: TriMesh, points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project points onto the closest outer boundary edge.

    Returns ``(projected, tri, bary)`` where ``tri`` is the triangle owning the edge.
    """
    topo = mesh.topology
    bnd = np.flatnonzero(topo.edge_tris[:, 1] < 0)
    a = mesh.vertices[topo.edges[bnd, 0]]
    b = mesh.vertices[topo.edges[bnd, 1]]
    ab = b - a
    len2 = np.einsum("ij,ij->i", ab, ab)
    points = np.atleast_2d(points)
    out = np.empty_like(points)
    tri = np.empty(len(points), dtype=np.int64)
    for i, p in enumerate(points):
        s = np.clip(np.einsum("ij,ij->i", p - a, ab) / len2, 0.0, 1.0)
        q = a + s[:, None] * ab
        d2 = np.einsum("ij,ij->i", q - p, q - p)
        j = int(np.argmin(d2))
        out[i] = q[j]
        tri[i] = topo.edge_tris[bnd[j], 0]
    bary = barycentric(mesh, tri, out)
    bary = np.clip(bary, 0.0, None)
    bary /= bary.sum(axis=1, keepdims=True)
    return out, tri, bary


# -- mesh motion -------------------------------------------------------------


def move_vertices(mesh: TriMesh, vertex_velocity: np.ndarray, dt: float) -> TriMesh:
    """Return the mesh with every vertex ``q`` moved to ``q + dt * v``.

    Raises :class:`MeshInversion` naming the first triangle whose signed area
    is no longer positive.
    """
    v = np.asarray(vertex_velocity, dtype=float)
    if v.shape != mesh.vertices.shape:
        raise ValueError(f"vertex_velocity must have shape {mesh.vertices.shape}, got {v.shape}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not np.any(v):
        return mesh
    return mesh.with_vertices(mesh.vertices + dt * v)


def p1_stiffness(mesh: TriMesh, triangles: np.ndarray | None = None) -> sparse.csr_matrix:
    """P1 Laplacian assembled over the selected triangles (all by default)."""
    sel = np.arange(mesh.n_triangles) if triangles is None else np.asarray(triangles)
    tri = mesh.triangles[sel]
    x = mesh.vertices[tri]
    area = mesh.areas[sel]
    # gradients of barycentric functions: rotate opposite edge vectors
    e = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    grad = np.stack([-e[..., 1], e[..., 0]], axis=-1) / (2 * area[:, None, None])
    local = area[:, None, None] * np.einsum("kid,kjd->kij", grad, grad)
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    n = mesh.n_vertices
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def laplace_extension(
    mesh: TriMesh,
    interface_values: np.ndarray,
    zero_boundary: Iterable[str] = OUTER_LABELS,
) -> np.ndarray:
    """Discrete harmonic extension of interface data into the fluid region.

    ``interface_values[k]`` is the 2D value at ``mesh.interface_vertices[k]``.
    Vertices on edges labeled with any of ``zero_boundary`` are held at zero;
    the remaining fluid boundary is natural. Returns an ``(nv, 2)`` array whose
    solid-only rows are zero.
    """
    from .linalg import Factorization, apply_dirichlet

    iface = mesh.interface_vertices
    vals = np.asarray(interface_values, dtype=float).reshape(len(iface), 2)
    fluid_tris = np.flatnonzero(mesh.region == FLUID)
    n = mesh.n_vertices
    out = np.zeros((n, 2))
    if len(fluid_tris) == 0:
        return out
    A = p1_stiffness(mesh, fluid_tris)
    fluid_v = mesh.region_vertices(FLUID)
    zero_v = np.setdiff1d(mesh.vertices_on(tuple(zero_boundary)) if zero_boundary else np.array([], int), iface)
    fixed_values = np.zeros((n, 2))
    fixed = np.zeros(n, dtype=bool)
    fixed[zero_v] = True
    fixed[iface] = True
    fixed_values[iface] = vals
    # vertices outside the fluid region are not unknowns
    outside = np.ones(n, dtype=bool)
    outside[fluid_v] = False
    fixed |= outside

    # each connected fluid component needs at least one prescribed vertex
    ncomp, comp = csgraph.connected_components(A, directed=False)
    anchored = np.zeros(ncomp, dtype=bool)
    anchored[np.unique(comp[fixed & ~outside])] = True
    floating = np.unique(comp[fluid_v][~anchored[comp[fluid_v]]])
    if len(floating):
        raise SingularMatrix(None, "fluid region component without Dirichlet data; Laplace problem is singular")

    dofs = np.flatnonzero(fixed)
    Ac, _ = apply_dirichlet(A, np.zeros(n), list(zip(dofs.tolist(), [0.0] * len(dofs))))
    rhs = -(A @ fixed_values)
    rhs[dofs] = fixed_values[dofs]
    out[:] = Factorization(Ac).solve(rhs)
    out[outside] = 0.0
    out[iface] = vals
    return out


# -- text export -------------------------------------------------------------

MESH_HEADER = "NCFSI-MESH v1"


def _fmt(x: float) -> str:
    return repr(float(x))


def format_mesh(mesh: TriMesh) -> str:
    """ASCII mesh record; byte-stable for identical meshes."""
    lines = [MESH_HEADER, str(mesh.n_vertices)]
    lines += [f"{_fmt(x)} {_fmt(y)}" for x, y in mesh.vertices]
    lines.append(str(mesh.n_triangles))
    lines += [f"{i} {j} {k} {REGION_NAMES[r]}" for (i, j, k), r in zip(mesh.triangles.tolist(), mesh.region.tolist())]
    edges = sorted(mesh.boundary_edges.items())
    lines.append(f"EDGES {len(edges)}")
    lines += [f"{i} {j} {lab}" for (i, j), lab in edges]
    return "\n".join(lines) + "\n"


def parse_mesh(lines: list[str], start: int = 0) -> tuple[TriMesh, int]:
    """Inverse of :func:`format_mesh`; returns the mesh and the next line index."""
    pos = start
    if lines[pos].strip() != MESH_HEADER:
        raise ValueError(f"line {pos + 1}: expected {MESH_HEADER!r}")
    pos += 1
    nv = int(lines[pos]); pos += 1
    verts = np.array([[float(s) for s in lines[pos + i].split()] for i in range(nv)]).reshape(nv, 2)
    pos += nv
    nt = int(lines[pos]); pos += 1
    tris, region = [], []
    for i in range(nt):
        a, b, c, r = lines[pos + i].split()
        tris.append((int(a), int(b), int(c)))
        region.append(REGION_NAMES.index(r))
    pos += nt
    tag, ne = lines[pos].split()
    if tag != "EDGES":
        raise ValueError(f"line {pos + 1}: expected EDGES block")
    pos += 1
    labels = {}
    for i in range(int(ne)):
        a, b, lab = lines[pos + i].split()
        labels[(int(a), int(b))] = lab
    pos += int(ne)
    return TriMesh(verts, np.array(tris, dtype=np.int64), np.array(region), labels), pos
