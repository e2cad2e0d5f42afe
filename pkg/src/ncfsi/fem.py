"""Lagrange P1/P2 elements on triangles, quadrature, DOF layout and FE fields."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

from .errors import PointOutsideDomain
from .mesh import TriMesh, locate_points

P1 = "P1"  # continuous, one value per vertex
P1B = "P1b"  # continuous inside each region, duplicated across the interface
P2 = "P2"
P2V = "P2v"
SPACES = (P1, P1B, P2, P2V)

# reference-gradient of barycentric coordinates (l0 = 1 - xi - eta, l1 = xi, l2 = eta)
_DLAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_P2_EDGES = ((0, 1), (1, 2), (2, 0))


def eval_basis(space: str, bary) -> tuple[np.ndarray, np.ndarray]:
    """Basis values and reference-coordinate gradients at barycentric points.

    ``bary`` has shape ``(..., 3)``. Returns values ``(..., nb)`` and gradients
    ``(..., nb, 2)`` with ``nb`` = 3 for P1 and 6 for P2 (vertices first, then
    midpoints of edges 01, 12, 20).
    """
    lam = np.asarray(bary, dtype=float)
    if space in (P1, P1B):
        vals = lam.copy()
        grads = np.broadcast_to(_DLAM, lam.shape[:-1] + (3, 2)).copy()
        return vals, grads
    if space not in (P2, P2V):
        raise ValueError(f"unknown space {space!r}")
    vals = np.empty(lam.shape[:-1] + (6,))
    grads = np.empty(lam.shape[:-1] + (6, 2))
    for i in range(3):
        vals[..., i] = lam[..., i] * (2 * lam[..., i] - 1)
        grads[..., i, :] = (4 * lam[..., i] - 1)[..., None] * _DLAM[i]
    for k, (i, j) in enumerate(_P2_EDGES):
        vals[..., 3 + k] = 4 * lam[..., i] * lam[..., j]
        grads[..., 3 + k, :] = 4 * (lam[..., j][..., None] * _DLAM[i] + lam[..., i][..., None] * _DLAM[j])
    return vals, grads


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,), sum = 1/2


def quadrature_rule() -> QuadratureRule:
    """Six-point symmetric rule, exact for polynomials of degree 4."""
    a, wa = 0.445948490915964886318329253883, 0.111690794839005732847503504216
    b, wb = 0.091576213509770743459571463402, 0.054975871827660933819163162450
    pts = []
    for x, _ in ((a, wa), (b, wb)):
        y = 1.0 - 2.0 * x
        pts += [(y, x, x), (x, y, x), (x, x, y)]
    weights = np.array([wa] * 3 + [wb] * 3)
    return QuadratureRule(np.array(pts), weights)


def element_maps(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Jacobian determinants ``(nt,)`` and inverse-transposed Jacobians ``(nt, 2, 2)``."""
    x = mesh.vertices[mesh.triangles]
    jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_t = np.empty_like(jac)
    inv_t[:, 0, 0] = jac[:, 1, 1] / det
    inv_t[:, 0, 1] = -jac[:, 1, 0] / det
    inv_t[:, 1, 0] = -jac[:, 0, 1] / det
    inv_t[:, 1, 1] = jac[:, 0, 0] / det
    return det, inv_t


def physical_gradients(inv_t: np.ndarray, ref_grads: np.ndarray) -> np.ndarray:
    """Map reference gradients ``(nq, nb, 2)`` to every element: ``(nt, nq, nb, 2)``."""
    return np.einsum("tij,qbj->tqbi", inv_t, ref_grads)


class MixedSpace:
    """Global DOF layout of the monolithic unknown.

    Ordering: u_x (P2), u_y (P2), omega (P2), p (broken P1). The displacement
    lives in its own ``2 * n_p2`` vector outside the linear system.
    """

    def __init__(self, mesh: TriMesh, with_microrotation: bool = True):
        self.mesh = mesh
        self.with_microrotation = with_microrotation
        self.n_p2 = mesh.n_p2
        cell_p, self.pressure_vertex, self.pressure_region = mesh.broken_p1
        self.pressure_cells = cell_p
        self.n_pressure = len(self.pressure_vertex)
        self.n_velocity_dofs = 2 * self.n_p2
        self.n_microrotation_dofs = self.n_p2 if with_microrotation else 0
        self.n_displacement_dofs = 2 * self.n_p2
        self.velocity_offset = 0
        self.omega_offset = self.n_velocity_dofs
        self.pressure_offset = self.n_velocity_dofs + self.n_microrotation_dofs

    @property
    def n_dofs(self) -> int:
        return self.n_velocity_dofs + self.n_microrotation_dofs + self.n_pressure

    def velocity_dofs(self, component: int, nodes=None) -> np.ndarray:
        nodes = np.arange(self.n_p2) if nodes is None else np.asarray(nodes)
        return component * self.n_p2 + nodes

    def omega_dofs(self, nodes=None) -> np.ndarray:
        if not self.with_microrotation:
            raise ValueError("space built without microrotation")
        nodes = np.arange(self.n_p2) if nodes is None else np.asarray(nodes)
        return self.omega_offset + nodes

    def pressure_dofs(self) -> np.ndarray:
        return self.pressure_offset + np.arange(self.n_pressure)

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        """(nt, nloc) global DOFs per element in the order ux(6) uy(6) [w(6)] p(3)."""
        c = self.mesh.p2_cells
        blocks = [c, self.n_p2 + c]
        if self.with_microrotation:
            blocks.append(self.omega_offset + c)
        blocks.append(self.pressure_offset + self.pressure_cells)
        return np.hstack(blocks)

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | None, np.ndarray]:
        """Split a solution vector into ``(u (n_p2, 2), omega or None, p)``."""
        n = self.n_p2
        u = np.column_stack([x[:n], x[n : 2 * n]])
        w = x[self.omega_offset : self.omega_offset + n] if self.with_microrotation else None
        p = x[self.pressure_offset :]
        return u, w, p


@dataclass(frozen=True, eq=False)
class Field:
    """Finite-element function on a mesh.

    ``values`` holds nodal coefficients: shape ``(nv,)`` for P1, ``(n_pressure,)``
    for broken P1, ``(n_p2,)`` for P2 and ``(n_p2, 2)`` for P2 vectors.
    """

    space: str
    values: np.ndarray
    mesh: TriMesh

    def __post_init__(self):
        if self.space not in SPACES:
            raise ValueError(f"unknown space {self.space!r}")
        vals = np.array(self.values, dtype=float)
        expected = {
            P1: (self.mesh.n_vertices,),
            P1B: (len(self.mesh.broken_p1[1]),),
            P2: (self.mesh.n_p2,),
            P2V: (self.mesh.n_p2, 2),
        }[self.space]
        if vals.shape != expected:
            raise ValueError(f"{self.space} field on this mesh needs shape {expected}, got {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, space: str, mesh: TriMesh) -> "Field":
        shape = {
            P1: (mesh.n_vertices,),
            P1B: (len(mesh.broken_p1[1]),),
            P2: (mesh.n_p2,),
            P2V: (mesh.n_p2, 2),
        }[space]
        return cls(space, np.zeros(shape), mesh)

    @classmethod
    def from_function(cls, space: str, mesh: TriMesh, fn) -> "Field":
        """Nodal interpolant of ``fn(x, y)``."""
        if space in (P2, P2V):
            nodes = mesh.p2_nodes
        elif space == P1:
            nodes = mesh.vertices
        else:
            nodes = mesh.vertices[mesh.broken_p1[1]]
        vals = fn(nodes[:, 0], nodes[:, 1])
        vals = np.asarray(vals, dtype=float)
        if space == P2V:
            vals = np.column_stack([np.broadcast_to(v, len(nodes)) for v in vals])
        else:
            vals = np.broadcast_to(vals, len(nodes)).copy()
        return cls(space, vals, mesh)

    def with_values(self, values: np.ndarray, mesh: TriMesh | None = None) -> "Field":
        return Field(self.space, values, self.mesh if mesh is None else mesh)

    def cell_coefficients(self, tri: np.ndarray) -> np.ndarray:
        """Local coefficients ``(n, nb[, 2])`` of the given triangles."""
        if self.space in (P2, P2V):
            return self.values[self.mesh.p2_cells[tri]]
        if self.space == P1:
            return self.values[self.mesh.triangles[tri]]
        return self.values[self.mesh.broken_p1[0][tri]]

    def evaluate_in(self, tri: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Values at barycentric points inside known triangles."""
        phi, _ = eval_basis(self.space, bary)
        coef = self.cell_coefficients(tri)
        if self.space == P2V:
            return np.einsum("nb,nbc->nc", phi, coef)
        return np.einsum("nb,nb->n", phi, coef)

    def gradient_in(self, tri: np.ndarray, bary: np.ndarray) -> np.ndarray:
        """Physical gradients at barycentric points.

        Scalars give ``(n, 2)``; vectors give ``(n, 2, 2)`` with entry
        ``[j, k] = d(value_k)/dx_j``.
        """
        tri = np.asarray(tri)
        _, dref = eval_basis(self.space, bary)
        inv_t = self.mesh._inverse_maps[tri].transpose(0, 2, 1)
        dphys = np.einsum("nij,nbj->nbi", inv_t, dref)
        coef = self.cell_coefficients(tri)
        if self.space == P2V:
            return np.einsum("nbj,nbk->njk", dphys, coef)
        return np.einsum("nbj,nb->nj", dphys, coef)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tri, bary = locate_points(self.mesh, points)
        if np.any(tri < 0):
            bad = points[np.flatnonzero(tri < 0)[0]]
            raise PointOutsideDomain(f"point ({bad[0]:.6g}, {bad[1]:.6g}) is outside the mesh")
        return self.evaluate_in(tri, bary)


def interpolate(field: Field, x) -> float | np.ndarray:
    """Value of ``field`` at the point ``x``."""
    val = field.evaluate(np.asarray(x, dtype=float)[None, :])[0]
    return float(val) if field.space != P2V else val


# -- elementary matrices used by tests and the mesh extension ------------------


def assemble_mass(mesh: TriMesh, space: str = P1) -> sparse.csr_matrix:
    q = quadrature_rule()
    phi, _ = eval_basis(space, q.points)
    det, _ = element_maps(mesh)
    local = np.einsum("q,qa,qb->ab", q.weights, phi, phi)[None] * det[:, None, None]
    cells = mesh.triangles if space == P1 else mesh.p2_cells
    n = mesh.n_vertices if space == P1 else mesh.n_p2
    nb = cells.shape[1]
    rows = np.repeat(cells, nb, axis=1).ravel()
    cols = np.tile(cells, (1, nb)).ravel()
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_stiffness(mesh: TriMesh, space: str = P2) -> sparse.csr_matrix:
    q = quadrature_rule()
    _, dref = eval_basis(space, q.points)
    det, inv_t = element_maps(mesh)
    g = physical_gradients(inv_t, dref)
    local = np.einsum("q,t,tqai,tqbi->tab", q.weights, det, g, g)
    cells = mesh.triangles if space == P1 else mesh.p2_cells
    n = mesh.n_vertices if space == P1 else mesh.n_p2
    nb = cells.shape[1]
    rows = np.repeat(cells, nb, axis=1).ravel()
    cols = np.tile(cells, (1, nb)).ravel()
    return sparse.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
