"""Semi-implicit monolithic time step for the Cosserat fluid-structure system.

Each step, on the current mesh:

1. trace characteristics back from every P2 node and sample the previous
   velocity and microrotation there;
2. assemble one linear system for velocity, microrotation and the broken
   pressure (momentum, penalized continuity, linearized Mooney-Rivlin term on
   the solid, microrotation balance);
3. solve it directly;
4. update the displacement on the solid, move solid vertices with the new
   velocity and fluid vertices with its harmonic extension.

Nodal values travel with the nodes when the mesh moves, so characteristics
are traced with the velocity relative to the mesh, ``u - w``. On a fixed mesh
this is the usual foot ``x - dt u(x)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import sparse

from .errors import MeshInversion, PointOutsideDomain, SingularMatrix, SolverFailure
from .fem import (
    P1,
    P1B,
    P2,
    P2V,
    Field,
    MixedSpace,
    element_maps,
    eval_basis,
    physical_gradients,
    quadrature_rule,
)
from .linalg import Factorization, apply_dirichlet, assemble_csr
from .mesh import (
    CYLINDER,
    FLUID,
    INLET,
    OUTER_LABELS,
    SOLID,
    WALL,
    TriMesh,
    laplace_extension,
    locate_points,
    move_vertices,
    nearest_boundary_points,
)
from .physics import MaterialParams, density, extra_stress, inflow_profile

logger = logging.getLogger(__name__)

VectorFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]
ScalarFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class BoundaryConditions:
    """Dirichlet data per boundary label; unlisted labels are natural.

    Callables take ``(x, y, t)`` arrays and return ``(n, 2)`` velocities or
    ``(n,)`` microrotations. Later labels win on shared nodes.
    """

    velocity: Mapping[str, VectorFn]
    omega: Mapping[str, ScalarFn]


@dataclass(frozen=True)
class Forcing:
    """Body force ``f(x, y, t) -> (n, 2)`` and body couple ``g(x, y, t) -> (n,)``."""

    body_force: VectorFn | None = None
    body_couple: ScalarFn | None = None


def _zero_vec(x, y, t):
    return np.zeros((len(x), 2))


def _zero_scalar(x, y, t):
    return np.zeros(len(x))


def ramp_factor(t: float, t_ramp: float | None) -> float:
    if not t_ramp or t >= t_ramp:
        return 1.0
    return 0.5 * (1.0 - np.cos(np.pi * t / t_ramp))


def benchmark_conditions(params: MaterialParams, H: float, t_ramp: float | None = None) -> BoundaryConditions:
    """Parabolic inflow, no-slip walls and cylinder, zero microrotation on inlet/walls/cylinder.

    The outlet is left natural (do-nothing) for both fields.
    """

    def inlet(x, y, t):
        return ramp_factor(t, t_ramp) * inflow_profile(np.clip(y, 0.0, H), params.Ubar, H).reshape(len(y), 2)

    return BoundaryConditions(
        velocity={INLET: inlet, WALL: _zero_vec, CYLINDER: _zero_vec},
        omega={INLET: _zero_scalar, WALL: _zero_scalar, CYLINDER: _zero_scalar},
    )


@dataclass(frozen=True, eq=False)
class State:
    """Snapshot at time level n. All fields live on ``mesh``."""

    t: float
    mesh: TriMesh
    u: Field
    omega: Field
    p: Field
    d: Field
    mesh_velocity: Field
    reference_vertices: np.ndarray = field(repr=False)
    step: int = 0

    def __post_init__(self):
        for name, space in (("u", P2V), ("omega", P2), ("p", P1B), ("d", P2V), ("mesh_velocity", P2V)):
            f = getattr(self, name)
            if f.space != space:
                raise ValueError(f"{name} must be a {space} field")
            if f.mesh is not self.mesh:
                raise ValueError(f"{name} does not live on the state mesh")


def initial_state(mesh: TriMesh, t: float = 0.0) -> State:
    """Quiescent state: zero velocity, microrotation, pressure and displacement."""
    z = Field.zeros(P2V, mesh)
    return State(
        t=t,
        mesh=mesh,
        u=z,
        omega=Field.zeros(P2, mesh),
        p=Field.zeros(P1B, mesh),
        d=z,
        mesh_velocity=z,
        reference_vertices=mesh.vertices,
    )


@dataclass(eq=False)
class LinearSystem:
    """Monolithic system after Dirichlet elimination.

    ``matrix`` has identity rows on constrained DOFs; ``raw_matrix`` is the
    assembled operator before constraints.
    """

    matrix: sparse.csr_matrix
    rhs: np.ndarray
    constraints: list[tuple[int, float]]
    space: MixedSpace
    raw_matrix: sparse.csr_matrix
    raw_rhs: np.ndarray
    solution: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def solve(self) -> np.ndarray:
        """Direct solve; a structurally decoupled microrotation block is solved on its own.

        With ``mu_r = 0`` the (u, p) block is then factored exactly as in a run
        without microrotation, so the two trajectories agree bitwise.
        """
        A = self.matrix.tocsr()
        if self.space.with_microrotation:
            w = self.space.omega_dofs()
            rest = np.setdiff1d(np.arange(self.n), w)
            if A[w][:, rest].count_nonzero() == 0 and A[rest][:, w].count_nonzero() == 0:
                x = np.zeros(self.n)
                x[rest] = Factorization(A[rest][:, rest]).solve(self.rhs[rest])
                x[w] = Factorization(A[w][:, w]).solve(self.rhs[w])
                self.solution = x
                return x
        self.solution = Factorization(A).solve(self.rhs)
        return self.solution


# -- characteristics -----------------------------------------------------------


def _trace(mesh: TriMesh, points: np.ndarray, velocity: np.ndarray, dt: float):
    feet = points - dt * velocity
    tri, bary = locate_points(mesh, feet)
    out = np.flatnonzero(tri < 0)
    if len(out):
        proj, ptri, pbary = nearest_boundary_points(mesh, feet[out])
        feet[out] = proj
        tri[out] = ptri
        bary[out] = pbary
    return feet, tri, bary


def characteristic_feet(points: np.ndarray, u_n: Field, dt: float) -> np.ndarray:
    """``x - dt u_n(x)`` for many points; feet outside the domain are projected onto its boundary."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vel = u_n.evaluate(points)
    feet, _, _ = _trace(u_n.mesh, points, vel, dt)
    return feet


def characteristic_foot(x, u_n: Field, dt: float) -> np.ndarray:
    """Foot of the backward characteristic through ``x`` after one step ``dt``."""
    return characteristic_feet(np.asarray(x, dtype=float)[None, :], u_n, dt)[0]


def _node_coordinates(f: Field) -> np.ndarray:
    if f.space in (P2, P2V):
        return f.mesh.p2_nodes
    if f.space == P1:
        return f.mesh.vertices
    raise ValueError("broken P1 fields are not convected")


def convect(field_: Field, u_n: Field, dt: float) -> Field:
    """Nodal interpolant of ``field o X`` with ``X(x) = x - dt u_n(x)``."""
    if u_n.space != P2V or u_n.mesh is not field_.mesh:
        raise ValueError("transport velocity must be a P2 vector field on the same mesh")
    nodes = _node_coordinates(field_)
    vel = u_n.values if field_.space in (P2, P2V) else u_n.values[: field_.mesh.n_vertices]
    if not np.any(vel):
        return field_
    _, tri, bary = _trace(field_.mesh, nodes, vel, dt)
    return field_.with_values(field_.evaluate_in(tri, bary))


def _convect_many(mesh: TriMesh, transport: np.ndarray, dt: float, fields: list[Field]) -> list[np.ndarray]:
    if not np.any(transport):
        return [f.values for f in fields]
    _, tri, bary = _trace(mesh, mesh.p2_nodes, transport, dt)
    return [f.evaluate_in(tri, bary) for f in fields]


# -- assembly ------------------------------------------------------------------


class _Reference:
    """Reference-element tables shared by all assemblies."""

    def __init__(self):
        q = quadrature_rule()
        self.weights = q.weights
        self.points = q.points
        self.phi, self.dphi = eval_basis(P2, q.points)  # (nq, 6), (nq, 6, 2)
        self.psi, _ = eval_basis(P1, q.points)  # (nq, 3)


_REF = _Reference()


def _dirichlet(mesh: TriMesh, space: MixedSpace, bcs: BoundaryConditions, t: float) -> list[tuple[int, float]]:
    nodes_xy = mesh.p2_nodes
    n = space.n_p2
    ux = np.full(n, np.nan)
    uy = np.full(n, np.nan)
    for label, fn in bcs.velocity.items():
        nodes = mesh.p2_nodes_on(label)
        if len(nodes) == 0:
            continue
        vals = np.asarray(fn(nodes_xy[nodes, 0], nodes_xy[nodes, 1], t), dtype=float).reshape(len(nodes), 2)
        ux[nodes] = vals[:, 0]
        uy[nodes] = vals[:, 1]
    fixed = np.flatnonzero(~np.isnan(ux))
    dofs = [np.concatenate([fixed, n + fixed])]
    values = [np.concatenate([ux[fixed], uy[fixed]])]
    if space.with_microrotation:
        w = np.full(n, np.nan)
        for label, fn in bcs.omega.items():
            nodes = mesh.p2_nodes_on(label)
            if len(nodes) == 0:
                continue
            w[nodes] = np.asarray(fn(nodes_xy[nodes, 0], nodes_xy[nodes, 1], t), dtype=float).reshape(len(nodes))
        fw = np.flatnonzero(~np.isnan(w))
        dofs.append(space.omega_offset + fw)
        values.append(w[fw])
    dofs = np.concatenate(dofs)
    values = np.concatenate(values)
    return list(zip(dofs.tolist(), values.tolist()))


def assemble_monolithic(
    state: State,
    params: MaterialParams,
    dt: float,
    bcs: BoundaryConditions | None = None,
    forcing: Forcing | None = None,
    *,
    with_microrotation: bool = True,
    convected: tuple[np.ndarray, np.ndarray | None] | None = None,
) -> LinearSystem:
    """Assemble the coupled system for ``(u, omega, p)`` at ``t + dt`` on the current mesh.

    ``convected`` optionally supplies the characteristic samples
    ``(u o X, omega o X)`` at P2 nodes; by default they are computed here.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    mesh = state.mesh
    for f in (state.u, state.omega, state.d, state.mesh_velocity):
        if f.mesh is not mesh:
            raise ValueError("state fields and mesh disagree")
    bcs = bcs if bcs is not None else BoundaryConditions({}, {})
    forcing = forcing or Forcing()
    t_new = state.t + dt
    space = MixedSpace(mesh, with_microrotation=with_microrotation)

    if convected is None:
        transport = state.u.values - state.mesh_velocity.values
        fields = [state.u] + ([state.omega] if with_microrotation else [])
        samples = _convect_many(mesh, transport, dt, fields)
        u_star = samples[0]
        w_star = samples[1] if with_microrotation else None
    else:
        u_star, w_star = convected

    R = _REF
    det, inv_t = element_maps(mesh)
    jxw = det[:, None] * R.weights[None, :]  # (nt, nq)
    g = physical_gradients(inv_t, R.dphi)  # (nt, nq, 6, 2)
    phi, psi = R.phi, R.psi
    rho = density(mesh, params)
    nt = mesh.n_triangles
    nu = 6

    mass = np.einsum("tq,qa,qb->tab", jxw, phi, phi)
    gg = np.einsum("tq,tqik,tqjl->tijkl", jxw, g, g)  # d_k phi_i d_l phi_j
    lap = gg[..., 0, 0] + gg[..., 1, 1]
    visc = params.mu + params.mu_r

    nw = nu if with_microrotation else 0
    nloc = 2 * nu + nw + 3
    K = np.zeros((nt, nloc, nloc))
    F = np.zeros((nt, nloc))
    sx, sy = slice(0, nu), slice(nu, 2 * nu)
    comps = (sx, sy)
    sw = slice(2 * nu, 2 * nu + nw)
    sp = slice(2 * nu + nw, nloc)

    rdt = (rho / dt)[:, None, None]
    # stress (mu + mu_r)(grad u + grad u^T) tested against grad v, i.e. half of Du:Dv
    for b in range(2):
        for a in range(2):
            blk = visc * gg[..., a, b]
            if a == b:
                blk = blk + visc * lap + rdt * mass
            K[:, comps[b], comps[a]] += blk

    # momentum-pressure and continuity blocks
    div = np.einsum("tq,qk,tqia->tiak", jxw, psi, g)  # d_a phi_i * psi_k
    for a in range(2):
        K[:, comps[a], sp] -= div[:, :, a, :]
        K[:, sp, comps[a]] -= div[:, :, a, :].transpose(0, 2, 1)
    K[:, sp, sp] += params.zeta * np.einsum("tq,qk,ql->tkl", jxw, psi, psi)

    # history term
    coef_u = u_star[mesh.p2_cells]  # (nt, 6, 2)
    F[:, sx] += (rho / dt)[:, None] * np.einsum("tab,tb->ta", mass, coef_u[..., 0])
    F[:, sy] += (rho / dt)[:, None] * np.einsum("tab,tb->ta", mass, coef_u[..., 1])

    xq = None
    if forcing.body_force is not None or forcing.body_couple is not None:
        xv = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
        xq = np.einsum("qk,tkd->tqd", R.points, xv)
    if forcing.body_force is not None:
        fq = np.asarray(forcing.body_force(xq[..., 0].ravel(), xq[..., 1].ravel(), t_new), dtype=float)
        fq = fq.reshape(nt, -1, 2)
        F[:, sx] += np.einsum("tq,qa,tq->ta", jxw, phi, fq[..., 0])
        F[:, sy] += np.einsum("tq,qa,tq->ta", jxw, phi, fq[..., 1])

    # linearized Mooney-Rivlin term on the solid
    solid = np.flatnonzero(mesh.region == SOLID)
    if len(solid) and params.c3 != 0.0:
        gs = g[solid]
        w_s = jxw[solid]
        d_coef = state.d.values[mesh.p2_cells[solid]]  # (ns, 6, 2)
        G = np.einsum("tqij,tik->tqjk", gs, d_coef)  # G[j, k] = d_j d_k
        T = extra_stress(G)
        ggs = gg[solid]
        gd = np.einsum("tq,tqba,tqik,tqjk->tijba", w_s, G, gs, gs)
        hh = np.einsum("tq,tqma,tqim,tqjb->tijab", w_s, G, gs, gs)
        c = params.c3 * dt * 2.0
        for b in range(2):
            for a in range(2):
                blk = ggs[..., a, b] - gd[..., b, a] - hh[..., a, b]
                if a == b:
                    blk = blk + lap[solid]
                K[solid, comps[b], comps[a]] += c * blk
        rhs_s = -2.0 * params.c3 * np.einsum("tq,tqmb,tqim->tib", w_s, T, gs)
        F[solid, sx] += rhs_s[..., 0]
        F[solid, sy] += rhs_s[..., 1]

    if with_microrotation:
        rI = (rho * params.micro_inertia / dt)[:, None, None]
        K[:, sw, sw] += rI * mass + params.lambda1 * lap + 4.0 * params.mu_r * mass
        if params.mu_r != 0.0:
            cm = np.einsum("tq,qi,tqjk->tijk", jxw, phi, g)  # phi_i d_k phi_j
            m2 = 2.0 * params.mu_r
            K[:, sx, sw] -= m2 * cm[..., 1]
            K[:, sy, sw] += m2 * cm[..., 0]
            K[:, sw, sx] += m2 * cm[..., 1]
            K[:, sw, sy] -= m2 * cm[..., 0]
        F[:, sw] += (rho * params.micro_inertia / dt)[:, None] * np.einsum("tab,tb->ta", mass, w_star[mesh.p2_cells])
        if forcing.body_couple is not None:
            gq = np.asarray(forcing.body_couple(xq[..., 0].ravel(), xq[..., 1].ravel(), t_new), dtype=float)
            F[:, sw] += np.einsum("tq,qa,tq->ta", jxw, phi, gq.reshape(nt, -1))

    dofs = space.cell_dofs
    n = space.n_dofs
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    A = assemble_csr(rows, cols, K.ravel(), (n, n))
    b = np.bincount(dofs.ravel(), weights=F.ravel(), minlength=n)
    if not (np.all(np.isfinite(A.data)) and np.all(np.isfinite(b))):
        raise SolverFailure("non-finite coefficient in the assembled system", step=state.step + 1)

    constraints = _dirichlet(mesh, space, bcs, t_new)
    Ac, bc = apply_dirichlet(A, b, constraints)
    return LinearSystem(Ac, bc, constraints, space, A, b)


# -- time step -----------------------------------------------------------------


def _p1_to_p2(mesh: TriMesh, vertex_values: np.ndarray) -> np.ndarray:
    e = mesh.edges
    mid = 0.5 * (vertex_values[e[:, 0]] + vertex_values[e[:, 1]])
    return np.concatenate([vertex_values, mid])


def advance(
    state: State,
    params: MaterialParams,
    dt: float,
    bcs: BoundaryConditions | None = None,
    forcing: Forcing | None = None,
    *,
    with_microrotation: bool = True,
    move_mesh: bool = True,
) -> State:
    """One semi-implicit step from ``t`` to ``t + dt``; returns the state on the moved mesh."""
    mesh = state.mesh
    step = state.step + 1
    system = assemble_monolithic(state, params, dt, bcs, forcing, with_microrotation=with_microrotation)
    try:
        x = system.solve()
    except SingularMatrix as exc:
        raise SolverFailure(f"singular monolithic matrix: {exc}", step=step) from exc
    except SolverFailure as exc:
        raise SolverFailure(str(exc), step=step) from exc
    u, w, p = system.space.split(x)

    solid_nodes = mesh.region_p2_nodes[SOLID]
    d = np.zeros_like(state.d.values)
    d[solid_nodes] = state.d.values[solid_nodes] + dt * u[solid_nodes]

    new_mesh = mesh
    wv = np.zeros((mesh.n_vertices, 2))
    if move_mesh and len(solid_nodes):
        nv = mesh.n_vertices
        uv = u[:nv]
        wv = laplace_extension(mesh, uv[mesh.interface_vertices], OUTER_LABELS)
        solid_v = mesh.region_vertices(SOLID)
        wv[solid_v] = uv[solid_v]
        try:
            new_mesh = move_vertices(mesh, wv, dt)
        except MeshInversion as exc:
            raise MeshInversion(exc.triangle, exc.area, step=step) from None
    w_p2 = _p1_to_p2(mesh, wv)

    omega_vals = w if w is not None else np.zeros(mesh.n_p2)
    return State(
        t=state.t + dt,
        mesh=new_mesh,
        u=Field(P2V, u, new_mesh),
        omega=Field(P2, omega_vals, new_mesh),
        p=Field(P1B, p, new_mesh),
        d=Field(P2V, d, new_mesh),
        mesh_velocity=Field(P2V, w_p2, new_mesh),
        reference_vertices=state.reference_vertices,
        step=step,
    )


def find_vertex(vertices: np.ndarray, point, tol: float = 1e-9) -> int:
    """Index of the vertex at ``point``; raises ``ValueError`` if there is none."""
    dist = np.hypot(vertices[:, 0] - point[0], vertices[:, 1] - point[1])
    k = int(np.argmin(dist))
    scale = max(1.0, float(np.abs(vertices).max()))
    if dist[k] > tol * scale:
        raise ValueError(f"point {tuple(point)} is not a mesh vertex (nearest at distance {dist[k]:.3e})")
    return k


def extract_tip_displacement(state: State, control_point_A_initial) -> tuple[float, float]:
    """Displacement of the vertex that sat at ``control_point_A_initial`` at t = 0."""
    k = find_vertex(state.reference_vertices, control_point_A_initial)
    if k not in set(state.mesh.region_vertices(SOLID).tolist()):
        raise ValueError("control point is not a vertex of the solid region")
    dx, dy = state.d.values[k]
    return float(dx), float(dy)
