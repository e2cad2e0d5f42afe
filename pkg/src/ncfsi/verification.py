"""Independent oracles: manufactured solutions, the Mooney-Rivlin chain and the classical limit.

Nothing here reuses the production quadrature or basis tables. Error norms use
a collapsed (Duffy) Gauss-Legendre rule and a P2 basis rebuilt from a
Vandermonde matrix, so agreement with the solver is evidence rather than a
restatement of the same code.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .fem import P1B, P2, P2V, Field
from .mesh import WALL, BenchmarkGeometry, TriMesh, build_benchmark_mesh, rectangle_mesh
from .physics import MaterialParams
from .stepper import BoundaryConditions, Forcing, State, advance, benchmark_conditions, initial_state

logger = logging.getLogger(__name__)


# -- independent quadrature and basis -----------------------------------------


def collapsed_gauss(n: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Points ``(m, 2)`` and weights on the reference triangle from an ``n x n`` Gauss product.

    Exact for polynomials of degree ``2n - 2``; weights sum to 1/2.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    a, b = np.meshgrid(s, s, indexing="ij")
    wa, wb = np.meshgrid(ws, ws, indexing="ij")
    xi = a * (1.0 - b)
    eta = b
    weight = wa * wb * (1.0 - b)
    return np.column_stack([xi.ravel(), eta.ravel()]), weight.ravel()


# reference nodes in the mesh's local order: vertices, then midpoints of edges 01, 12, 20
_P2_NODES = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], dtype=float)
_P1_NODES = _P2_NODES[:3]


def _monomials(xi: np.ndarray, degree: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Monomials ``x^i y^j`` (i + j <= degree) and their xi/eta derivatives."""
    x, y = xi[:, 0], xi[:, 1]
    pw = [(i, k - i) for k in range(degree + 1) for i in range(k, -1, -1)]
    val = np.column_stack([x**i * y**j for i, j in pw])
    dx = np.column_stack([i * x ** max(i - 1, 0) * y**j if i else 0 * x for i, j in pw])
    dy = np.column_stack([j * x**i * y ** max(j - 1, 0) if j else 0 * x for i, j in pw])
    return val, dx, dy


def _lagrange_tables(nodes: np.ndarray, degree: int, xi: np.ndarray):
    V, _, _ = _monomials(nodes, degree)
    C = np.linalg.inv(V)  # columns: coefficients of each nodal basis function
    val, dx, dy = _monomials(xi, degree)
    return val @ C, np.stack([dx @ C, dy @ C], axis=-1)


@dataclass
class _ErrorIntegrator:
    mesh: TriMesh
    order: int = 6

    def __post_init__(self):
        self.xi, self.w = collapsed_gauss(self.order)
        self.phi2, self.dphi2 = _lagrange_tables(_P2_NODES, 2, self.xi)
        self.phi1, _ = _lagrange_tables(_P1_NODES, 1, self.xi)
        v = self.mesh.vertices[self.mesh.triangles]
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)  # (nt, 2, 2) columns
        self.det = np.linalg.det(J)
        self.jinv = np.linalg.inv(J)
        self.x = v[:, 0][:, None, :] + np.einsum("tij,qj->tqi", J, self.xi)
        self.jxw = np.abs(self.det)[:, None] * self.w[None, :]

    def _p2(self, values: np.ndarray):
        coef = values[self.mesh.p2_cells]  # (nt, 6[, c])
        # physical gradient: d/dx = J^{-T} d/dxi
        dphys = np.einsum("tji,qbj->tqbi", self.jinv, self.dphi2)
        if coef.ndim == 2:
            return np.einsum("qb,tb->tq", self.phi2, coef), np.einsum("tqbi,tb->tqi", dphys, coef)
        return np.einsum("qb,tbc->tqc", self.phi2, coef), np.einsum("tqbi,tbc->tqic", dphys, coef)

    def scalar_errors(self, values: np.ndarray, exact, exact_grad) -> tuple[float, float]:
        uh, guh = self._p2(values)
        x, y = self.x[..., 0], self.x[..., 1]
        e = uh - exact(x, y)
        ge = guh - np.stack(exact_grad(x, y), axis=-1)
        l2 = math.sqrt(np.sum(self.jxw * e**2))
        h1 = math.sqrt(np.sum(self.jxw * np.sum(ge**2, axis=-1)))
        return l2, h1

    def vector_errors(self, values: np.ndarray, exact, exact_grad) -> tuple[float, float]:
        l2 = h1 = 0.0
        for c in range(2):
            a, b = self.scalar_errors(
                values[:, c], lambda x, y, c=c: exact(x, y)[c], lambda x, y, c=c: exact_grad(x, y)[c]
            )
            l2 += a * a
            h1 += b * b
        return math.sqrt(l2), math.sqrt(h1)

    def pressure_error(self, values: np.ndarray, exact) -> float:
        cells = self.mesh.broken_p1[0]
        ph = np.einsum("qb,tb->tq", self.phi1, values[cells])
        pe = exact(self.x[..., 0], self.x[..., 1])
        area = np.sum(self.jxw)
        e = (ph - np.sum(self.jxw * ph) / area) - (pe - np.sum(self.jxw * pe) / area)
        return math.sqrt(np.sum(self.jxw * e**2))


# -- manufactured solution -------------------------------------------------------


@dataclass(frozen=True)
class Manufactured:
    """Callables for the exact fields, their gradients and the matching sources."""

    u: object
    grad_u: object
    omega: object
    grad_omega: object
    p: object
    f: object
    g: object


def manufactured_solution(params: MaterialParams) -> Manufactured:
    """Symbolic sources for the steady Cosserat equations with a divergence-free velocity.

    ``f = rho (u . grad) u + grad p - (mu + mu_r) lap u - 2 mu_r curl omega`` and
    ``g = rho I (u . grad) omega - lambda1 lap omega + 4 mu_r omega - 2 mu_r curl u``.
    """
    import sympy as sp

    x, y = sp.symbols("x y")
    pi = sp.pi
    ux = sp.sin(pi * x) * sp.sin(pi * y)
    uy = sp.cos(pi * x) * sp.cos(pi * y)
    w = sp.sin(pi * x) * sp.sin(pi * y)
    p = sp.cos(pi * x) * sp.sin(pi * y)
    assert sp.simplify(sp.diff(ux, x) + sp.diff(uy, y)) == 0

    rho, mu, mur, lam, inertia = (
        params.rho_f,
        params.mu,
        params.mu_r,
        params.lambda1,
        params.micro_inertia,
    )

    def lap(s):
        return sp.diff(s, x, 2) + sp.diff(s, y, 2)

    def adv(s):
        return ux * sp.diff(s, x) + uy * sp.diff(s, y)

    fx = rho * adv(ux) + sp.diff(p, x) - (mu + mur) * lap(ux) - 2 * mur * sp.diff(w, y)
    fy = rho * adv(uy) + sp.diff(p, y) - (mu + mur) * lap(uy) + 2 * mur * sp.diff(w, x)
    curl_u = sp.diff(uy, x) - sp.diff(ux, y)
    g = rho * inertia * adv(w) - lam * lap(w) + 4 * mur * w - 2 * mur * curl_u

    def fn(*exprs):
        lam_ = sp.lambdify((x, y), list(exprs), "numpy")

        def call(X, Y):
            out = lam_(X, Y)
            return [np.broadcast_to(np.asarray(o, dtype=float), np.shape(X)) for o in out]

        return call

    u_fn = fn(ux, uy)
    gu_fn = fn(sp.diff(ux, x), sp.diff(ux, y), sp.diff(uy, x), sp.diff(uy, y))
    w_fn = fn(w)
    gw_fn = fn(sp.diff(w, x), sp.diff(w, y))
    p_fn = fn(p)
    f_fn = fn(fx, fy)
    g_fn = fn(g)
    return Manufactured(
        u=lambda X, Y: u_fn(X, Y),
        grad_u=lambda X, Y: (gu_fn(X, Y)[0:2], gu_fn(X, Y)[2:4]),
        omega=lambda X, Y: w_fn(X, Y)[0],
        grad_omega=lambda X, Y: gw_fn(X, Y),
        p=lambda X, Y: p_fn(X, Y)[0],
        f=lambda X, Y: f_fn(X, Y),
        g=lambda X, Y: g_fn(X, Y)[0],
    )


#: O(1) coefficients for the convergence study (the benchmark values make the
#: microrotation boundary layers unresolvable on coarse meshes)
MMS_PARAMS = MaterialParams(
    rho_f=1.0, rho_s=1.0, mu=1.0, mu_r=0.5, lambda1=1.0, micro_inertia=1.0, c1=0.0, zeta=1e-8
)

MMS_COLUMNS = ("h", "err_u_L2", "err_u_H1", "err_w_L2", "err_w_H1", "err_p_L2")


@dataclass
class ConvergenceTable:
    """Errors per refinement level and observed orders between consecutive levels."""

    rows: list[dict] = field(default_factory=list)

    def orders(self, key: str) -> list[float]:
        r = self.rows
        return [math.log(r[i][key] / r[i + 1][key]) / math.log(r[i]["h"] / r[i + 1]["h"]) for i in range(len(r) - 1)]

    def monotone(self, key: str) -> bool:
        vals = [row[key] for row in self.rows]
        return all(b < a for a, b in zip(vals, vals[1:]))

    def to_csv(self) -> str:
        keys = [k for k in MMS_COLUMNS[1:]]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(MMS_COLUMNS) + [f"order_{k[4:]}" for k in keys])
        for i, row in enumerate(self.rows):
            orders = [f"{self.orders(k)[i - 1]:.4f}" if i else "" for k in keys]
            w.writerow([f"{row[k]:.10e}" for k in MMS_COLUMNS] + orders)
        return buf.getvalue()

    def __str__(self) -> str:
        return self.to_csv()


def _unit_square(n: int) -> TriMesh:
    return rectangle_mesh(n, n)


def mms_cosserat_fixed_domain(
    h_levels: Sequence[float],
    dt: float | None = None,
    *,
    params: MaterialParams = MMS_PARAMS,
    n_steps: int = 1,
    dt_factor: float = 1.0,
) -> ConvergenceTable:
    """Manufactured-solution convergence study on the unit square.

    Each level starts from the nodal interpolant of the steady exact fields,
    imposes them on the whole boundary and takes ``n_steps`` monolithic steps
    with the production assembly. ``dt`` defaults to ``dt_factor * h**2`` so the
    O(dt) characteristics error stays below the O(h^2) spatial error.
    """
    ms = manufactured_solution(params)
    table = ConvergenceTable()
    for h in h_levels:
        n = int(round(1.0 / h))
        if n < 1 or abs(n * h - 1.0) > 1e-9:
            raise ValueError(f"h = {h} does not divide the unit square")
        mesh = _unit_square(n)
        step = dt if dt is not None else dt_factor * h * h
        u0 = Field.from_function(P2V, mesh, lambda X, Y: tuple(ms.u(X, Y)))
        w0 = Field.from_function(P2, mesh, ms.omega)
        state = replace(initial_state(mesh), u=u0, omega=w0)
        bcs = BoundaryConditions(
            velocity={WALL: lambda X, Y, t: np.column_stack(ms.u(X, Y))},
            omega={WALL: lambda X, Y, t: ms.omega(X, Y)},
        )
        forcing = Forcing(
            body_force=lambda X, Y, t: np.column_stack(ms.f(X, Y)),
            body_couple=lambda X, Y, t: ms.g(X, Y),
        )
        for _ in range(n_steps):
            state = advance(state, params, step, bcs, forcing, move_mesh=False)
        ei = _ErrorIntegrator(mesh)
        eu = ei.vector_errors(state.u.values, lambda X, Y: ms.u(X, Y), ms.grad_u)
        ew = ei.scalar_errors(state.omega.values, ms.omega, ms.grad_omega)
        ep = ei.pressure_error(state.p.values, ms.p)
        table.rows.append(
            dict(h=h, err_u_L2=eu[0], err_u_H1=eu[1], err_w_L2=ew[0], err_w_H1=ew[1], err_p_L2=ep)
        )
        logger.info("MMS h=%g: u H1 %.3e, w H1 %.3e, p L2 %.3e", h, eu[1], ew[1], ep)
    return table


# -- Mooney-Rivlin chain ---------------------------------------------------------


def mooney_rivlin_direct(grad_d: np.ndarray, c1: float, c2: float) -> np.ndarray:
    """``2 c1 B - 4 c2 det(B) I`` with ``B = F F^T`` and ``F = (I - grad d)^{-T}``."""
    F = np.linalg.inv(np.eye(2) - grad_d).T
    B = F @ F.T
    return 2.0 * c1 * B - 4.0 * c2 * np.linalg.det(B) * np.eye(2)


def mooney_rivlin_reduced(grad_d: np.ndarray, c1: float, c2: float, incompressible: bool = True) -> np.ndarray:
    """Extra-stress form ``2 c1 b (Dd - G G^T) + alpha' I``.

    With ``incompressible`` the determinant factor ``b`` is taken as 1 and
    ``alpha' = 2 c1 tr B - 2 c1 - 4 c2``; otherwise the general identity with
    ``b = det B`` and ``alpha' = 2 c1 (tr B - b) - 4 c2 b`` is used.
    """
    G = np.asarray(grad_d, dtype=float)
    Binv = (np.eye(2) - G) @ (np.eye(2) - G).T
    # 2x2 inverse and invariants in closed form, so this path shares no code with the direct one
    detinv = Binv[0, 0] * Binv[1, 1] - Binv[0, 1] * Binv[1, 0]
    trB = (Binv[0, 0] + Binv[1, 1]) / detinv
    b = 1.0 if incompressible else 1.0 / detinv
    alpha = 2.0 * c1 * (trB - b) - 4.0 * c2 * b
    return 2.0 * c1 * b * (G + G.T - G @ G.T) + alpha * np.eye(2)


@dataclass
class ChainReport:
    trials: int
    max_relative: float
    worst_grad_d: np.ndarray
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_relative <= self.tol

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"Mooney-Rivlin chain: {status}, {self.trials} trials, max relative discrepancy "
            f"{self.max_relative:.3e} (tol {self.tol:.0e}), worst grad d = {self.worst_grad_d.tolist()}"
        )


def random_isochoric_gradient(rng: np.random.Generator, bound: float = 0.3) -> np.ndarray:
    """Random ``G`` with ``||G||_2 < bound`` and ``det(I - G) = 1``."""
    while True:
        G = rng.uniform(-1.0, 1.0, size=(2, 2))
        G *= rng.uniform(0.0, bound) / max(np.linalg.norm(G, 2), 1e-300)
        M = np.eye(2) - G
        M /= math.sqrt(np.linalg.det(M))
        G = np.eye(2) - M
        if np.linalg.norm(G, 2) < bound:
            return G


def mooney_rivlin_chain_check(
    trials: int = 100,
    *,
    c1: float = 1.0e6,
    c2: float = 0.3e6,
    seed: int = 0,
    tol: float = 1e-10,
) -> ChainReport:
    """Compare the direct and reduced Mooney-Rivlin stresses on random volume-preserving gradients."""
    rng = np.random.default_rng(seed)
    worst, worst_g = 0.0, np.zeros((2, 2))
    for _ in range(trials):
        G = random_isochoric_gradient(rng)
        a = mooney_rivlin_direct(G, c1, c2)
        b = mooney_rivlin_reduced(G, c1, c2, incompressible=True)
        rel = np.linalg.norm(a - b) / np.linalg.norm(a)
        if rel > worst:
            worst, worst_g = rel, G
    return ChainReport(trials, worst, worst_g, tol)


# -- classical limit -------------------------------------------------------------


@dataclass
class RegressionReport:
    deviations: list[float]

    @property
    def max_deviation(self) -> float:
        return max(self.deviations, default=0.0)


def classical_regression(
    n_steps: int = 50,
    *,
    params: MaterialParams | None = None,
    mesh: TriMesh | None = None,
    geometry: BenchmarkGeometry | None = None,
    dt: float = 0.005,
    target_vertices: int = 600,
) -> RegressionReport:
    """Run the benchmark with and without the microrotation block; per-step ``max |u|`` gap.

    ``params`` defaults to the benchmark constants with every microrotational
    coefficient zeroed; pass ``mu_r > 0`` to see the coupling act.
    """
    geom = geometry or BenchmarkGeometry()
    mesh = mesh or build_benchmark_mesh(geom, target_vertices)
    prm = params if params is not None else MaterialParams().classical()
    bcs = benchmark_conditions(prm, geom.H)
    on: State = initial_state(mesh)
    off: State = initial_state(mesh)
    devs = []
    for _ in range(n_steps):
        on = advance(on, prm, dt, bcs, with_microrotation=True)
        off = advance(off, prm, dt, bcs, with_microrotation=False)
        devs.append(float(np.abs(on.u.values - off.u.values).max()))
    return RegressionReport(devs)


@dataclass
class Oscillation:
    """Summary of a tip displacement history.

    ``amplitude`` is half the peak-to-peak swing over the final window,
    ``frequency`` comes from upward crossings of the window mean, and
    ``onset`` is the first upward crossing after which every cycle swings
    at least ``onset_fraction`` of the final amplitude (``nan`` if never).
    """

    frequency: float
    amplitude: float
    onset: float
    mean: float
    cycle_times: np.ndarray
    cycle_amplitudes: np.ndarray


def oscillation_metrics(t: np.ndarray, y: np.ndarray, window: float = 1.0, onset_fraction: float = 0.1) -> Oscillation:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    last = t >= t[-1] - window
    mean = float(y[last].mean())
    amplitude = 0.5 * float(y[last].max() - y[last].min())
    s = np.sign(y - mean)
    up = np.flatnonzero((s[:-1] <= 0) & (s[1:] > 0))
    # linear interpolation of each crossing time
    y0, y1 = y[up] - mean, y[up + 1] - mean
    tc = t[up] - y0 * (t[up + 1] - t[up]) / (y1 - y0)
    late = tc >= t[-1] - 2 * window
    frequency = (late.sum() - 1) / (tc[late][-1] - tc[late][0]) if late.sum() >= 2 else float("nan")
    cyc = np.array([0.5 * (y[up[i] : up[i + 1] + 1].max() - y[up[i] : up[i + 1] + 1].min()) for i in range(len(up) - 1)])
    onset = float("nan")
    if len(cyc):
        weak = np.flatnonzero(cyc < onset_fraction * amplitude)
        first = 0 if len(weak) == 0 else weak[-1] + 1
        if first < len(cyc):
            onset = float(tc[first])
    return Oscillation(float(frequency), amplitude, onset, mean, tc[:-1], cyc)
