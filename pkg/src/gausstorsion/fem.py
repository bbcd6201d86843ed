"""Gaussian-weighted P1 finite elements for the Robin torsion problem.

Weak form: find ``u`` with

    int phi grad u . grad w + beta int_{physical dOmega} phi u w = int phi w

for all ``w``. Artificial (truncation) edges carry no boundary term, which is
the natural Neumann condition.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import triangle

from .domain import Domain
from .errors import DomainError, GeometryError, NumericalError
from .gauss import gauss_density
from .quadrature import gauss_legendre, signed_areas, triangle_rule

PHYSICAL, ARTIFICIAL = 1, 2

# graded size: target_h in the core |x| <= CORE_RADIUS, growing like
# exp((|x|^2 - CORE_RADIUS^2) / GROWTH) outside, capped at MAX_H
CORE_RADIUS = 2.0
GROWTH = 8.0
MAX_H = 1.0
MAX_ASPECT = 20.0


@dataclass(frozen=True)
class SolverConfig:
    cg_tol: float = 1e-10
    cg_max_iters: int = 50_000
    quad_order_volume: int = 6
    quad_order_edge: int = 8

    def __post_init__(self):
        if not self.cg_tol > 0:
            raise DomainError("cg_tol must be positive")
        if self.cg_max_iters < 1:
            raise DomainError("cg_max_iters must be at least 1")


DEFAULT_SOLVER = SolverConfig()


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_physical: np.ndarray
    h_max: float
    target_h: float = math.nan
    h_core: float = math.nan

    def __post_init__(self):
        area = signed_areas(self.vertices[self.triangles])
        if np.any(area <= 0):
            raise GeometryError("mesh has non-positively oriented triangles")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def physical_edges(self) -> np.ndarray:
        return self.boundary_edges[self.edge_physical]

    def boundary_nodes(self, physical_only: bool = True) -> np.ndarray:
        e = self.physical_edges() if physical_only else self.boundary_edges
        return np.unique(e)


def mesh_size(points: np.ndarray, target_h: float) -> np.ndarray:
    r2 = np.sum(np.asarray(points) ** 2, axis=-1)
    return np.minimum(target_h * np.exp(np.maximum(r2 - CORE_RADIUS ** 2, 0.0) / GROWTH), MAX_H)


def _subdivide_edge(p, q, target_h, rng=None):
    """Interior points on ``[p, q]`` spaced by the local mesh size."""
    s = np.linspace(0.0, 1.0, 201)
    L = float(np.linalg.norm(q - p))
    dens = L / mesh_size(p + s[:, None] * (q - p), target_h)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(s))])
    n = int(math.ceil(cum[-1] - 1e-9))
    if n <= 1:
        return np.empty((0, 2))
    k = np.arange(1, n, dtype=float)
    if rng is not None:
        k += rng.uniform(-0.25, 0.25, k.size)
    t = np.interp(k * cum[-1] / n, cum, s)
    return p + t[:, None] * (q - p)


def _aspect_ratio(tri_xy: np.ndarray) -> np.ndarray:
    # longest edge over twice the inradius, normalised to 1 for equilateral
    e = np.linalg.norm(tri_xy - np.roll(tri_xy, -1, axis=1), axis=2)
    area = np.abs(signed_areas(tri_xy))
    r_in = 2 * area / e.sum(1)
    return e.max(1) / (2 * math.sqrt(3) * r_in)


def generate_mesh(d: Domain, target_h: float, seed: int | None = None,
                  max_refine: int = 12) -> Mesh:
    """Graded conforming triangulation of ``d``.

    The size is ``target_h`` for ``|x| <= 2`` and grows with the decay of the
    Gaussian weight farther out. Boundary edges are pre-subdivided to the local
    size and inherit the physical/artificial tags. ``seed`` jitters the
    boundary subdivision to produce an independent meshing at the same size.
    """
    if not target_h > 0:
        raise DomainError("target_h must be positive")
    rng = None if seed is None else np.random.default_rng(seed)
    verts, segs, marks = [], [], []
    offset = 0
    for lp in d.loops:
        p, q = lp.edges()
        loop_pts, loop_marks = [], []
        for a, b, phys in zip(p, q, lp.physical):
            inner = _subdivide_edge(a, b, target_h, rng)
            loop_pts.append(np.vstack([a[None], inner]))
            loop_marks.append(np.full(len(inner) + 1, PHYSICAL if phys else ARTIFICIAL))
        pts = np.concatenate(loop_pts)
        idx = offset + np.arange(len(pts))
        verts.append(pts)
        segs.append(np.c_[idx, np.roll(idx, -1)])
        marks.append(np.concatenate(loop_marks))
        offset += len(pts)
    pslg = {"vertices": np.concatenate(verts), "segments": np.concatenate(segs),
            "segment_markers": np.concatenate(marks)[:, None]}
    if len(d.loops) > 1:
        pslg["holes"] = d.hole_points()
    try:
        out = triangle.triangulate(pslg, "pq30Q")
        for _ in range(max_refine):
            xy = out["vertices"][out["triangles"]]
            amax = math.sqrt(3) / 4 * mesh_size(xy.mean(1), target_h) ** 2
            if np.all(np.abs(signed_areas(xy)) <= amax):
                break
            out["triangle_max_area"] = amax
            out = triangle.triangulate(out, "rpq30aQ")
    except Exception as exc:  # triangle raises bare RuntimeError on bad input
        raise GeometryError(f"mesh generation failed: {exc}") from exc
    V = out["vertices"]
    T = out["triangles"].astype(np.int64)
    xy = V[T]
    if np.any(signed_areas(xy) <= 0):
        raise GeometryError("mesh generation produced degenerate triangles")
    ar = _aspect_ratio(xy)
    if ar.max() > MAX_ASPECT:
        raise GeometryError(f"mesh rejected: aspect ratio {ar.max():.1f} > {MAX_ASPECT}")
    S = out["segments"].astype(np.int64)
    M = out["segment_markers"].ravel()
    edges = np.sort(np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]]), axis=1)
    L = np.linalg.norm(V[edges[:, 0]] - V[edges[:, 1]], axis=1)
    core = np.linalg.norm(V[edges].mean(1), axis=1) <= CORE_RADIUS
    return Mesh(V, T, S, M == PHYSICAL, float(L.max()), float(target_h),
                float(L[core].max()) if core.any() else math.nan)


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True, eq=False)
class Operators:
    """Beta-independent pieces: weighted stiffness, physical boundary mass, load."""

    mesh: Mesh
    K: sp.csr_matrix
    M: sp.csr_matrix
    b: np.ndarray


@dataclass(frozen=True, eq=False)
class LinearSystem:
    A: sp.csr_matrix
    b: np.ndarray
    beta: float
    operators: Operators


@lru_cache(maxsize=8)
def _element_weights(m: Mesh, order: int):
    """``w_q phi(x_q) |T|`` per element and quadrature point, with barycentrics."""
    bary, w = triangle_rule(order)
    xy = m.vertices[m.triangles]
    pts = np.einsum("qk,tkd->tqd", bary, xy)
    area = signed_areas(xy)
    return np.asarray(gauss_density(pts, 2)) * w[None, :] * area[:, None], bary


def _gradients(m: Mesh) -> np.ndarray:
    xy = m.vertices[m.triangles]
    d1 = xy[:, 1] - xy[:, 0]
    d2 = xy[:, 2] - xy[:, 0]
    det = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])[:, None]
    G = np.empty((len(xy), 3, 2))
    G[:, 1] = np.c_[d2[:, 1], -d2[:, 0]] / det
    G[:, 2] = np.c_[-d1[:, 1], d1[:, 0]] / det
    G[:, 0] = -G[:, 1] - G[:, 2]
    return G


def _edge_weights(m: Mesh, order: int):
    """Per physical edge: ``w_q phi(x_q) |e|`` and the two hat values."""
    E = m.physical_edges()
    a, b = m.vertices[E[:, 0]], m.vertices[E[:, 1]]
    x, w = gauss_legendre(order)
    pts = a[:, None, :] + x[None, :, None] * (b - a)[:, None, :]
    L = np.linalg.norm(b - a, axis=1)
    wphi = np.asarray(gauss_density(pts, 2)) * w[None, :] * L[:, None]
    return E, wphi, np.stack([1 - x, x], 1)


@lru_cache(maxsize=8)
def assemble_operators(m: Mesh, cfg: SolverConfig = DEFAULT_SOLVER) -> Operators:
    n = m.n_vertices
    wphi, bary = _element_weights(m, cfg.quad_order_volume)
    G = _gradients(m)
    # grad of P1 functions is constant per element, so the weight integrates separately
    Ke = np.einsum("tid,tjd->tij", G, G) * wphi.sum(1)[:, None, None]
    T = m.triangles
    I = np.repeat(T, 3, axis=1).ravel()
    J = np.tile(T, (1, 3)).ravel()
    K = sp.csr_matrix((Ke.ravel(), (I, J)), shape=(n, n))
    b = np.bincount(T.ravel(), (wphi @ bary).ravel(), n)
    E, ewphi, hats = _edge_weights(m, cfg.quad_order_edge)
    Me = np.einsum("eq,qi,qj->eij", ewphi, hats, hats)
    I = np.repeat(E, 2, axis=1).ravel()
    J = np.tile(E, (1, 2)).ravel()
    M = sp.csr_matrix((Me.ravel(), (I, J)), shape=(n, n))
    # duplicate summation order differs between (i, j) and (j, i); averaging with the
    # transpose makes both matrices exactly symmetric since a + b == b + a
    K = (0.5 * (K + K.T)).tocsr()
    M = (0.5 * (M + M.T)).tocsr()
    return Operators(m, K, M, b)


def assemble(m: Mesh, beta: float, cfg: SolverConfig = DEFAULT_SOLVER) -> LinearSystem:
    """Robin system ``(K + beta M) u = b``; symmetric positive definite for ``beta > 0``."""
    if not (np.isfinite(beta) and beta > 0):
        raise DomainError("beta must be a positive finite number")
    ops = assemble_operators(m, cfg)
    return LinearSystem((ops.K + beta * ops.M).tocsr(), ops.b, float(beta), ops)


# ---------------------------------------------------------------------------
# solve


@dataclass(frozen=True, eq=False)
class DiscreteField:
    mesh: Mesh
    coefficients: np.ndarray
    beta: float = math.nan
    cg_iters: int = 0
    residual: float = math.nan
    cfg: SolverConfig = field(default=DEFAULT_SOLVER, repr=False)

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.mesh.n_vertices,):
            raise DomainError("need one coefficient per mesh vertex")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def u_min(self) -> float:
        return float(self.coefficients.min())

    @property
    def u_max(self) -> float:
        return float(self.coefficients.max())


def pcg(A, b, dinv, tol, maxiter, x0=None):
    """Jacobi-preconditioned conjugate gradients on ``||b - A x|| <= tol ||b||``.

    Returns ``(x, iterations, relative residual)``. The recursive residual is
    confirmed against an explicit ``b - A x`` before accepting.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bn = np.linalg.norm(b)
    if bn == 0:
        return np.zeros_like(b), 0, 0.0
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for k in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bn:
            r = b - A @ x
            res = np.linalg.norm(r) / bn
            if res <= tol:
                return x, k, res
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = np.linalg.norm(b - A @ x) / bn
    raise NumericalError(f"CG hit {maxiter} iterations with relative residual {res:.3e}")


def solve(system: LinearSystem, cfg: SolverConfig = DEFAULT_SOLVER, x0=None) -> DiscreteField:
    A = system.A
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise NumericalError("system matrix has a non-positive diagonal")
    x, iters, res = pcg(A, system.b, 1.0 / diag, cfg.cg_tol, cfg.cg_max_iters, x0)
    return DiscreteField(system.operators.mesh, x, system.beta, iters, res, cfg)


def solve_torsion(d: Domain, beta: float, target_h: float,
                  cfg: SolverConfig = DEFAULT_SOLVER, seed: int | None = None) -> DiscreteField:
    return solve(assemble(generate_mesh(d, target_h, seed), beta, cfg), cfg)


# ---------------------------------------------------------------------------
# functionals


def integrate_field(u: DiscreteField) -> float:
    """``int u phi dx`` by the volume rule applied to the interpolant."""
    wphi, bary = _element_weights(u.mesh, u.cfg.quad_order_volume)
    vals = u.coefficients[u.mesh.triangles] @ bary.T
    return float(np.sum(wphi * vals))


def torsion_value(u: DiscreteField) -> float:
    """Torsional rigidity ``T = int u phi dx`` of the discrete solution."""
    return integrate_field(u)


def boundary_integral(u: DiscreteField) -> float:
    """``int_{physical dOmega} u phi dH^1``."""
    E, wphi, hats = _edge_weights(u.mesh, u.cfg.quad_order_edge)
    vals = u.coefficients[E] @ hats.T
    return float(np.sum(wphi * vals))


def boundary_identity_residual(u: DiscreteField, measure: float) -> float:
    """Relative residual of ``beta int_{dOmega} u phi = |Omega|_phi`` (test function 1)."""
    return abs(u.beta * boundary_integral(u) - measure) / measure


def rayleigh_quotient(w: DiscreteField, beta: float | None = None) -> float:
    """``(int phi |grad w|^2 + beta int_{dOmega} phi w^2) / (int phi w)^2``.

    Homogeneous of degree zero in ``w``; its minimum over the discrete space
    is ``1 / T`` and is attained at the discrete solution.
    """
    beta = w.beta if beta is None else beta
    ops = assemble_operators(w.mesh, w.cfg)
    c = w.coefficients
    num = float(c @ (ops.K @ c) + beta * (c @ (ops.M @ c)))
    mean = float(ops.b @ c)
    scale = float(ops.b.sum()) * float(np.max(np.abs(c)))
    if scale == 0 or abs(mean) <= 1e-14 * scale:
        raise DomainError("the quotient needs a field with nonzero weighted mean")
    return num / mean ** 2


# ---------------------------------------------------------------------------
# convergence


@dataclass(frozen=True)
class ConvergenceStudy:
    h: tuple
    T: tuple
    order: float
    T_extrapolated: float
    error_bar: float
    reliable: bool
    note: str = ""


def richardson(h, T, safety: float = 1.25, noise: float = 0.0) -> ConvergenceStudy:
    """Observed order, extrapolated value and error bar from the three finest levels.

    The error bar is the grid-convergence-index estimate ``safety |T_1 - T_2|
    / (r^p - 1)`` of the distance from the finest value to the limit, floored
    at ``noise``. Non-monotone or implausible sequences are flagged unreliable
    and get the conservative bar ``3 max |dT|``.
    """
    h = np.asarray(h, dtype=float)
    T = np.asarray(T, dtype=float)
    if len(h) < 3:
        raise DomainError("need at least three mesh levels")
    if np.any(np.diff(h) >= 0):
        raise DomainError("mesh sizes must be decreasing")
    (h3, h2, h1), (T3, T2, T1) = h[-3:], T[-3:]
    r = math.sqrt((h3 / h2) * (h2 / h1))
    d_coarse, d_fine = T2 - T3, T1 - T2
    note = ""
    reliable = d_coarse * d_fine > 0 and abs(d_fine) < abs(d_coarse)
    if reliable:
        p = math.log(abs(d_coarse) / abs(d_fine)) / math.log(r)
        reliable = 0.5 <= p <= 4.0
    if reliable:
        ext = T1 + d_fine / (r ** p - 1)
        bar = safety * abs(d_fine) / (r ** p - 1)
    else:
        p = math.nan if d_coarse * d_fine <= 0 or d_fine == 0 else math.log(
            abs(d_coarse / d_fine)) / math.log(r)
        ext = T1
        bar = 3.0 * max(abs(d_coarse), abs(d_fine))
        note = "non-monotone or out-of-range convergence; order unreliable"
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return ConvergenceStudy(tuple(h), tuple(T), p, ext, max(bar, noise), reliable, note)


def convergence_study(d: Domain, beta: float, h_list, cfg: SolverConfig = DEFAULT_SOLVER):
    """Solve on each mesh size and return ``(ConvergenceStudy, finest field)``."""
    h_list = [float(h) for h in h_list]
    Ts, u = [], None
    for h in h_list:
        u = solve_torsion(d, beta, h, cfg)
        Ts.append(torsion_value(u))
    noise = 10 * cfg.cg_tol * abs(Ts[-1])
    return richardson(h_list, Ts, noise=noise), u


# ---------------------------------------------------------------------------
# field files


def save_field(path, u: DiscreteField, **meta) -> None:
    m = u.mesh
    np.savez_compressed(Path(path), vertices=m.vertices, triangles=m.triangles,
                        boundary_edges=m.boundary_edges, edge_physical=m.edge_physical,
                        coefficients=u.coefficients, beta=u.beta, h_max=m.h_max,
                        target_h=m.target_h, h_core=m.h_core,
                        meta_keys=np.array(list(meta), dtype=str),
                        meta_values=np.array([float(v) for v in meta.values()]))


def load_field(path) -> tuple[DiscreteField, dict]:
    with np.load(Path(path)) as z:
        m = Mesh(z["vertices"], z["triangles"], z["boundary_edges"], z["edge_physical"],
                 float(z["h_max"]), float(z["target_h"]), float(z["h_core"]))
        meta = dict(zip(z["meta_keys"].tolist(), z["meta_values"].tolist()))
        return DiscreteField(m, z["coefficients"], float(z["beta"])), meta


def dump_field_csv(path, u: DiscreteField) -> None:
    data = np.c_[u.mesh.vertices, u.coefficients]
    np.savetxt(Path(path), data, delimiter=",", header="x,y,u", comments="", fmt="%.17g")
