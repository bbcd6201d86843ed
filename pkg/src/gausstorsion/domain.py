"""Polygonal 2-D domains with Gaussian measure and perimeter.

A :class:`Domain` is an outer counterclockwise loop plus optional clockwise
holes. Every edge is tagged *physical* (part of the true boundary, carries the
Robin condition) or *artificial* (a truncation arc of an unbounded set).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import shapely
import triangle
from scipy.optimize import brentq

from .errors import GeometryError
from .gauss import (gauss_density, half_space_measure, half_space_measure_inverse,
                    isoperimetric_function)
from .quadrature import gauss_legendre, signed_areas, triangle_points

DEFAULT_TRUNCATION_RADIUS = 9.0
DEFAULT_SEGMENTS = 512
FAMILIES = ("half_plane", "rotated_half_plane", "strip", "disk", "square", "wedge")
EQUALITY_FAMILIES = ("half_plane", "rotated_half_plane")

_EDGE_PANEL = 0.25


@dataclass(frozen=True, eq=False)
class Loop:
    """Closed polyline; edge ``i`` joins ``vertices[i]`` to ``vertices[i + 1]``."""

    vertices: np.ndarray
    physical: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        p = np.asarray(self.physical, dtype=bool)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("a loop needs at least three 2-D vertices")
        if p.shape != (len(v),):
            raise GeometryError("need one physical/artificial tag per edge")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "physical", p)

    @property
    def signed_area(self) -> float:
        x, y = self.vertices.T
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)


@dataclass(frozen=True, eq=False)
class Domain:
    loops: tuple[Loop, ...]
    name: str = "domain"
    truncation_radius: float | None = None
    kind: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.loops:
            raise GeometryError("domain has no boundary loops")
        if self.loops[0].signed_area <= 0:
            raise GeometryError("outer loop must be counterclockwise")
        for hole in self.loops[1:]:
            if hole.signed_area >= 0:
                raise GeometryError("holes must be clockwise")
        poly = shapely.Polygon(self.loops[0].vertices, [h.vertices for h in self.loops[1:]])
        if not poly.is_valid:
            raise GeometryError(f"invalid polygon: {shapely.is_valid_reason(poly)}")
        artificial = any((~lp.physical).any() for lp in self.loops)
        if artificial and self.truncation_radius is None:
            raise GeometryError("artificial edges require a truncated (unbounded) domain")

    @property
    def is_truncated(self) -> bool:
        return self.truncation_radius is not None

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Start points, end points and physical tags of all edges."""
        p, q = zip(*(lp.edges() for lp in self.loops))
        tags = np.concatenate([lp.physical for lp in self.loops])
        return np.concatenate(p), np.concatenate(q), tags

    def hole_points(self) -> np.ndarray:
        pts = [shapely.Polygon(h.vertices).representative_point() for h in self.loops[1:]]
        return np.array([[pt.x, pt.y] for pt in pts]).reshape(-1, 2)

    def rotated(self, angle: float) -> "Domain":
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        loops = tuple(Loop(lp.vertices @ rot.T, lp.physical) for lp in self.loops)
        return Domain(loops, self.name, self.truncation_radius, self.kind, dict(self.params))

    def to_polygon(self) -> shapely.Polygon:
        return shapely.Polygon(self.loops[0].vertices, [h.vertices for h in self.loops[1:]])


@dataclass(frozen=True)
class HalfSpaceRegion:
    """``{x : x . n > lam}`` with unit normal ``n = (cos a, sin a)``."""

    lam: float
    rotation_angle: float = 0.0

    def measure(self) -> float:
        return float(half_space_measure(self.lam))

    def perimeter(self) -> float:
        return float(gauss_density(self.lam))


@lru_cache(maxsize=64)
def _polygon_triangles(d: Domain) -> np.ndarray:
    """Constrained triangulation of the polygon (no Steiner points)."""
    verts, segs = [], []
    offset = 0
    for lp in d.loops:
        n = len(lp.vertices)
        verts.append(lp.vertices)
        idx = offset + np.arange(n)
        segs.append(np.c_[idx, np.roll(idx, -1)])
        offset += n
    pslg = {"vertices": np.concatenate(verts), "segments": np.concatenate(segs)}
    if len(d.loops) > 1:
        pslg["holes"] = d.hole_points()
    # area cap keeps the starting triangles well shaped near the origin
    out = triangle.triangulate(pslg, "pq30a0.25Q")
    tri = out["vertices"][out["triangles"]]
    area = signed_areas(tri)
    if np.any(area <= 0):
        raise GeometryError("degenerate polygon triangulation")
    return tri


def _subdivide(tri: np.ndarray) -> np.ndarray:
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    kids = np.stack([np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
                     np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1)], 1)
    return kids.reshape(-1, 3, 2)


def integrate_density(tri: np.ndarray, quad_order: int = 6, abs_tol: float = 1e-14,
                      max_levels: int = 14) -> float:
    """Adaptive ``int phi`` over a set of triangles.

    Each triangle is compared against its four midpoint children; triangles
    whose two estimates agree within an area-proportional share of
    ``abs_tol`` contribute the children estimate, the rest are refined.
    """
    total_area = float(np.abs(signed_areas(tri)).sum())
    if total_area == 0:
        return 0.0
    result = 0.0
    for _ in range(max_levels):
        pts, w = triangle_points(tri, quad_order)
        coarse = (np.asarray(gauss_density(pts, 2)) * w).sum(1)
        kids = _subdivide(tri)
        pts, w = triangle_points(kids, quad_order)
        fine = (np.asarray(gauss_density(pts, 2)) * w).sum(1).reshape(-1, 4).sum(1)
        area = np.abs(signed_areas(tri))
        # rounding floor: differencing coordinates of size |x| over a triangle of
        # diameter d leaves a relative error of about eps |x| / d in each estimate
        diam = np.max(np.linalg.norm(tri - np.roll(tri, 1, axis=1), axis=2), axis=1)
        cond = 1.0 + np.max(np.abs(tri), axis=(1, 2)) / diam
        ok = np.abs(fine - coarse) <= np.maximum(abs_tol * area / total_area,
                                                 64 * np.finfo(float).eps * cond * np.abs(fine))
        result += fine[ok].sum()
        if ok.all():
            return result
        tri = kids.reshape(-1, 4, 3, 2)[~ok].reshape(-1, 3, 2)
    # remaining error is below the last comparison; accept the finest estimate
    return result + fine[~ok].sum()


def gaussian_measure(d: Domain, quad_order: int = 6) -> float:
    """``int_Omega phi dx`` by polygon triangulation and triangle quadrature.

    For truncated domains this is the measure of the truncated polygon; the
    discarded tail is bounded by :func:`truncation_error_bounds`.
    """
    return integrate_density(_polygon_triangles(d), quad_order)


def boundary_measure(d: Domain, quad_order: int = 8) -> float:
    """``int_Omega phi dx`` as the line integral ``oint Phi(x_1) phi_1(x_2) dx_2``.

    ``Phi`` is the standard normal distribution function, so the integrand's
    ``x_1``-derivative is the density. Exact for polygons up to the edge
    quadrature; used for calibration and as an independent check of
    :func:`gaussian_measure`.
    """
    p, q, _ = d.edges()
    a, b, _ = _edge_panels(p, q)
    x, w = gauss_legendre(quad_order)
    pts = a[:, None, :] + x[None, :, None] * (b - a)[:, None, :]
    vals = (1.0 - np.asarray(half_space_measure(pts[..., 0]))) * np.asarray(
        gauss_density(pts[..., 1]))
    return float(((vals @ w) * (b - a)[:, 1]).sum())


def _edge_panels(p: np.ndarray, q: np.ndarray):
    length = np.linalg.norm(q - p, axis=1)
    if np.any(length <= 0):
        raise GeometryError("degenerate (zero-length) boundary edge")
    npan = np.maximum(1, np.ceil(length / _EDGE_PANEL).astype(int))
    rep = np.repeat(np.arange(len(p)), npan)
    k = np.arange(rep.size) - np.repeat(np.cumsum(npan) - npan, npan)
    t0 = k / npan[rep]
    t1 = (k + 1) / npan[rep]
    a = p[rep] + t0[:, None] * (q - p)[rep]
    b = p[rep] + t1[:, None] * (q - p)[rep]
    return a, b, rep


def line_integral_density(p: np.ndarray, q: np.ndarray, quad_order: int = 8) -> np.ndarray:
    """``int_{[p_i, q_i]} phi dH^1`` for each segment, by composite Gauss-Legendre."""
    if len(p) == 0:
        return np.zeros(0)
    a, b, rep = _edge_panels(p, q)
    x, w = gauss_legendre(quad_order)
    pts = a[:, None, :] + x[None, :, None] * (b - a)[:, None, :]
    L = np.linalg.norm(b - a, axis=1)
    vals = (np.asarray(gauss_density(pts, 2)) @ w) * L
    return np.bincount(rep, vals, len(p))


def gaussian_perimeter(d: Domain, quad_order: int = 8, include_artificial: bool = False) -> float:
    """``int_{dOmega} phi dH^1`` over the physical edges (all edges if requested)."""
    p, q, phys = d.edges()
    keep = np.ones(len(p), dtype=bool) if include_artificial else phys
    return float(line_integral_density(p[keep], q[keep], quad_order).sum())


def truncation_error_bounds(d: Domain) -> dict:
    """Bounds on the measure and perimeter discarded by truncation.

    The truncated polygon contains the part of the ideal set inside the
    largest disk avoiding all artificial edges, of radius ``r``. The discarded
    mass is at most ``exp(-r^2/2)``; each physical edge ending on the
    artificial boundary continues to infinity and loses at most
    ``exp(-r^2/2) / (2 pi r)`` of perimeter.
    """
    if not d.is_truncated:
        return {"measure": 0.0, "perimeter": 0.0, "radius": math.inf}
    p, q, phys = d.edges()
    art = ~phys
    t = np.clip(np.einsum("ij,ij->i", -p[art], q[art] - p[art])
                / np.einsum("ij,ij->i", q[art] - p[art], q[art] - p[art]), 0.0, 1.0)
    closest = p[art] + t[:, None] * (q[art] - p[art])
    r = float(np.min(np.linalg.norm(closest, axis=1)))
    # a physical edge meets the artificial boundary where its tag switches
    n_ends = int(np.sum(phys != np.roll(phys, 1)))
    tail = math.exp(-0.5 * r * r)
    return {"measure": tail, "perimeter": n_ends * tail / (2 * math.pi * r), "radius": r}


def symmetrize(d: Domain, measure: float | None = None) -> HalfSpaceRegion:
    """Half-space ``{x_1 > lam}`` with the same Gaussian measure as ``d``."""
    m = gaussian_measure(d) if measure is None else measure
    try:
        return HalfSpaceRegion(float(half_space_measure_inverse(m)), 0.0)
    except ValueError as exc:
        raise GeometryError(f"cannot symmetrize a set of measure {m}") from exc


def check_isoperimetric(d: Domain) -> float:
    """``P_phi(Omega) - I(|Omega|_phi)``; nonnegative, zero only for half-spaces."""
    return gaussian_perimeter(d) - float(isoperimetric_function(gaussian_measure(d)))


# ---------------------------------------------------------------------------
# benchmark families


def _arc(radius: float, a0: float, a1: float, segments: int) -> np.ndarray:
    """Points on the circle from angle ``a0`` to ``a1 > a0``, endpoints included."""
    n = max(4, int(math.ceil(segments * (a1 - a0) / (2 * math.pi))))
    th = np.linspace(a0, a1, n + 1)
    return radius * np.c_[np.cos(th), np.sin(th)]


def _half_plane(lam, R, segments, angle=0.0):
    if abs(lam) >= R:
        raise GeometryError("half-plane threshold must lie inside the truncation disk")
    y0 = math.sqrt(R * R - lam * lam)
    arc = _arc(R, math.atan2(-y0, lam), math.atan2(y0, lam), segments)
    tags = np.zeros(len(arc), dtype=bool)
    tags[-1] = True  # closing edge: the line x_1 = lam
    loop = Loop(arc, tags)
    if angle:
        c, s = math.cos(angle), math.sin(angle)
        loop = Loop(arc @ np.array([[c, -s], [s, c]]).T, tags)
    return (loop,)


def _strip(w, R, segments):
    y0 = math.sqrt(R * R - w * w)
    top = _arc(R, math.atan2(y0, w), math.atan2(y0, -w), segments)
    bottom = _arc(R, math.atan2(-y0, -w), math.atan2(-y0, w), segments)
    verts = np.concatenate([top, bottom])
    tags = np.zeros(len(verts), dtype=bool)
    tags[len(top) - 1] = True   # left line, top to bottom
    tags[-1] = True             # right line, bottom to top
    return (Loop(verts, tags),)


def _disk(r, center, segments):
    # vertices on the circle whose inscribed polygon has the area of the disk
    rho = r * math.sqrt(2 * math.pi / (segments * math.sin(2 * math.pi / segments)))
    th = 2 * math.pi * np.arange(segments) / segments
    return (Loop(np.asarray(center) + rho * np.c_[np.cos(th), np.sin(th)],
                 np.ones(segments, dtype=bool)),)


def _square(a, center):
    c = np.asarray(center, dtype=float)
    h = 0.5 * a
    verts = c + np.array([[-h, -h], [h, -h], [h, h], [-h, h]])
    return (Loop(verts, np.ones(4, dtype=bool)),)


def _ray_exit(apex, direction, R):
    pd = float(np.dot(apex, direction))
    t = -pd + math.sqrt(pd * pd - float(np.dot(apex, apex)) + R * R)
    return apex + t * direction


def _wedge(alpha, apex, direction, R, segments):
    apex = np.asarray(apex, dtype=float)
    if np.linalg.norm(apex) >= R:
        raise GeometryError("wedge apex must lie inside the truncation disk")
    d1 = np.array([math.cos(direction - alpha / 2), math.sin(direction - alpha / 2)])
    d2 = np.array([math.cos(direction + alpha / 2), math.sin(direction + alpha / 2)])
    q1, q2 = _ray_exit(apex, d1, R), _ray_exit(apex, d2, R)
    a0 = math.atan2(q1[1], q1[0])
    a1 = math.atan2(q2[1], q2[0])
    if a1 <= a0:
        a1 += 2 * math.pi
    arc = _arc(R, a0, a1, segments)
    verts = np.concatenate([[apex], arc])
    tags = np.zeros(len(verts), dtype=bool)
    tags[0] = True    # apex -> q1
    tags[-1] = True   # q2 -> apex
    return (Loop(verts, tags),)


_FAMILY_DEFAULTS = {
    "half_plane": {},
    "rotated_half_plane": {"angle_deg": 37.0},
    "strip": {},
    "disk": {"center": (0.0, 0.0)},
    "square": {"center": (0.0, 0.0)},
    "wedge": {"apex": (-1.0, 0.0), "direction_deg": 0.0},
}


def _family_builder(kind, params, R, segments):
    """Return ``(build(x) -> loops, bracket, truncated)`` for the free parameter ``x``."""
    if kind == "half_plane":
        return (lambda x: _half_plane(x, R, segments)), (-(R - 1), R - 1), True
    if kind == "rotated_half_plane":
        ang = math.radians(params["angle_deg"])
        return (lambda x: _half_plane(x, R, segments, ang)), (-(R - 1), R - 1), True
    if kind == "strip":
        return (lambda x: _strip(x, R, segments)), (1e-6, R - 1), True
    if kind == "disk":
        return (lambda x: _disk(x, params["center"], segments)), (1e-6, R - 1), False
    if kind == "square":
        return (lambda x: _square(x, params["center"])), (1e-6, 1.2 * (R - 1)), False
    if kind == "wedge":
        direction = math.radians(params["direction_deg"])
        return ((lambda x: _wedge(x, params["apex"], direction, R, segments)),
                (1e-4, 2 * math.pi - 1e-4), True)
    raise GeometryError(f"unknown domain family {kind!r}; expected one of {FAMILIES}")


_FREE_PARAMETER = {"half_plane": "shift", "rotated_half_plane": "shift", "strip": "half_width",
                   "disk": "radius", "square": "side", "wedge": "opening_angle"}


def make_family(kind: str, target_measure: float, params: dict | None = None,
                truncation_radius: float = DEFAULT_TRUNCATION_RADIUS,
                segments: int = DEFAULT_SEGMENTS, measure_tol: float = 1e-8) -> Domain:
    """Benchmark domain of the given family calibrated to a Gaussian measure.

    The free parameter (shift, half width, radius, side or opening angle) is
    found by a bracketing root search on the polygon's own measure.
    """
    if not 0 < target_measure < 1:
        raise GeometryError("target measure must lie in (0, 1)")
    merged = dict(_FAMILY_DEFAULTS.get(kind, {}))
    merged.update(params or {})
    build, (lo, hi), truncated = _family_builder(kind, merged, truncation_radius, segments)
    R = truncation_radius if truncated else None

    def measure_at(x):
        return boundary_measure(Domain(build(x), kind, R, kind, merged))

    try:
        x = brentq(lambda x: measure_at(x) - target_measure, lo, hi,
                   xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    except ValueError as exc:
        raise GeometryError(f"cannot calibrate {kind} to measure {target_measure}") from exc
    merged[_FREE_PARAMETER[kind]] = float(x)
    d = Domain(build(x), f"{kind}(s={target_measure:g})", R, kind, merged)
    if abs(gaussian_measure(d) - target_measure) > measure_tol:
        raise GeometryError(f"{kind} calibration missed the target measure")
    return d


def load_domain_spec(spec) -> Domain:
    """Build a domain from a JSON spec (dict, JSON text or path).

    Fields: ``kind``, ``target_measure``, optional ``params``,
    ``truncation_radius`` and ``segments``.
    """
    if isinstance(spec, (str, Path)):
        text = str(spec)
        spec = json.loads(text) if text.lstrip().startswith("{") else json.loads(
            Path(spec).read_text())
    return make_family(spec["kind"], float(spec["target_measure"]), spec.get("params"),
                       float(spec.get("truncation_radius", DEFAULT_TRUNCATION_RADIUS)),
                       int(spec.get("segments", DEFAULT_SEGMENTS)))


def domain_info(d: Domain) -> dict:
    m = gaussian_measure(d)
    per = gaussian_perimeter(d)
    return {
        "name": d.name,
        "kind": d.kind,
        "params": {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.params.items()},
        "measure": m,
        "perimeter": per,
        "lambda_star": symmetrize(d, m).lam,
        "isoperimetric_margin": per - float(isoperimetric_function(m)),
        "truncation_bounds": {k: (v if math.isfinite(v) else None)
                              for k, v in truncation_error_bounds(d).items()},
    }
