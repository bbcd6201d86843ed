"""Super-level sets ``U_t = {u > t}`` of P1 fields and the level-set checks.

The interpolant is linear on each triangle, so ``U_t`` restricted to a cut
triangle is a triangle or the triangle minus one corner. Triangles lying
wholly above ``t`` are summed through suffix sums over their minimum nodal
value, which keeps the cost per level proportional to the number of cut
triangles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NumericalError
from .fem import DiscreteField, _element_weights, _gradients
from .gauss import gauss_density, half_space_measure_inverse, isoperimetric_function
from .halfspace import HalfSpaceProblem, v_min
from .quadrature import gauss_legendre, signed_areas, triangle_rule

N_LEVELS = 200
N_REFINE = 60
COLLISION_EPS = 1e-12
_EDGE_ORDER = 8


@dataclass(frozen=True, eq=False)
class LevelSetProfile:
    """Sampled ``t -> (mu, P_u, int_{dU_t^ext} phi / u)``.

    ``mu_prime`` is the exact derivative of the sampled ``mu`` from the
    coarea formula for piecewise-linear fields, ``-sum int phi / |grad u|``
    over the cut triangles; ``mu_prime_fd`` the centred difference on the grid.
    """

    t: np.ndarray
    mu: np.ndarray
    perim: np.ndarray
    ext_integral: np.ndarray
    mu_prime: np.ndarray
    mu_prime_fd: np.ndarray
    perturbed: np.ndarray
    u_min: float
    u_max: float
    u_bmax: float
    measure: float

    def rows(self):
        return np.c_[self.t, self.mu, self.perim, self.ext_integral]


@dataclass(frozen=True, eq=False)
class _LevelData:
    vals: np.ndarray        # (m, 3) nodal values sorted per triangle
    xy: np.ndarray          # (m, 3, 2) vertices in the same order
    tmin: np.ndarray
    tmax: np.ndarray
    mass: np.ndarray
    grad_norm: np.ndarray
    order_min: np.ndarray   # triangles sorted by minimum value
    min_sorted: np.ndarray
    mass_suffix: np.ndarray
    e_vals: np.ndarray      # physical edges: nodal values, sorted per edge
    e_xy: np.ndarray
    e_min_sorted: np.ndarray
    e_phi_suffix: np.ndarray
    e_inv_suffix: np.ndarray
    e_order: np.ndarray


def _suffix(x):
    return np.concatenate([np.cumsum(x[::-1])[::-1], [0.0]])


def _segment_phi(a, b, weight=None):
    """``int phi`` (or ``int phi * weight``) over segments ``[a, b]`` by GL."""
    x, w = gauss_legendre(_EDGE_ORDER)
    pts = a[:, None, :] + x[None, :, None] * (b - a)[:, None, :]
    L = np.linalg.norm(b - a, axis=1)
    f = np.asarray(gauss_density(pts, 2)).reshape(len(a), len(x))
    if weight is not None:
        f = f * weight(x)
    return (f @ w) * L


@lru_cache(maxsize=16)
def _level_data(u: DiscreteField) -> _LevelData:
    m = u.mesh
    c = u.coefficients
    raw = c[m.triangles]
    perm = np.argsort(raw, axis=1, kind="stable")
    vals = np.take_along_axis(raw, perm, 1)
    xy = np.take_along_axis(m.vertices[m.triangles], perm[..., None], 1)
    wphi, _ = _element_weights(m, u.cfg.quad_order_volume)
    mass = wphi.sum(1)
    G = _gradients(m)
    grad = np.einsum("ti,tid->td", raw, G)
    order = np.argsort(vals[:, 0], kind="stable")

    E = m.physical_edges()
    ev = c[E]
    eperm = np.argsort(ev, axis=1, kind="stable")
    e_vals = np.take_along_axis(ev, eperm, 1)
    e_xy = np.take_along_axis(m.vertices[E], eperm[..., None], 1)
    a, b = e_xy[:, 0], e_xy[:, 1]
    e_phi = _segment_phi(a, b)
    ok = e_vals[:, 0] > 0
    e_inv = np.zeros(len(E))
    if ok.any():
        ua, ub = e_vals[ok, 0], e_vals[ok, 1]
        e_inv[ok] = _segment_phi(a[ok], b[ok],
                                 lambda x: 1.0 / (ua[:, None] + x[None, :] * (ub - ua)[:, None]))
    eorder = np.argsort(e_vals[:, 0], kind="stable")
    return _LevelData(vals, xy, vals[:, 0], vals[:, 2], mass, np.linalg.norm(grad, axis=1),
                      order, vals[order, 0], _suffix(mass[order]),
                      e_vals, e_xy, e_vals[eorder, 0], _suffix(e_phi[eorder]),
                      _suffix(e_inv[eorder]), eorder)


def _crossing(xa, xb, ua, ub, t):
    s = (t - ua) / (ub - ua)
    return xa + s[:, None] * (xb - xa)


def _small_triangle_mass(p0, p1, p2, order):
    tri = np.stack([p0, p1, p2], 1)
    bary, w = triangle_rule(order)
    pts = np.einsum("qk,tkd->tqd", bary, tri)
    return (np.asarray(gauss_density(pts, 2)) * w).sum(1) * np.abs(signed_areas(tri))


def _level_quantities(u: DiscreteField, t: float):
    """``(mu, interface phi-length, -mu', physical-boundary phi-length, ext integral)``."""
    L = _level_data(u)
    full = L.mass_suffix[np.searchsorted(L.min_sorted, t, side="right")]
    cut = np.flatnonzero((L.tmin <= t) & (L.tmax > t))
    mu = full
    iface = 0.0
    coarea = 0.0
    if cut.size:
        v = L.vals[cut]
        X = L.xy[cut]
        a, b, c = X[:, 0], X[:, 1], X[:, 2]
        ua, ub, uc = v[:, 0], v[:, 1], v[:, 2]
        upper = ub <= t   # only the top vertex lies above t
        p_ac = _crossing(a, c, ua, uc, t)
        p_other = np.empty_like(p_ac)
        # upper: the other crossing is on bc; lower: on ab
        if upper.any():
            p_other[upper] = _crossing(b[upper], c[upper], ub[upper], uc[upper], t)
        if (~upper).any():
            p_other[~upper] = _crossing(a[~upper], b[~upper], ua[~upper], ub[~upper], t)
        corner = np.where(upper[:, None], c, a)
        small = _small_triangle_mass(corner, p_ac, p_other, u.cfg.quad_order_volume)
        mu += float(np.sum(np.where(upper, small, L.mass[cut] - small)))
        seg = _segment_phi(p_ac, p_other)
        iface = float(seg.sum())
        gn = L.grad_norm[cut]
        coarea = float(np.sum(seg[gn > 0] / gn[gn > 0]))
    k = np.searchsorted(L.e_min_sorted, t, side="right")
    bnd = float(L.e_phi_suffix[k])
    ext = float(L.e_inv_suffix[k])
    ecut = np.flatnonzero((L.e_vals[:, 0] <= t) & (L.e_vals[:, 1] > t))
    if ecut.size:
        ua, ub = L.e_vals[ecut, 0], L.e_vals[ecut, 1]
        pa = _crossing(L.e_xy[ecut, 0], L.e_xy[ecut, 1], ua, ub, t)
        pb = L.e_xy[ecut, 1]
        bnd += float(_segment_phi(pa, pb).sum())
        lo = np.full_like(ub, t)
        if np.any(lo <= 0):
            raise NumericalError("nonpositive boundary value on a contributing edge")
        ext += float(_segment_phi(pa, pb, lambda x: 1.0 / (
            lo[:, None] + x[None, :] * (ub - lo)[:, None])).sum())
    return mu, iface, coarea, bnd, ext


def _regular_level(u: DiscreteField, t: float) -> tuple[float, bool]:
    """Shift ``t`` off nodal values by a relative ``1e-12`` of the field range."""
    c = u.coefficients
    shift = COLLISION_EPS * max(u.u_max - u.u_min, abs(u.u_max), 1e-300)
    moved = False
    while np.any(c == t):
        t += shift
        moved = True
    return t, moved


def distribution_function(u: DiscreteField, t: float) -> float:
    """Gaussian measure ``mu(t)`` of ``{u > t}`` for the P1 interpolant."""
    return _level_quantities(u, float(t))[0]


def level_perimeter(u: DiscreteField, t: float) -> float:
    """``P_phi(U_t)``: interior interface plus the physical boundary part of ``dU_t``."""
    t, _ = _regular_level(u, float(t))
    q = _level_quantities(u, t)
    return q[1] + q[3]


def boundary_robin_integral(u: DiscreteField, t: float) -> float:
    """``int_{dU_t cap physical dOmega} phi / u dH^1``."""
    return _level_quantities(u, float(t))[4]


def coarea_derivative(u: DiscreteField, t: float) -> float:
    """Exact ``mu'(t)`` of the interpolant, ``-int_{u = t} phi / |grad u|``."""
    t, _ = _regular_level(u, float(t))
    return -_level_quantities(u, t)[2]


def level_grid(u: DiscreteField, n_levels: int = N_LEVELS, v_m: float | None = None,
               n_refine: int = N_REFINE) -> np.ndarray:
    """``n_levels`` uniform levels on ``[0, u_max (1 - 1e-6)]`` plus refinements.

    Extra levels cover the range of the physical boundary values, where the
    exterior boundary set shrinks, and a window around ``v_m`` when given.
    """
    top = u.u_max * (1 - 1e-6)
    grids = [np.linspace(0.0, top, n_levels)]
    b = u.coefficients[u.mesh.boundary_nodes()]
    if b.size:
        grids.append(np.linspace(max(0.0, b.min()), min(b.max(), top), n_refine))
    if v_m is not None and 0 < v_m < top:
        w = 0.05 * top
        grids.append(np.linspace(max(0.0, v_m - w), min(top, v_m + w), n_refine // 2))
    return np.unique(np.concatenate(grids))


def _sample_levels(u: DiscreteField, ts) -> np.ndarray:
    rows = []
    for t in ts:
        t2, mv = _regular_level(u, float(t))
        q = _level_quantities(u, t2)
        rows.append((t2, q[0], q[1] + q[3], q[4], -q[2], float(mv)))
    return np.array(rows).reshape(-1, 6)


def compute_profile(u: DiscreteField, n_levels: int = N_LEVELS, v_m: float | None = None,
                    t_grid=None, refine_tol: float = 1e-7, max_rounds: int = 8) -> LevelSetProfile:
    """Sample the level-set quantities on :func:`level_grid` (or ``t_grid``).

    Unless an explicit grid is given, intervals where the cubic Hermite
    interpolant of ``mu`` misses the sampled midpoint by more than
    ``refine_tol`` (relative to ``int mu``, per unit of ``t``) are bisected.
    ``mu`` is only piecewise smooth where levels cross boundary extrema, and
    this keeps the layer-cake quadrature accurate there.
    """
    ts = level_grid(u, n_levels, v_m) if t_grid is None else np.asarray(t_grid, float)
    S = _sample_levels(u, ts)
    if t_grid is None and len(S) > 1:
        scale = max(abs(float(np.sum(0.5 * np.diff(S[:, 0]) * (S[1:, 1] + S[:-1, 1])))), 1e-300)
        span = S[-1, 0] - S[0, 0]
        active = np.ones(len(S) - 1, dtype=bool)
        for _ in range(max_rounds):
            t, mu, dmu = S[:, 0], S[:, 1], S[:, 4]
            dt = np.diff(t)
            idx = np.flatnonzero(active & (dt > 1e-9 * span))
            if idx.size == 0:
                break
            mids = _sample_levels(u, t[idx] + 0.5 * dt[idx])
            pred = 0.5 * (mu[idx] + mu[idx + 1]) + dt[idx] * (dmu[idx] - dmu[idx + 1]) / 8
            bad = np.abs(mids[:, 1] - pred) > refine_tol * scale / span
            S = np.concatenate([S, mids])
            order = np.argsort(S[:, 0], kind="stable")
            # intervals next to a failed midpoint stay active
            flag = np.zeros(len(S), dtype=bool)
            flag[len(S) - len(mids):] = bad
            S, flag = S[order], flag[order]
            active = flag[1:] | flag[:-1]
            if not active.any():
                break
    t, mu = S[:, 0], S[:, 1]
    fd = np.gradient(mu, t) if len(t) > 1 else np.zeros(1)
    b = u.coefficients[u.mesh.boundary_nodes()]
    return LevelSetProfile(t, mu, S[:, 2], S[:, 3], S[:, 4], fd, S[:, 5] > 0,
                           u.u_min, u.u_max, float(b.max()) if b.size else math.nan,
                           float(_level_data(u).mass.sum()))


# ---------------------------------------------------------------------------
# checks


def eps_disc(h: float) -> float:
    return 10.0 * h * h


def eps_lem(h: float) -> float:
    return 50.0 * h


@dataclass(frozen=True, eq=False)
class LevelInequalityReport:
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    reliable: np.ndarray
    tolerance: float

    @property
    def max_margin(self) -> float:
        m = self.margin[self.reliable]
        return float(m.max()) if m.size else -math.inf

    @property
    def passed(self) -> bool:
        return bool(self.reliable.any()) and self.max_margin <= self.tolerance


def check_level_inequality(u: DiscreteField, beta: float, profile: LevelSetProfile,
                           h: float | None = None, noise_rel: float = 0.05) -> LevelInequalityReport:
    """``I(mu)^2 - mu (-mu' + int_{dU_t^ext} phi / u / beta)`` per level.

    ``mu'`` is the centred difference on the profile grid. A level is flagged
    unreliable when that estimate disagrees with the exact coarea derivative
    by more than ``noise_rel``, when ``mu`` is within rounding of 0 or of the
    total measure, or when the level was perturbed off a nodal value.
    """
    h = u.mesh.target_h if h is None else h
    mu = profile.mu
    inside = (mu > 1e-12) & (mu < 1 - 1e-12)
    lhs = np.zeros_like(mu)
    lhs[inside] = np.asarray(isoperimetric_function(mu[inside])) ** 2
    rhs = mu * (-profile.mu_prime_fd + profile.ext_integral / beta)
    scale = np.maximum(np.abs(profile.mu_prime), 1e-12)
    agree = np.abs(profile.mu_prime_fd - profile.mu_prime) <= noise_rel * scale
    full = mu >= profile.measure * (1 - 1e-12)
    reliable = inside & agree & ~profile.perturbed & ~full
    return LevelInequalityReport(profile.t, lhs, rhs, lhs - rhs, reliable, eps_lem(h))


@dataclass(frozen=True)
class FubiniReport:
    direct_residual: float
    integrated_residual: float
    boundary_integral: float
    target: float


def check_fubini_identity(u: DiscreteField, beta: float, profile: LevelSetProfile | None = None,
                          measure: float | None = None) -> FubiniReport:
    """Boundary identities ``int u phi = |Omega|/beta`` and its level-integrated half.

    The integrated form ``int_0^inf t (int_{dU_t^ext} phi / u) dt`` is taken by
    the trapezoid rule over the profile grid, extended by the constant value
    on ``[0, t_0]`` and by zero above the largest boundary value.
    """
    from .fem import boundary_integral

    m = profile.measure if (measure is None and profile is not None) else measure
    if m is None:
        m = float(_element_weights(u.mesh, u.cfg.quad_order_volume)[0].sum())
    bi = boundary_integral(u)
    target = m / beta
    direct = abs(bi - target) / target
    integ = math.nan
    if profile is not None:
        t = np.concatenate([[0.0], profile.t, [max(profile.u_bmax, profile.t[-1])]])
        g = np.concatenate([[profile.ext_integral[0]], profile.ext_integral, [0.0]]) * t
        integ = abs(np.trapezoid(g, t) - 0.5 * target) / (0.5 * target)
    return FubiniReport(direct, integ, bi, target)


@dataclass(frozen=True, eq=False)
class DistributionReport:
    t: np.ndarray
    margin: np.ndarray
    tolerance: float

    @property
    def min_margin(self) -> float:
        return float(self.margin.min())

    @property
    def passed(self) -> bool:
        return self.min_margin >= -self.tolerance


def check_distribution_comparison(u: DiscreteField, hs: HalfSpaceProblem, n: int = 50,
                                  h: float | None = None) -> DistributionReport:
    """``phi(t) - mu(t)`` on ``[0, v_m]``, where ``phi(t) = h(lam)`` there."""
    h = u.mesh.target_h if h is None else h
    vm = v_min(hs)
    t = np.linspace(0.0, vm, n)
    mu = np.array([distribution_function(u, ti) for ti in t])
    return DistributionReport(t, hs.measure() - mu, eps_disc(h))


def layer_cake_integral(profile: LevelSetProfile) -> float:
    """``int_0^inf mu(t) dt`` by the trapezoid rule with end corrections.

    Uses the exact derivatives ``mu'`` at the grid points (cubic Hermite
    trapezoid), so the rule is fourth order on smooth stretches. ``mu`` is
    the constant total measure below the first level and vanishes above
    ``u_max``.
    """
    t, mu, dmu = profile.t, profile.mu, profile.mu_prime
    total = profile.measure * max(t[0], 0.0)
    dt = np.diff(t)
    total += float(np.sum(0.5 * dt * (mu[1:] + mu[:-1]) + dt ** 2 / 12 * (dmu[:-1] - dmu[1:])))
    # last level to u_max: mu is a small cubic-like cap; Hermite with mu(u_max) = 0, mu' = 0
    d = profile.u_max - t[-1]
    total += 0.5 * d * mu[-1] + d * d / 12 * dmu[-1]
    return total


def layer_cake_residual(u: DiscreteField, profile: LevelSetProfile) -> float:
    from .fem import torsion_value

    T = torsion_value(u)
    return abs(T - layer_cake_integral(profile)) / T


def halfspace_level_check(u: DiscreteField, profile: LevelSetProfile) -> np.ndarray:
    """``P_u(t) - I(mu(t))`` per level; nonnegative for any set by isoperimetry."""
    mu = profile.mu
    out = np.full_like(mu, np.nan)
    ok = (mu > 0) & (mu < 1)
    out[ok] = profile.perim[ok] - np.asarray(isoperimetric_function(mu[ok]))
    return out


def symmetrized_problem(measure: float, beta: float) -> HalfSpaceProblem:
    return HalfSpaceProblem(float(half_space_measure_inverse(measure)), beta)


__all__ = [
    "LevelSetProfile", "distribution_function", "level_perimeter", "boundary_robin_integral",
    "coarea_derivative", "compute_profile", "level_grid", "check_level_inequality",
    "check_fubini_identity", "check_distribution_comparison", "layer_cake_integral",
    "layer_cake_residual", "halfspace_level_check", "eps_disc", "eps_lem",
    "symmetrized_problem",
]
