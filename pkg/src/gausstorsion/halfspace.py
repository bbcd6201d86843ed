"""The symmetrized torsion problem on the half-space ``{x_1 > lam}``.

On the half-space the torsion function depends on ``x_1`` only::

    v(x_1) = C + int_lam^{x_1} R(r) dr,     C = R(lam) / beta,

with ``R`` the Mills ratio. Everything here is one-dimensional; the transverse
coordinates integrate to one against the Gaussian weight.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError, NumericalError
from .gauss import (DEFAULT_TOL, Tolerances, gauss_density, half_space_measure,
                    half_space_measure_inverse, isoperimetric_function, mills_ratio)
from .quadrature import adaptive_gauss_legendre, gauss_legendre

_PANEL = 0.25
_PANEL_NODES = 20
_TABLE_SPAN = 50.0


@dataclass(frozen=True)
class HalfSpaceProblem:
    """Threshold ``lam`` of the half-space and Robin parameter ``beta``."""

    lam: float
    beta: float

    def __post_init__(self):
        if not np.isfinite(self.lam):
            raise DomainError("lambda must be finite")
        if not (np.isfinite(self.beta) and self.beta > 0):
            raise DomainError("beta must be a positive finite number")

    @classmethod
    def from_measure(cls, s: float, beta: float) -> "HalfSpaceProblem":
        return cls(float(half_space_measure_inverse(s)), beta)

    def measure(self) -> float:
        return float(half_space_measure(self.lam))

    def perimeter(self) -> float:
        """Gaussian perimeter of the bounding hyperplane, ``phi_1(lam)``."""
        return float(gauss_density(self.lam))


def robin_constant(problem: HalfSpaceProblem) -> float:
    return float(mills_ratio(problem.lam)) / problem.beta


def v_min(problem: HalfSpaceProblem) -> float:
    """Minimum of ``v``, attained on the hyperplane ``x_1 = lam``."""
    return robin_constant(problem)


@dataclass(frozen=True, eq=False)
class ClosedFormSolution:
    """Closed-form ``v`` with a cumulative table of ``int R`` over fixed panels.

    Panels of width 0.25 starting at ``lam`` are integrated once with a
    20-point Gauss-Legendre rule; ``v(x)`` is then the table entry of the
    panel containing ``x`` plus one more 20-point rule over the remainder.
    """

    problem: HalfSpaceProblem
    C: float = field(init=False)
    _edges: np.ndarray = field(init=False, repr=False)
    _cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lam = self.problem.lam
        # the table must reach r = 50, where the asymptotic tail takes over
        n_panels = int(np.ceil(max(_TABLE_SPAN, _TABLE_SPAN - lam) / _PANEL))
        edges = lam + _PANEL * np.arange(n_panels + 1)
        x, w = gauss_legendre(_PANEL_NODES)
        pts = edges[:-1, None] + _PANEL * x[None, :]
        panel = _PANEL * (np.asarray(mills_ratio(pts)) @ w)
        object.__setattr__(self, "C", robin_constant(self.problem))
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_cumulative", np.concatenate([[0.0], np.cumsum(panel)]))

    @property
    def v_m(self) -> float:
        return self.C

    def __call__(self, x1):
        return evaluate_v(self, x1)


def _mills_integral_tail(a, x, terms=8):
    # int_a^x R for a >= 50 from R(r) ~ sum_k (-1)^k (2k-1)!! r^-(2k+1); term 8 is below 1e-20
    out = np.log(x / a)
    coef = 1.0
    for k in range(1, terms):
        coef *= -(2 * k - 1)
        out += coef / (2 * k) * (a ** (-2.0 * k) - x ** (-2.0 * k))
    return out


def evaluate_v(sol: ClosedFormSolution, x1):
    """Value of the half-space torsion function at ``x1 >= lam``."""
    x1 = np.asarray(x1, dtype=float)
    lam = sol.problem.lam
    if not np.all(np.isfinite(x1)):
        raise DomainError("x1 must be finite")
    if np.any(x1 < lam):
        raise DomainError("v is only defined on the half-space x1 >= lambda")
    flat = np.atleast_1d(x1)
    last = len(sol._edges) - 1
    k = np.minimum(np.floor((flat - lam) / _PANEL).astype(int), last)
    a = sol._edges[k]
    x, w = gauss_legendre(_PANEL_NODES)
    in_table = k < last
    width = np.where(in_table, flat - a, 0.0)
    partial = width * (np.asarray(mills_ratio(a[:, None] + width[:, None] * x[None, :])) @ w)
    out = sol.C + sol._cumulative[k] + partial
    if not in_table.all():
        out[~in_table] += _mills_integral_tail(a[~in_table], flat[~in_table])
    return out.item() if x1.ndim == 0 else out.reshape(x1.shape)


def inverse_v(sol: ClosedFormSolution, t, tol: Tolerances = DEFAULT_TOL):
    """Solve ``v(x) = t`` for ``t >= v_m``.

    ``v`` is increasing and concave, so Newton's method started from the
    tangent line at ``lam`` approaches the root monotonically from below.
    """
    t = np.asarray(t, dtype=float)
    lam = sol.problem.lam
    if np.any(t < sol.C):
        raise DomainError("t must be at least v_m")
    flat = np.atleast_1d(t)
    x = lam + (flat - sol.C) / float(mills_ratio(lam))
    active = np.ones(flat.shape, dtype=bool)
    eps = np.finfo(float).eps
    for _ in range(tol.max_newton_iters):
        resid = flat[active] - np.atleast_1d(evaluate_v(sol, x[active]))
        step = resid / np.atleast_1d(mills_ratio(x[active]))
        x[active] = np.maximum(x[active] + step, lam)
        # v' = R ~ 1 / x amplifies rounding in v, so also stop on a rounding-level residual
        done = (np.abs(step) <= 4 * eps * np.maximum(1.0, np.abs(x[active]))) | (
            np.abs(resid) <= 4 * eps * np.abs(flat[active]))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        if not active.any():
            return x.item() if t.ndim == 0 else x.reshape(t.shape)
    raise NumericalError("inversion of v did not converge")


def distribution_of_v(sol: ClosedFormSolution, t, tol: Tolerances = DEFAULT_TOL):
    """Gaussian measure of ``{v > t}``: ``h(lam)`` up to ``v_m``, then ``h(v^{-1}(t))``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be nonnegative")
    flat = np.atleast_1d(t)
    out = np.full(flat.shape, sol.problem.measure())
    above = flat > sol.C
    if above.any():
        out[above] = half_space_measure(np.atleast_1d(inverse_v(sol, flat[above], tol)))
    return out.item() if t.ndim == 0 else out.reshape(t.shape)


def perimeter_of_v_levels(sol: ClosedFormSolution, t, tol: Tolerances = DEFAULT_TOL):
    """Gaussian perimeter of ``{v > t}``; the hyperplane ``{x_1 = max(lam, v^{-1}(t))}``."""
    t = np.asarray(t, dtype=float)
    flat = np.atleast_1d(t)
    thresh = np.full(flat.shape, sol.problem.lam)
    above = flat > sol.C
    if above.any():
        thresh[above] = inverse_v(sol, flat[above], tol)
    out = np.asarray(gauss_density(thresh))
    return out.item() if t.ndim == 0 else out.reshape(t.shape)


def _torsion_tail_bound(sol: ClosedFormSolution, b: float) -> float:
    # v(x) <= v(b) + R(b) (x - b) for x >= b by concavity of v
    hb = float(half_space_measure(b))
    return float(evaluate_v(sol, b)) * hb + float(mills_ratio(b)) * (
        float(gauss_density(b)) - b * hb)


def halfspace_torsion(problem: HalfSpaceProblem, tol: Tolerances = DEFAULT_TOL,
                      sol: ClosedFormSolution | None = None) -> float:
    """Torsional rigidity of the half-space, ``int_lam^inf v phi_1 dx_1``.

    The integration range is cut at the first ``b`` whose concavity tail bound
    is below ``abs_tol / 10``, so the truncation error is certified.
    """
    sol = sol or ClosedFormSolution(problem)
    b = max(problem.lam, 0.0) + 1.0
    while _torsion_tail_bound(sol, b) > 0.1 * tol.abs_tol:
        b += 0.5
    return adaptive_gauss_legendre(
        lambda x: np.asarray(evaluate_v(sol, x)) * np.asarray(gauss_density(x)),
        problem.lam, b, abs_tol=0.5 * tol.abs_tol, rel_tol=1e-13)


def isoperimetric_identity_residual(problem: HalfSpaceProblem) -> float:
    """Relative residual of ``v_m I(h(lam)) = h(lam) / beta``."""
    s = problem.measure()
    target = s / problem.beta
    return abs(v_min(problem) * float(isoperimetric_function(s)) - target) / target


def fubini_constant(problem: HalfSpaceProblem) -> float:
    """``int_0^inf t (int_{dV_t on the hyperplane} phi / v) dt`` in reduced form.

    The hyperplane belongs to ``{v > t}`` exactly for ``t < v_m``, where
    ``v = v_m`` on it, so the integral is ``(v_m / 2) I(h(lam))``.
    """
    return 0.5 * v_min(problem) * float(isoperimetric_function(problem.measure()))


@dataclass(frozen=True)
class BVPSolution:
    x: np.ndarray
    v: np.ndarray

    def max_deviation(self, sol: ClosedFormSolution) -> float:
        return float(np.max(np.abs(self.v - np.asarray(evaluate_v(sol, self.x)))))


def bvp_cross_check(problem: HalfSpaceProblem, truncation: float = 10.0,
                    mesh_size: float = 1e-3, far_field: str = "flux") -> BVPSolution:
    """Finite-difference solution of the 1-D problem on ``(lam, lam + truncation)``.

    Flux form ``-(phi_1 v')' = phi_1`` with the weight at cell midpoints,
    sources integrated exactly over each control volume, and the Robin condition ``-v'(lam) + beta v(lam) = 0`` through a half control
    volume. At the truncated end ``L`` the default ``far_field="flux"``
    prescribes the outgoing weighted flux ``phi_1 v' = h(L)``, i.e. the mass
    lying beyond ``L``. ``far_field="neumann"`` sets ``v'(L) = 0`` instead;
    the flux error is then only ``h(L)``, but the slope error ``R(L) ~ 1/L``
    bends ``v`` by ``O(1/L^2)`` over the last unit interval.
    """
    if far_field not in ("flux", "neumann"):
        raise DomainError("far_field must be 'flux' or 'neumann'")
    if truncation < 4.0:
        raise DomainError("truncation must be at least 4")
    if not mesh_size > 0:
        raise DomainError("mesh_size must be positive")
    n = int(np.ceil(truncation / mesh_size))
    dx = truncation / n
    x = problem.lam + dx * np.arange(n + 1)
    xm = 0.5 * (x[:-1] + x[1:])
    g = np.asarray(gauss_density(xm)) / dx  # conductances
    # exact source mass of each control volume [x_{i-1/2}, x_{i+1/2}]
    faces = np.asarray(half_space_measure(np.concatenate([[x[0]], xm, [x[-1]]])))
    src = faces[:-1] - faces[1:]
    if far_field == "flux":
        src[-1] += float(half_space_measure(x[-1]))
    diag = np.zeros(n + 1)
    diag[:-1] += g
    diag[1:] += g
    diag[0] += problem.beta * float(gauss_density(x[0]))
    ab = np.zeros((3, n + 1))
    ab[0, 1:] = -g
    ab[1] = diag
    ab[2, :-1] = -g
    try:
        v = solve_banded((1, 1), ab, src)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular finite-difference system: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise NumericalError("finite-difference solve produced non-finite values")
    return BVPSolution(x, v)
