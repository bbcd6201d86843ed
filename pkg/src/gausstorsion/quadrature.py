"""Quadrature rules: Gauss-Legendre on intervals and symmetric triangle rules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import NumericalError


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``n``-point Gauss-Legendre rule on ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def adaptive_gauss_legendre(f, a: float, b: float, abs_tol: float = 1e-14,
                            rel_tol: float = 1e-12, order: int = 15,
                            max_rounds: int = 60) -> float:
    """Integrate a vectorised ``f`` over ``[a, b]`` by interval bisection.

    Every active interval is integrated with one ``order``-point panel and with
    two half-panels; intervals whose two estimates agree to within their share
    of the tolerance are retired, the others are split. All active intervals
    are processed together so ``f`` is called once per round.
    """
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    x, w = gauss_legendre(order)
    total_width = b - a
    lo = np.array([a], dtype=float)
    hi = np.array([b], dtype=float)
    accepted = 0.0
    for _ in range(max_rounds):
        width = hi - lo
        mid = 0.5 * (lo + hi)
        # whole panel, left half, right half
        pts = np.concatenate([lo[:, None] + width[:, None] * x,
                              lo[:, None] + 0.5 * width[:, None] * x,
                              mid[:, None] + 0.5 * width[:, None] * x], axis=1)
        vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
        n = len(x)
        coarse = width * (vals[:, :n] @ w)
        fine = 0.5 * width * (vals[:, n:2 * n] @ w + vals[:, 2 * n:] @ w)
        err = np.abs(fine - coarse)
        estimate = accepted + fine.sum()
        tol = max(abs_tol, rel_tol * abs(estimate))
        done = err <= tol * width / total_width
        accepted += fine[done].sum()
        if done.all():
            return sign * accepted
        lo, hi = lo[~done], hi[~done]
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    raise NumericalError(
        f"adaptive quadrature on [{a}, {b}] did not converge in {max_rounds} rounds")


def _orbit3(a, w):
    b = (1.0 - a) / 2.0
    return [(a, b, b), (b, a, b), (b, b, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _build_rule(*orbits):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts), np.array(wts)


_SQ15 = np.sqrt(15.0)

_TRIANGLE_RULES = {
    1: _build_rule(([(1 / 3, 1 / 3, 1 / 3)], [1.0])),
    2: _build_rule(_orbit3(2 / 3, 1 / 3)),
    4: _build_rule(_orbit3(0.108103018168070, 0.223381589678011),
                   _orbit3(0.816847572980459, 0.109951743655322)),
    5: _build_rule(([(1 / 3, 1 / 3, 1 / 3)], [9 / 40]),
                   _orbit3(1 - 2 * (6 - _SQ15) / 21, (155 - _SQ15) / 1200),
                   _orbit3(1 - 2 * (6 + _SQ15) / 21, (155 + _SQ15) / 1200)),
    6: _build_rule(_orbit3(0.501426509658179, 0.116786275726379),
                   _orbit3(0.873821971016996, 0.050844906370207),
                   _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374)),
}


def triangle_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric rule exact for polynomials of total degree ``order``.

    Returns barycentric coordinates of shape ``(q, 3)`` and weights summing to
    one (multiply by the triangle area). Unsupported orders are rounded up to
    the next available rule.
    """
    for k in sorted(_TRIANGLE_RULES):
        if k >= order:
            return _TRIANGLE_RULES[k]
    raise ValueError(f"no triangle rule of order {order}; max is {max(_TRIANGLE_RULES)}")


def signed_areas(tri: np.ndarray) -> np.ndarray:
    """Signed areas of triangles given as an ``(m, 3, 2)`` coordinate array."""
    d1 = tri[:, 1] - tri[:, 0]
    d2 = tri[:, 2] - tri[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def triangle_points(tri: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Physical quadrature points ``(m, q, 2)`` and weights ``(m, q)``."""
    bary, w = triangle_rule(order)
    pts = np.einsum("qk,mkd->mqd", bary, tri)
    wts = np.abs(signed_areas(tri))[:, None] * w[None, :]
    return pts, wts
