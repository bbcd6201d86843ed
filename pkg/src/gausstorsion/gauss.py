"""Scalar special functions of the Gauss space.

All functions accept scalars or numpy arrays and broadcast elementwise. The
tail integral ``int_x^inf exp(-t^2/2) dt`` is always obtained through the
scaled complementary error function ``erfcx`` so that products such as
``exp(r^2/2) * tail(r)`` never overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError
from .quadrature import adaptive_gauss_legendre

SQRT2 = np.sqrt(2.0)
SQRT_2PI = np.sqrt(2.0 * np.pi)
INV_SQRT_2PI = 1.0 / SQRT_2PI
SQRT_PI_OVER_2 = np.sqrt(np.pi / 2.0)

# Below this argument erfcx uses the Chebyshev-rational fit, above it the
# Laplace continued fraction (40 terms reach full precision for x >= 4).
_ERFCX_CF_SWITCH = 4.0
_ERFCX_CF_TERMS = 40
_MILLS_CF_SWITCH = 4.0
_MILLS_CF_TERMS = 80


@dataclass(frozen=True)
class Tolerances:
    abs_tol: float = 1e-12
    rel_tol: float = 1e-10
    max_newton_iters: int = 100

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.max_newton_iters < 1:
            raise DomainError("max_newton_iters must be at least 1")


DEFAULT_TOL = Tolerances()


def _as_finite(x, name="argument"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _in_open_unit(s, name="s"):
    arr = np.asarray(s, dtype=float)
    if not np.all((arr > 0.0) & (arr < 1.0)):
        raise DomainError(f"{name} must lie in the open interval (0, 1)")
    return arr


def _ret(arr):
    return arr.item() if np.ndim(arr) == 0 else arr


def _erfcx_rational(x):
    # Chebyshev expansion of (1 + 2x) erfcx(x) in t = k / (x + k), valid for x >= 0.
    t = 3.97886080735226 / (x + 3.97886080735226)
    u = t - 0.5
    y = u * 0.00127109764952614092 + 1.19314022838340944e-4
    for c in (-0.003963850973605135, -8.70779635317295828e-4,
              0.00773672528313526668, 0.00383335126264887303,
              -0.0127223813782122755, -0.0133823644533460069,
              0.0161315329733252248, 0.0390976845588484035,
              0.00249367200053503304):
        y = y * u + c
    for c in (-0.0838864557023001992, -0.119463959964325415,
              0.0166207924969367356, 0.357524274449531043,
              0.805276408752910567, 1.18902982909273333,
              1.37040217682338167, 1.31314653831023098,
              1.07925515155856677, 0.774368199119538609,
              0.490165080585318424, 0.275374741597376782):
        y = y * u + c
    return y * t


def _erfcx_cf(x):
    f = np.zeros_like(x)
    for k in range(_ERFCX_CF_TERMS, 0, -1):
        f = (0.5 * k) / (x + f)
    return 1.0 / (np.sqrt(np.pi) * (x + f))


def erfcx(x):
    """Scaled complementary error function ``exp(x^2) erfc(x)``.

    Overflows to ``inf`` for ``x < -26.6``, as the true value does.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    out = np.empty_like(ax)
    big = ax >= _ERFCX_CF_SWITCH
    out[~big] = _erfcx_rational(ax[~big])
    fin = big & np.isfinite(ax)
    out[fin] = _erfcx_cf(ax[fin])
    out[big & ~np.isfinite(ax)] = 0.0
    neg = x < 0
    if np.any(neg):
        with np.errstate(over="ignore"):
            out[neg] = 2.0 * np.exp(x[neg] ** 2) - out[neg]
    out[np.isnan(x)] = np.nan
    return _ret(out)


def gauss_density(x, n: int = 1):
    """Standard Gaussian density ``(2 pi)^(-n/2) exp(-|x|^2 / 2)``.

    For ``n = 1`` the density is applied elementwise to ``x``. For ``n >= 2``
    the last axis of ``x`` holds the coordinates of each point.
    """
    arr = _as_finite(x, "x")
    if n < 1:
        raise DomainError("dimension must be at least 1")
    if n == 1:
        r2 = arr * arr
    else:
        if arr.ndim == 0 or arr.shape[-1] != n:
            raise DomainError(f"points must have {n} coordinates along the last axis")
        r2 = np.sum(arr * arr, axis=-1)
    return _ret((2.0 * np.pi) ** (-0.5 * n) * np.exp(-0.5 * r2))


def mills_ratio(r):
    """``exp(r^2/2) * int_r^inf exp(-t^2/2) dt``, formed in scaled arithmetic."""
    r = _as_finite(r, "r")
    return _ret(SQRT_PI_OVER_2 * np.asarray(erfcx(r / SQRT2)))


def half_space_measure(lam):
    """Gaussian measure ``h(lam)`` of the half-space ``{x_1 > lam}``."""
    lam = _as_finite(lam, "lambda")
    a = np.abs(lam)
    tail = 0.5 * np.exp(-0.5 * a * a) * np.asarray(erfcx(a / SQRT2))
    return _ret(np.where(lam >= 0, tail, 1.0 - tail))


def _inverse_tail(q, tol: Tolerances):
    """Solve ``h(lam) = q`` for ``0 < q <= 1/2`` (so ``lam >= 0``)."""
    # rational starting guess (error below 5e-4), then safeguarded Newton on log h
    t = np.sqrt(-2.0 * np.log(q))
    lam = t - (2.515517 + 0.802853 * t + 0.010328 * t * t) / (
        1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t ** 3)
    lo = np.zeros_like(q)
    hi = np.full_like(q, 9.0)
    # widen the bracket for extreme tails
    while True:
        short = np.asarray(half_space_measure(hi)) > q
        if not short.any():
            break
        hi = np.where(short, 2.0 * hi, hi)
    lam = np.clip(np.maximum(lam, 0.0), lo, hi)
    active = np.ones(q.shape, dtype=bool)
    for _ in range(tol.max_newton_iters):
        hv = np.asarray(half_space_measure(lam))
        above = hv > q
        lo = np.where(above, lam, lo)
        hi = np.where(above, hi, lam)
        new = lam + (np.log(hv) - np.log(q)) * np.asarray(mills_ratio(lam))
        new = np.where((new <= lo) | (new >= hi), 0.5 * (lo + hi), new)
        delta = np.abs(new - lam)
        lam = np.where(active, new, lam)
        active &= delta > 8 * np.finfo(float).eps * np.maximum(1.0, lam)
        if not active.any():
            return lam
    resid = np.abs(np.asarray(half_space_measure(lam)) - q)
    if np.all((resid <= tol.abs_tol) & (resid <= tol.rel_tol * q)):
        return lam
    raise NumericalError("inverse of h did not converge within max_newton_iters")


def half_space_measure_inverse(s, tol: Tolerances = DEFAULT_TOL):
    """Threshold ``lam`` with ``h(lam) = s``, for ``0 < s < 1``."""
    s = _in_open_unit(s)
    flat = np.atleast_1d(s).astype(float)
    upper = flat > 0.5
    q = np.where(upper, 1.0 - flat, flat)
    lam = _inverse_tail(q, tol)
    lam = np.where(upper, -lam, lam)
    lam[flat == 0.5] = 0.0
    out = lam.reshape(np.shape(s))
    return _ret(out)


def isoperimetric_function(s):
    """Gaussian perimeter ``I(s)`` of the half-space of measure ``s``."""
    s = _in_open_unit(s)
    lam = np.asarray(half_space_measure_inverse(s))
    return _ret(INV_SQRT_2PI * np.exp(-0.5 * lam * lam))


def F_function(s):
    """``exp(-(h^{-1}(s))^2) / s^2``; strictly decreasing on (0, 1)."""
    s = _in_open_unit(s)
    lam = np.asarray(half_space_measure_inverse(s))
    return _ret(np.exp(-lam * lam) / (s * s))


def _mills_remainder(t):
    # f with 1/R(t) = t + f, so that 1 - t R(t) = f R(t) without cancellation
    f = np.zeros_like(t)
    for k in range(_MILLS_CF_TERMS, 1, -1):
        f = k / (t + f)
    return 1.0 / (t + f)


def psi_function(t):
    """``exp(-t^2/2) - t * int_t^inf exp(-s^2/2) ds``; positive and decreasing."""
    t = _as_finite(t, "t")
    flat = np.atleast_1d(t).astype(float)
    out = np.empty_like(flat)
    neg = flat <= 0
    out[neg] = (np.exp(-0.5 * flat[neg] ** 2)
                - flat[neg] * SQRT_2PI * np.asarray(half_space_measure(flat[neg])))
    mid = (~neg) & (flat < _MILLS_CF_SWITCH)
    tm = flat[mid]
    out[mid] = np.exp(-0.5 * tm * tm) * (1.0 - tm * np.asarray(mills_ratio(tm)))
    big = flat >= _MILLS_CF_SWITCH
    tb = flat[big]
    out[big] = np.exp(-0.5 * tb * tb) * _mills_remainder(tb) * np.asarray(mills_ratio(tb))
    return _ret(out.reshape(np.shape(t)))


def _H_integrand(lam):
    # s^2 exp(lam^2) ds written in the variable lam = h^{-1}(s)
    return np.asarray(gauss_density(lam)) * np.asarray(mills_ratio(lam)) ** 2 / (2.0 * np.pi)


_H_UPPER = 40.0


def H_function(l, tol: Tolerances = DEFAULT_TOL):
    """``H(l) = int_0^l s^2 exp((h^{-1}(s))^2) ds`` for ``0 <= l < 1``.

    Integrated in the variable ``lam = h^{-1}(s)``, where the integrand
    ``phi(lam) R(lam)^2 / (2 pi)`` is smooth and decays like a Gaussian.
    """
    arr = np.asarray(l, dtype=float)
    if not np.all((arr >= 0.0) & (arr < 1.0)):
        raise DomainError("l must lie in [0, 1)")
    flat = np.atleast_1d(arr)
    out = np.zeros_like(flat)
    for i, li in enumerate(flat):
        if li == 0.0:
            continue
        lo = float(half_space_measure_inverse(li, tol))
        if lo >= _H_UPPER:
            continue
        out[i] = adaptive_gauss_legendre(_H_integrand, lo, _H_UPPER,
                                         abs_tol=tol.abs_tol * 1e-3, rel_tol=tol.rel_tol * 1e-3)
    return _ret(out.reshape(arr.shape))
