"""Binary entropy and the Jensen-Shannon gap function ``h_D`` with its inverse.

``h_D(x1, x2) = 2 h_b((x1 + x2) / 2) - h_b(x1) - h_b(x2)`` is twice the
Jensen-Shannon divergence between Bernoulli(x1) and Bernoulli(x2).

All three functions take a ``base`` argument.  The natural base matches the
exponential-moment arguments used by the bounds; base two puts ``h_D`` on the
``[0, 2]`` scale, where ``h_D(x, 0) >= x`` holds.
"""
from __future__ import annotations

import enum
import math

import numpy as np

from .errors import DomainError

__all__ = ["LogBase", "binary_entropy", "h_d", "h_d_inv"]

INV_TOL = 1e-12
INV_MAX_ITER = 200


class LogBase(str, enum.Enum):
    NATURAL = "natural"
    TWO = "two"

    @classmethod
    def coerce(cls, base) -> "LogBase":
        if isinstance(base, cls):
            return base
        try:
            return cls(str(base).lower())
        except ValueError:
            raise DomainError(f"unknown log base {base!r}") from None

    @property
    def log_scale(self) -> float:
        """Divide natural logs by this to convert into the base."""
        return 1.0 if self is LogBase.NATURAL else math.log(2.0)


def _check_unit(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DomainError(f"{name} must lie in [0, 1], got {x!r}")
    return arr


def _xlogx(x):
    # 0 log 0 := 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0)), 0.0)
    return out


def _hb(x):
    return -_xlogx(x) - _xlogx(1.0 - x)


_SERIES_CUT = 1e-2
# coefficients of u^k, k = 2..11, in (1 + u) log(1 + u) - u
_SERIES = tuple((-1) ** k / (k * (k - 1)) for k in range(2, 12))


def _phi(u):
    """``(1 + u) log(1 + u) - u`` with full relative precision near ``u = 0``."""
    u = np.asarray(u, dtype=float)
    poly = np.zeros_like(u)
    for coef in reversed(_SERIES):
        poly = poly * u + coef
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = np.where(u > -1.0, (1.0 + u) * np.log1p(np.maximum(u, -1.0)), 0.0) - u
    return np.where(np.abs(u) < _SERIES_CUT, poly * u * u, direct)


def _phi_scalar(u: float) -> float:
    if abs(u) < _SERIES_CUT:
        poly = 0.0
        for coef in reversed(_SERIES):
            poly = poly * u + coef
        return poly * u * u
    if u <= -1.0:
        return 1.0
    return (1.0 + u) * math.log1p(u) - u


def _gap(x, m):
    # m * phi((x - m) / m), the generalized KL term; zero when m == 0
    safe = np.where(m > 0.0, m, 1.0)
    return np.where(m > 0.0, m * _phi((x - m) / safe), 0.0)


def _h_d_nats_scalar(a: float, b: float) -> float:
    total = 0.0
    for x, y in ((a, b), (1.0 - a, 1.0 - b)):
        m = 0.5 * (x + y)
        if m > 0.0:
            total += m * (_phi_scalar((x - m) / m) + _phi_scalar((y - m) / m))
    return max(total, 0.0)


def _scalar_or_array(out, *inputs):
    if all(np.ndim(v) == 0 for v in inputs):
        return float(out)
    return out


def binary_entropy(x, base=LogBase.NATURAL):
    """Binary entropy ``-x log x - (1-x) log(1-x)`` in the requested base.

    Accepts scalars or arrays; raises :class:`DomainError` outside ``[0, 1]``.
    """
    base = LogBase.coerce(base)
    arr = _check_unit(x, "x")
    return _scalar_or_array(_hb(arr) / base.log_scale, x)


def h_d(x1, x2, base=LogBase.NATURAL):
    """Twice the Jensen-Shannon divergence between Bernoulli(x1) and Bernoulli(x2)."""
    base = LogBase.coerce(base)
    if np.ndim(x1) == 0 and np.ndim(x2) == 0:
        a, b = float(x1), float(x2)
        if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
            raise DomainError(f"arguments must lie in [0, 1], got {x1!r}, {x2!r}")
        return _h_d_nats_scalar(a, b) / base.log_scale
    a = _check_unit(x1, "x1")
    b = _check_unit(x2, "x2")
    a, b = np.broadcast_arrays(a, b)
    m = 0.5 * (a + b)
    # KL(a || m) + KL(b || m) in the form that keeps relative precision near a == b
    val = _gap(a, m) + _gap(b, m) + _gap(1.0 - a, 1.0 - m) + _gap(1.0 - b, 1.0 - m)
    return np.maximum(val, 0.0) / base.log_scale


def h_d_inv(y, c, base=LogBase.NATURAL, tol=INV_TOL, max_iter=INV_MAX_ITER):
    """Return ``sup{x in [0, 1] : h_D(x, c) <= y}``, elementwise for array inputs.

    ``h_D(., c)`` increases on ``[c, 1]``, so the supremum is found by
    bisection on that interval.  Saturates at 1 once ``y >= h_D(1, c)``.
    """
    base = LogBase.coerce(base)
    scalar = np.ndim(y) == 0 and np.ndim(c) == 0
    ys = np.asarray(y, dtype=float)
    cs = np.asarray(c, dtype=float)
    if np.any(~np.isfinite(ys)) or np.any(ys < 0.0):
        raise DomainError(f"y must be finite and non-negative, got {y!r}")
    if np.any(~np.isfinite(cs)) or np.any(cs < 0.0) or np.any(cs > 1.0):
        raise DomainError(f"c must lie in [0, 1], got {c!r}")
    if scalar:
        return _inv_scalar(float(ys), float(cs), base, tol, max_iter)
    ys, cs = np.broadcast_arrays(ys, cs)
    lo = cs.astype(float).copy()
    hi = np.ones_like(lo)
    saturated = h_d(hi, cs, base) <= ys
    for _ in range(max_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        below = h_d(mid, cs, base) <= ys
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.where(saturated, 1.0, lo)


def _inv_scalar(y, c, base, tol, max_iter):
    if h_d(1.0, c, base) <= y:
        return 1.0
    lo, hi = c, 1.0
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if h_d(mid, c, base) <= y:
            lo = mid
        else:
            hi = mid
    return lo
