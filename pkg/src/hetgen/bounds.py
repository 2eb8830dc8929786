"""Closed-form generalization bounds for one-round distributed SVMs.

The geometric bounds (ball and folded-Gaussian supports) are assembled from a
per-client rate ``R_k`` (a log-cardinality of a quantized hypothesis set) and an
optional distortion ``eps``::

    bound = sqrt(2 * sum_k R_k / (n K)) + eps

The information-theoretic evaluators at the bottom take precomputed CMI or KL
quantities and return the corresponding bound.  All logarithms are natural.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .datagen import AlphaMatrix, ComponentKind, equally_spaced_centers, solve_alpha
from .errors import DomainError
from .hd_kernel import LogBase, h_d_inv

__all__ = [
    "Setting",
    "GeometryInput",
    "PerClientConstants",
    "BoundReport",
    "d_kr",
    "rate_term",
    "distortion_term",
    "bound_thm7",
    "bound_thm9",
    "bound_thm4",
    "two_ball_geometry",
    "equally_spaced_geometry",
    "bound_thm8_hd",
    "bound_equally_spaced",
    "bound_thm1",
    "bound_thm2",
    "bound_thm3",
    "bound_thm5",
    "bound_thm6",
    "prior_art_rate",
]

# leading constant of the quantization dimension m_k
DIM_CONST = 112.0


class Setting(str, enum.Enum):
    HET = "het"
    HOM = "hom"


@dataclass(frozen=True)
class GeometryInput:
    """Everything the geometric bounds need about one r-th setup.

    ``alpha`` is solved from ``(M, K, r)`` when omitted.  ``ceil_dims=False``
    replaces the integer quantization dimension ``m_k`` by its real-valued
    relaxation, which keeps the bound continuous in the spread.
    """

    n: int
    K: int
    M: int
    r: int
    theta: float
    centers: np.ndarray
    spread: float
    kind: ComponentKind = ComponentKind.BALL
    alpha: AlphaMatrix | None = None
    ceil_dims: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("n must be >= 2")
        if not 0.0 < self.theta <= 1.0:
            raise DomainError(f"theta must lie in (0, 1], got {self.theta!r}")
        if not self.spread > 0.0:
            raise DomainError("spread must be positive")
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if centers.shape[0] != self.M:
            raise DomainError(f"expected {self.M} centers, got {centers.shape[0]}")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "kind", ComponentKind.coerce(self.kind))
        alpha = self.alpha if self.alpha is not None else solve_alpha(self.M, self.K, self.r)
        if alpha.entries.shape != (self.K, self.M) or alpha.r != self.r:
            raise DomainError("alpha does not match (K, M, r)")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_setup(cls, setup, n: int, theta: float, ceil_dims: bool = True) -> "GeometryInput":
        return cls(n, setup.K, setup.M, setup.r, theta, setup.centers, setup.spread,
                   setup.kind, setup.alpha, ceil_dims)

    @property
    def theta_n(self) -> float:
        return self.theta * (1.0 - 1.0 / self.n)


@dataclass(frozen=True)
class PerClientConstants:
    k: int
    c_k: int
    D: float
    rho_k: float
    b_k: np.ndarray
    b_norm: float
    theta_n: float
    m_k: float
    tau1: float
    tau2: float
    nu: float
    N_k: int
    R_k: float
    kind: ComponentKind
    n: int
    K: int


@dataclass(frozen=True)
class BoundReport:
    value: float
    constants: tuple = field(default=(), repr=False)
    epsilon: float = 0.0
    tail_mode: bool = False
    base: LogBase = LogBase.NATURAL

    def __float__(self) -> float:
        return self.value


def d_kr(centers, c_k: int, r: int) -> float:
    """Largest distance between two centers in the 1-based window ``[c_k, c_k + r - 1]``."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    M = centers.shape[0]
    if r < 1 or c_k < 1 or c_k + r - 1 > M:
        raise DomainError(f"window [{c_k}, {c_k + r - 1}] outside [1, {M}]")
    win = centers[c_k - 1:c_k - 1 + r]
    return max((float(np.linalg.norm(a - b)) for a, b in combinations(win, 2)), default=0.0)


def rate_term(geom: GeometryInput, k: int) -> PerClientConstants:
    """Quantization constants and rate ``R_k`` of 1-based client ``k``."""
    if not 1 <= k <= geom.K:
        raise DomainError(f"client index {k} outside [1, {geom.K}]")
    n, K, theta, th_n = geom.n, geom.K, geom.theta, geom.theta_n
    c_k = int(geom.alpha.windows[k - 1])
    D = d_kr(geom.centers, c_k, geom.r)
    b = geom.alpha.row(k) @ geom.centers
    b_norm = float(np.linalg.norm(b))
    log_nk = math.log(n * K * math.sqrt(K))

    if geom.kind is ComponentKind.BALL:
        rho_k = geom.spread + D
        m_real = DIM_CONST * (rho_k / (K * th_n)) ** 2 * log_nk
        tau = math.sqrt(1.0 + K * th_n / (4.0 * rho_k))
        nu = 1.0 / (2.0 * tau)
    else:
        sigma = geom.spread
        rho_k = D + sigma * math.sqrt(math.log(n * K))
        m_real = DIM_CONST * (rho_k / (K * theta)) ** 2 * log_nk
        tau = math.sqrt(1.0 + K * th_n / (4.0 * sigma))
        nu = 1.0 / tau
    m_k = float(math.ceil(m_real)) if geom.ceil_dims else m_real

    grid = 4.0 * n * b_norm / (K * theta)
    R_k = m_k * math.log((tau + nu) / nu) + math.log(max(1.0, grid))
    return PerClientConstants(k, c_k, D, rho_k, b, b_norm, th_n, m_k, tau, tau, nu,
                              int(math.ceil(grid)), R_k, geom.kind, n, K)


def distortion_term(consts: PerClientConstants, kind=None) -> float:
    """Distortion ``eps_k`` paid for quantizing client ``k``'s contribution.

    Uses the integer quantization dimension even when the rate was relaxed.
    """
    kind = consts.kind if kind is None else ComponentKind.coerce(kind)
    K, th_n, rho, nu = consts.K, consts.theta_n, consts.rho_k, consts.nu
    t1, t2 = consts.tau1, consts.tau2
    m = float(max(1, math.ceil(consts.m_k)))
    u = K * th_n / (4.0 * rho)
    v = K * th_n / (4.0 * t1 * nu * rho)
    # log-domain for the second term: nu**m underflows long before m*nu**m matters
    log_second = math.log(m) + m * math.log(nu) - 0.5 * math.log(math.pi) - 0.5 * (m + 1) * v * v
    T = (4.0 * math.exp(-(m / 7.0) * u * u)
         + math.exp(log_second)
         + 2.0 * math.exp(-0.21 * m * (t1 * t1 - 1.0) ** 2)
         + 2.0 * math.exp(-0.21 * m * (t2 * t2 - 1.0) ** 2))
    if kind is ComponentKind.GAUSSIAN:
        t = math.sqrt(math.log(consts.n * K * math.sqrt(K)))
        T += 2.0 * math.exp(-0.5 * t * t)
    return 2.0 * T


def _assemble(geom: GeometryInput, tail_mode: bool) -> BoundReport:
    consts = tuple(rate_term(geom, k) for k in range(1, geom.K + 1))
    total = math.fsum(c.R_k for c in consts)
    eps = float(np.mean([distortion_term(c) for c in consts])) if tail_mode else 0.0
    return BoundReport(math.sqrt(2.0 * total / (geom.n * geom.K)) + eps, consts, eps, tail_mode)


def bound_thm7(geom: GeometryInput, tail_mode: bool = False) -> BoundReport:
    """Expected margin generalization bound for ball-supported components."""
    if geom.kind is not ComponentKind.BALL:
        raise DomainError("bound_thm7 needs ball components; use bound_thm9 for Gaussian ones")
    return _assemble(geom, tail_mode)


def bound_thm9(geom: GeometryInput, tail_mode: bool = False) -> BoundReport:
    """Folded-Gaussian analogue of :func:`bound_thm7`."""
    if geom.kind is not ComponentKind.GAUSSIAN:
        raise DomainError("bound_thm9 needs Gaussian components")
    return _assemble(geom, tail_mode)


def two_ball_geometry(n: int, theta: float, a1, a2, spread: float, setting,
                      kind=ComponentKind.BALL, ceil_dims: bool = True) -> GeometryInput:
    setting = Setting(str(getattr(setting, "value", setting)).lower())
    r = 1 if setting is Setting.HET else 2
    centers = np.vstack([np.atleast_1d(np.asarray(a1, float)), np.atleast_1d(np.asarray(a2, float))])
    return GeometryInput(n, 2, 2, r, theta, centers, spread, kind, ceil_dims=ceil_dims)


def bound_thm4(n: int, theta: float, a1, a2, rho: float, setting, tail_mode: bool = False,
               ceil_dims: bool = True) -> BoundReport:
    """Two clients, two balls: heterogeneous (one ball each) or homogeneous (both mixed)."""
    return bound_thm7(two_ball_geometry(n, theta, a1, a2, rho, setting, ceil_dims=ceil_dims),
                      tail_mode)


def bound_thm8_hd(geom: GeometryInput, emp_risk: float, shift_const: float = 9.0,
                  add_const: float = 1.0) -> BoundReport:
    """Jensen-Shannon form of the geometric bound, tighter when ``emp_risk`` is small."""
    if not 0.0 <= emp_risk <= 1.0:
        raise DomainError(f"emp_risk must lie in [0, 1], got {emp_risk!r}")
    consts = tuple(rate_term(geom, k) for k in range(1, geom.K + 1))
    n, K = geom.n, geom.K
    scale = 1.0 / (n * K * math.sqrt(K))
    y = math.fsum(c.R_k + math.log(n) for c in consts) / (n * K)
    c = max(0.0, emp_risk - shift_const * scale)
    value = h_d_inv(y, c, LogBase.NATURAL) - emp_risk + add_const * scale
    return BoundReport(value, consts)


def bound_equally_spaced(M: int, K: int, r: int, delta: float, spread: float, n: int,
                         theta: float, kind=ComponentKind.BALL) -> float:
    """Simplified bound for centers spaced ``delta`` apart on a line starting at the origin."""
    kind = ComponentKind.coerce(kind)
    if not 1 <= r <= M:
        raise DomainError(f"need 1 <= r <= M, got r={r}, M={M}")
    if not 0.0 < theta <= 1.0 or not spread > 0.0 or delta < 0.0:
        raise DomainError("need theta in (0, 1], spread > 0 and delta >= 0")
    width = (r - 1) * delta
    if kind is ComponentKind.BALL:
        rad = spread + width
        a_bar = rad * rad * math.log(max(3.0, K * theta / rad))
    else:
        rad = width + spread * math.sqrt(math.log(n * K))
        a_bar = rad * rad * math.log(max(3.0, K * theta / spread))
    a_tilde = max(1.0, n * delta * (2 * M + r - 1) / (K * theta))
    return math.sqrt(a_bar * math.log(n * K) / (n * K * K * theta * theta) + math.log(a_tilde) / n)


def equally_spaced_geometry(M: int, K: int, r: int, delta: float, spread: float, n: int,
                            theta: float, kind=ComponentKind.BALL, ceil_dims: bool = True,
                            d: int = 1) -> GeometryInput:
    return GeometryInput(n, K, M, r, theta, equally_spaced_centers(M, delta, d), spread, kind,
                         ceil_dims=ceil_dims)


def prior_art_rate(n: int, K: int, theta: float, rho: float, a1) -> float:
    """Single-component rate of the earlier bound, in the same constants convention.

    That bound quantizes a ball of radius ``rho + |a1|`` around the origin and
    carries no separate offset term.
    """
    rad = rho + float(np.linalg.norm(a1))
    th_n = theta * (1.0 - 1.0 / n)
    m = DIM_CONST * (rad / (K * th_n)) ** 2 * math.log(n * K * math.sqrt(K))
    return m * math.log(3.0 + K * th_n / (2.0 * rad))


def _as_nonneg(values, name) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.size == 0 or np.any(~np.isfinite(arr)) or np.any(arr < 0.0):
        raise DomainError(f"{name} must be a non-empty list of non-negative numbers")
    return arr


def bound_thm1(cmi_per_client: Sequence[float], n: int) -> float:
    """``sqrt(2 * mean_k I_k / n)`` from per-client type-I CMI in nats."""
    cmi = _as_nonneg(cmi_per_client, "cmi_per_client")
    return math.sqrt(2.0 * float(np.mean(cmi)) / n)


def bound_thm3(rates: Sequence[float], n: int, epsilon: float = 0.0) -> float:
    """Lossy CMI bound; ``epsilon=0`` with ``rates = I_k`` is :func:`bound_thm1`."""
    R = _as_nonneg(rates, "rates")
    return math.sqrt(2.0 * float(np.sum(R)) / (n * R.size)) + epsilon


def bound_thm2(kl_per_client: Sequence[float], n: int, K: int, delta: float) -> float:
    """High-probability bound from per-client KL terms, valid with probability ``1 - delta``."""
    kl = _as_nonneg(kl_per_client, "kl_per_client")
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"delta must lie in (0, 1], got {delta!r}")
    num = float(np.sum(kl)) + K * math.log(math.sqrt(2.0 * n)) + math.log(1.0 / delta)
    return math.sqrt(num / ((2 * n - 1) * K / 4.0))


def bound_thm6(rates: Sequence[float], n: int, emp_risk: float, epsilon: float = 0.0) -> float:
    """Lossy Jensen-Shannon bound ``h_D^{-1}(y | emp) - emp + epsilon``."""
    R = _as_nonneg(rates, "rates")
    if not 0.0 <= emp_risk <= 1.0:
        raise DomainError(f"emp_risk must lie in [0, 1], got {emp_risk!r}")
    y = float(np.sum(R + math.log(n))) / (n * R.size)
    return h_d_inv(y, emp_risk, LogBase.NATURAL) - emp_risk + epsilon


def bound_thm5(cmi_typeII_per_client: Sequence[float], n: int, K: int, emp_risk: float) -> float:
    """Lossless Jensen-Shannon bound from per-client type-II CMI."""
    C = _as_nonneg(cmi_typeII_per_client, "cmi_typeII_per_client")
    if C.size != K:
        raise DomainError(f"expected {K} per-client values, got {C.size}")
    return bound_thm6(C, n, emp_risk)
