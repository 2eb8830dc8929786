"""Heterogeneous synthetic data: mixture components, the r-th setup ladder and sampling.

Client ``k`` of the r-th setup draws from a mixture of the ``r`` consecutive
components starting at its window ``c_k = (k mod (M - r + 1)) + 1``.  The
mixing coefficients are solved so that every client row sums to one and the
client-averaged mixture puts mass ``1/M`` on each component.

Indices ``k``, ``m`` and windows are 1-based in the public functions, matching
the usual notation; arrays are 0-based.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.special import ndtri

from .errors import DomainError, InfeasibleError

__all__ = [
    "ComponentKind",
    "ComponentSpec",
    "AlphaMatrix",
    "MixtureSpec",
    "Teacher",
    "SetupSpec",
    "LabeledExample",
    "ClientDataset",
    "client_window",
    "solve_alpha",
    "sample_component",
    "sample_components",
    "label",
    "label_batch",
    "sample_client_dataset",
    "build_setup",
    "equally_spaced_centers",
    "two_cluster_teacher",
    "two_cluster_centers",
]

ALPHA_TOL = 1e-10
ALPHA_MAX_ITER = 10_000
ALPHA_ACCEPT = 1e-8
_SUPPORT_EPS = 1e-9


class ComponentKind(str, enum.Enum):
    BALL = "ball"
    GAUSSIAN = "gaussian"

    @classmethod
    def coerce(cls, kind) -> "ComponentKind":
        if isinstance(kind, cls):
            return kind
        aliases = {"balluniform": "ball", "ball_uniform": "ball",
                   "foldedgaussian": "gaussian", "folded_gaussian": "gaussian"}
        key = str(kind).lower()
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise DomainError(f"unknown component kind {kind!r}") from None


@dataclass(frozen=True)
class ComponentSpec:
    """One mixture component: uniform ball of radius ``spread`` or folded Gaussian."""

    center: np.ndarray
    spread: float
    kind: ComponentKind = ComponentKind.BALL

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "kind", ComponentKind.coerce(self.kind))
        if not self.spread >= 0.0:
            raise DomainError(f"spread must be non-negative, got {self.spread!r}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]


@dataclass(frozen=True)
class AlphaMatrix:
    """Mixing coefficients ``alpha[k, m]`` (0-based) plus the 1-based client windows."""

    entries: np.ndarray
    windows: np.ndarray
    r: int

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @property
    def M(self) -> int:
        return self.entries.shape[1]

    def row_residual(self) -> float:
        return float(np.max(np.abs(self.entries.sum(axis=1) - 1.0)))

    def column_residual(self) -> float:
        return float(np.max(np.abs(self.entries.sum(axis=0) - self.K / self.M)))

    def band_violation(self) -> float:
        """Largest coefficient placed outside a client's window."""
        mask = np.ones_like(self.entries, dtype=bool)
        for k, c in enumerate(self.windows):
            mask[k, c - 1:c - 1 + self.r] = False
        return float(np.max(np.abs(self.entries[mask]), initial=0.0))

    def row(self, k: int) -> np.ndarray:
        """Weights of 1-based client ``k``."""
        return self.entries[k - 1]


@dataclass(frozen=True)
class MixtureSpec:
    components: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", w)
        if w.shape[0] != len(self.components):
            raise DomainError("one weight per component is required")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-8:
            raise DomainError(f"weights must be non-negative and sum to 1, got {w}")

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def centers(self) -> np.ndarray:
        return np.stack([c.center for c in self.components])

    def support_indices(self) -> np.ndarray:
        """0-based indices of components with positive weight."""
        return np.flatnonzero(self.weights > 0.0)


@dataclass(frozen=True)
class Teacher:
    """Linear labeler ``y = +1 iff <normal, x> + offset_scale * center[0] > 0``."""

    normal: np.ndarray
    offset_scale: float = 0.2

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float).reshape(-1)
        object.__setattr__(self, "normal", normal)
        if not np.linalg.norm(normal) > 0.0:
            raise DomainError("teacher normal must be non-zero")


@dataclass(frozen=True)
class SetupSpec:
    M: int
    K: int
    r: int
    components: tuple
    alpha: AlphaMatrix
    teacher: Teacher
    mixtures: tuple = field(repr=False)

    @property
    def dim(self) -> int:
        return self.components[0].dim

    @property
    def centers(self) -> np.ndarray:
        return np.stack([c.center for c in self.components])

    @property
    def kind(self) -> ComponentKind:
        return self.components[0].kind

    @property
    def spread(self) -> float:
        return self.components[0].spread

    def pooled_weights(self) -> np.ndarray:
        """Component weights of the client-averaged mixture."""
        return self.alpha.entries.mean(axis=0)

    def pooled_mixture(self) -> MixtureSpec:
        w = self.pooled_weights()
        return MixtureSpec(self.components, w / w.sum())


class LabeledExample(NamedTuple):
    x: np.ndarray
    y: int


@dataclass(frozen=True)
class ClientDataset:
    """Features ``X`` (n, d), labels ``y`` in {-1, +1} and the generating component (0-based)."""

    X: np.ndarray
    y: np.ndarray
    component: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    def __iter__(self) -> Iterator[LabeledExample]:
        for x, y in zip(self.X, self.y):
            yield LabeledExample(x, int(y))


def client_window(k: int, r: int, M: int) -> int:
    """First (1-based) component index of client ``k`` in the r-th setup."""
    if not 1 <= r <= M:
        raise DomainError(f"need 1 <= r <= M, got r={r}, M={M}")
    if k < 1:
        raise DomainError(f"client index must be >= 1, got {k}")
    return (k % (M - r + 1)) + 1


def _support_via_lp(counts: np.ndarray, band: np.ndarray, col_target: float):
    """Entries of the banded transport polytope that some feasible point makes positive.

    Returns ``None`` when the polytope is empty.
    """
    n_win, M = band.shape
    cells = np.argwhere(band)
    nvar = len(cells)
    A_eq = np.zeros((n_win + M, nvar))
    for j, (c, m) in enumerate(cells):
        A_eq[c, j] = 1.0
        A_eq[n_win + m, j] = 1.0
    b_eq = np.concatenate([counts.astype(float), np.full(M, col_target)])
    # one LP per cell: can this cell carry mass?
    support = np.zeros_like(band)
    for j, (c, m) in enumerate(cells):
        cost = np.zeros(nvar)
        cost[j] = -1.0
        res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status == 2:
            return None
        if res.status != 0:
            raise RuntimeError(f"support LP failed: {res.message}")
        if -res.fun > _SUPPORT_EPS:
            support[c, m] = True
    return support


def solve_alpha(M: int, K: int, r: int, tol: float = ALPHA_TOL,
                max_iter: int = ALPHA_MAX_ITER) -> AlphaMatrix:
    """Banded mixing coefficients for the r-th setup.

    Works on window-level variables ``beta[c, m]`` shared by every client with
    window ``c``.  Scaled by the window multiplicity ``n_c`` these form a
    transportation problem with row targets ``n_c`` and column targets
    ``K / M``.  Cells that no feasible point can make positive are removed
    first (a small LP per cell); alternating row/column rescaling then
    converges geometrically on the remaining support.

    Raises :class:`InfeasibleError` if no banded matrix meets the targets.
    """
    if not (K >= M >= r >= 1):
        raise DomainError(f"need K >= M >= r >= 1, got M={M}, K={K}, r={r}")
    n_win = M - r + 1
    windows = np.array([client_window(k, r, M) for k in range(1, K + 1)])
    counts = np.bincount(windows - 1, minlength=n_win)
    band = np.zeros((n_win, M), dtype=bool)
    for c in range(n_win):
        band[c, c:c + r] = True
    col_target = K / M

    support = _support_via_lp(counts, band, col_target)
    if support is None:
        raise InfeasibleError(M, K, r)

    X = support.astype(float)
    row_t = counts.astype(float)
    col_t = np.full(M, col_target)
    for _ in range(max_iter):
        X *= (row_t / X.sum(axis=1))[:, None]
        col = X.sum(axis=0)
        X *= np.where(col > 0, col_t / np.where(col > 0, col, 1.0), 0.0)[None, :]
        resid = max(np.max(np.abs(X.sum(axis=1) - row_t)),
                    np.max(np.abs(X.sum(axis=0) - col_t)))
        if resid <= tol:
            break

    beta = X / counts[:, None]
    alpha = AlphaMatrix(beta[windows - 1], windows, r)
    resid = max(alpha.row_residual(), alpha.column_residual())
    if resid > ALPHA_ACCEPT:
        raise InfeasibleError(M, K, r, resid)
    return alpha


def _unit_directions(rng, size, d):
    g = rng.standard_normal((size, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # a zero Gaussian draw has probability zero; guard anyway
    norms[norms == 0.0] = 1.0
    return g / norms


def _radii(kind: ComponentKind, spread: float, u: np.ndarray, d: int) -> np.ndarray:
    # inverse-CDF radius from one uniform per draw, so every kind uses the same stream layout
    if kind is ComponentKind.BALL:
        return spread * u ** (1.0 / d)
    return spread * ndtri(0.5 * (1.0 + u))


def sample_components(spec: ComponentSpec, rng: np.random.Generator, size: int) -> np.ndarray:
    """``size`` i.i.d. draws from one component, shape (size, d)."""
    d = spec.dim
    u = _unit_directions(rng, size, d)
    radius = _radii(spec.kind, spec.spread, rng.random(size), d)
    return spec.center[None, :] + radius[:, None] * u


def sample_component(spec: ComponentSpec, rng: np.random.Generator) -> np.ndarray:
    return sample_components(spec, rng, 1)[0]


def label_batch(X: np.ndarray, centers_first: np.ndarray, teacher: Teacher) -> np.ndarray:
    """Vectorized teacher labels; ``centers_first`` holds each row's component center[0]."""
    score = X @ teacher.normal + teacher.offset_scale * centers_first
    return np.where(score > 0.0, 1, -1).astype(np.int64)


def label(x, component_center, teacher: Teacher) -> int:
    """Teacher label of one point; boundary points get -1."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    first = np.asarray(component_center, dtype=float).reshape(-1)[0]
    return int(label_batch(x, np.array([first]), teacher)[0])


def sample_client_dataset(mix: MixtureSpec, n: int, teacher: Teacher,
                          rng: np.random.Generator) -> ClientDataset:
    """``n`` independent labeled draws from a client mixture.

    Offsets from the center (direction, then radial uniform) are drawn before
    the component assignment.  Two mixtures over the same components therefore
    share their offsets under a common seed, which pairs simulations across
    setups.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    d = mix.dim
    dirs = _unit_directions(rng, n, d)
    u = rng.random(n)
    comp = rng.choice(len(mix.components), size=n, p=mix.weights)
    radius = np.empty(n)
    for m in np.unique(comp):
        idx = comp == m
        spec = mix.components[m]
        radius[idx] = _radii(spec.kind, spec.spread, u[idx], d)
    X = mix.centers[comp] + radius[:, None] * dirs
    y = label_batch(X, mix.centers[comp, 0], teacher)
    return ClientDataset(X, y, comp)


def build_setup(M: int, K: int, r: int, centers: Sequence, kind, spread: float,
                teacher: Teacher, d: int | None = None) -> SetupSpec:
    """Assemble the per-client mixtures of the r-th setup."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.shape[0] != M:
        raise DomainError(f"expected {M} centers, got {centers.shape[0]}")
    if d is not None and centers.shape[1] != d:
        raise DomainError(f"centers have dimension {centers.shape[1]}, expected {d}")
    if teacher.normal.shape[0] != centers.shape[1]:
        raise DomainError("teacher dimension does not match the centers")
    comps = tuple(ComponentSpec(a, spread, kind) for a in centers)
    alpha = solve_alpha(M, K, r)
    mixtures = tuple(MixtureSpec(comps, alpha.entries[k]) for k in range(K))
    return SetupSpec(M, K, r, comps, alpha, teacher, mixtures)


def equally_spaced_centers(M: int, delta: float, d: int = 1) -> np.ndarray:
    """``a_1 = 0`` and consecutive centers ``delta`` apart along the first axis."""
    centers = np.zeros((M, d))
    centers[:, 0] = delta * np.arange(M)
    return centers


def two_cluster_centers(d: int = 100) -> np.ndarray:
    centers = np.zeros((2, d))
    centers[0, 0], centers[1, 0] = -2.0, 2.0
    return centers


def two_cluster_teacher(d: int = 100, offset_scale: float = 0.2) -> Teacher:
    w = np.ones(d)
    w[0] = -0.2
    return Teacher(w, offset_scale)
