"""Exact conditional mutual information on small finite problems.

A toy problem has a finite sample space ``Z`` of labeled points ``(x, y)``,
one distribution over ``Z`` per client, and a deterministic learner.  Every
learner here depends on its training sample only through the count vector
over ``Z``, so memberships are enumerated as batches of count vectors.

With the supersample fixed, a deterministic learner makes ``W`` a function of
the membership, hence ``I(W; J | Z) = H(W)`` where the entropy is over the
uniformly random membership.  Values are in nats.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .bounds import bound_thm1, bound_thm2
from .errors import DomainError, EnumerationLimitError
from .hd_kernel import LogBase, h_d

__all__ = [
    "Learner",
    "LEARNERS",
    "ToyProblem",
    "TheoremCheck",
    "threshold_toy",
    "hypothesis_entropy",
    "typeI_outputs",
    "typeII_outputs",
    "exact_cmi_typeI",
    "exact_cmi_typeII",
    "expected_gen_exact",
    "exact_risks",
    "batch_cmi",
    "mean_cmi",
    "verify_thm1",
    "verify_thm2_tail",
    "verify_thm5",
]

TYPE_I_MAX_N = 14
TYPE_II_MAX_SUBSETS = 200_000
EXHAUSTIVE_LIMIT = 1_000_000


class Learner:
    """Deterministic learner acting on count vectors.

    Subclasses implement ``fit`` ((B, |Z|) counts -> (B, p) parameters),
    ``aggregate`` ((T, K, p) -> (T, p)) and ``loss_table`` ((T, p) -> (T, |Z|)).
    """

    name = "base"

    def fit(self, counts: np.ndarray, problem: "ToyProblem") -> np.ndarray:
        raise NotImplementedError

    def aggregate(self, params: np.ndarray) -> np.ndarray:
        return params.mean(axis=1)

    def loss_table(self, params: np.ndarray, problem: "ToyProblem") -> np.ndarray:
        raise NotImplementedError


class _Classifier(Learner):
    """Learners whose hypotheses predict a label; scored with the 0-1 loss."""

    def predict(self, params: np.ndarray, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def loss_table(self, params, problem):
        pred = self.predict(params, problem.x)
        return (pred != problem.y[None, :]).astype(float)


class ConstantLearner(_Classifier):
    name = "constant"

    def __init__(self, label: int = 1):
        self.label = label

    def fit(self, counts, problem):
        return np.full((counts.shape[0], 1), float(self.label))

    def predict(self, params, x):
        return np.broadcast_to((params[:, :1] >= 0.5).astype(int), (params.shape[0], x.size))


class ThresholdLearner(_Classifier):
    """Empirical risk minimizer over ``x >= t`` rules; ties go to the smallest threshold.

    Aggregation averages the thresholds.
    """

    name = "threshold"

    @staticmethod
    def candidates(problem):
        xs = np.unique(problem.x)
        return np.append(xs, xs[-1] + 1.0)

    def fit(self, counts, problem):
        cand = self.candidates(problem)
        pred = (problem.x[None, :] >= cand[:, None]).astype(int)
        wrong = (pred != problem.y[None, :]).astype(float)
        errors = counts @ wrong.T
        return cand[np.argmin(errors, axis=1)][:, None]

    def predict(self, params, x):
        return (x[None, :] >= params[:, :1]).astype(int)


class MajorityLearner(_Classifier):
    """Predicts the majority training label everywhere (ties go to 1)."""

    name = "majority"

    def fit(self, counts, problem):
        n = counts.sum(axis=1)
        ones = counts @ (problem.y == 1).astype(float)
        return (ones / n)[:, None]

    def predict(self, params, x):
        return np.broadcast_to((params[:, :1] >= 0.5).astype(int), (params.shape[0], x.size))


class MemorizingLearner(Learner):
    """Returns the set of distinct training points; loss is 0 exactly on remembered points.

    Aggregation takes the union.
    """

    name = "identity"

    def fit(self, counts, problem):
        return (counts > 0).astype(float)

    def aggregate(self, params):
        return params.max(axis=1)

    def loss_table(self, params, problem):
        return 1.0 - params


class ExactMultisetLearner(Learner):
    """Returns the full training count vector; loss as for :class:`MemorizingLearner`."""

    name = "multiset"

    def fit(self, counts, problem):
        return counts.astype(float)

    def aggregate(self, params):
        return params.sum(axis=1)

    def loss_table(self, params, problem):
        return (params == 0).astype(float)


LEARNERS = {cls.name: cls for cls in
            (ConstantLearner, ThresholdLearner, MajorityLearner, MemorizingLearner,
             ExactMultisetLearner)}


def _make_learner(learner) -> Learner:
    if isinstance(learner, Learner):
        return learner
    try:
        return LEARNERS[str(learner)]()
    except KeyError:
        raise DomainError(f"unknown learner {learner!r}; known: {sorted(LEARNERS)}") from None


@dataclass(frozen=True)
class ToyProblem:
    """Finite sample space, per-client distributions, learner, ``n`` and ``K``.

    ``values`` holds the points ``(x, y)`` with ``y`` in {0, 1}.  ``probs`` is a
    single distribution shared by all clients or one row per client.
    """

    values: tuple
    probs: np.ndarray
    learner: Learner
    n: int
    K: int = 1
    loss: str = "zero_one"
    x: np.ndarray = field(init=False, repr=False)
    y: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        vals = tuple(tuple(float(c) for c in np.atleast_1d(v)) for v in self.values)
        if not vals or any(len(v) != 2 for v in vals):
            raise DomainError("each sample-space value must be an (x, y) pair")
        x = np.array([v[0] for v in vals])
        y = np.array([v[1] for v in vals])
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise DomainError("labels must be 0 or 1")
        if self.n < 1 or self.K < 1:
            raise DomainError("n and K must be >= 1")
        P = np.atleast_2d(np.asarray(self.probs, dtype=float))
        if P.shape[0] == 1:
            P = np.repeat(P, self.K, axis=0)
        if P.shape != (self.K, len(vals)):
            raise DomainError(f"probs must have shape ({self.K}, {len(vals)})")
        if np.any(P < 0.0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
            raise DomainError("each client distribution must be non-negative and sum to 1")
        if self.loss != "zero_one":
            raise DomainError(f"unknown loss {self.loss!r}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", P)
        object.__setattr__(self, "learner", _make_learner(self.learner))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y.astype(int))

    @classmethod
    def from_sample_space(cls, pairs: Sequence, learner, n: int, K: int = 1,
                          client_probs: Sequence | None = None, loss: str = "zero_one"):
        """Build from ``[(value, prob), ...]``; ``client_probs`` overrides per client."""
        values = [v for v, _ in pairs]
        probs = [p for _, p in pairs] if client_probs is None else client_probs
        return cls(tuple(values), np.asarray(probs, dtype=float), learner, n, K, loss)

    @property
    def size(self) -> int:
        return len(self.values)

    def with_n(self, n: int) -> "ToyProblem":
        return ToyProblem(self.values, self.probs, self.learner, n, self.K, self.loss)

    def counts(self, idx: np.ndarray) -> np.ndarray:
        """Count vectors over Z for index arrays of shape (..., m)."""
        idx = np.asarray(idx)
        out = np.zeros(idx.shape[:-1] + (self.size,))
        for v in range(self.size):
            out[..., v] = np.count_nonzero(idx == v, axis=-1)
        return out

    def sample(self, rng: np.random.Generator, k: int, size) -> np.ndarray:
        """I.i.d. indices into Z drawn from client ``k`` (0-based)."""
        return rng.choice(self.size, size=size, p=self.probs[k])


def threshold_toy(n: int, K: int = 1, learner="threshold", heterogeneous: bool = True) -> ToyProblem:
    """Four-point problem ``x, y in {0, 1}`` with label noise.

    With ``heterogeneous`` each client gets its own tilt of the joint law.
    """
    values = ((0, 0), (0, 1), (1, 0), (1, 1))
    base = np.array([0.35, 0.15, 0.15, 0.35])
    if not heterogeneous or K == 1:
        return ToyProblem(values, base, learner, n, K)
    rows = []
    for k in range(K):
        s = 0.15 * (2 * k / (K - 1) - 1)
        rows.append(base + np.array([s, -s, -s, s]) * 0.5 + np.array([-s, -s, s, s]) * 0.25)
    return ToyProblem(values, np.array(rows), learner, n, K)


def hypothesis_entropy(params: np.ndarray, weights: np.ndarray | None = None) -> float:
    """Entropy in nats of the hypothesis distribution given by parameter rows."""
    params = np.asarray(params)
    _, inv = np.unique(params.reshape(params.shape[0], -1), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    w = np.full(inv.size, 1.0 / inv.size) if weights is None else np.asarray(weights, float)
    p = np.bincount(inv, weights=w)
    p = p[p > 0] / p.sum()
    return float(max(0.0, -np.sum(p * np.log(p))))


def _check_supersample(problem: ToyProblem, supersample) -> np.ndarray:
    ss = np.asarray(supersample, dtype=np.int64)
    if ss.ndim != 1 or ss.size != 2 * problem.n:
        raise DomainError(f"a client supersample has 2n = {2 * problem.n} entries")
    if np.any(ss < 0) or np.any(ss >= problem.size):
        raise DomainError("supersample entries must index the sample space")
    return ss


def _membership_bits(n: int) -> np.ndarray:
    if n > TYPE_I_MAX_N:
        raise EnumerationLimitError(f"2^{n} memberships exceed the cap 2^{TYPE_I_MAX_N}")
    return (np.arange(2 ** n)[:, None] >> np.arange(n)[None, :]) & 1


def typeI_outputs(problem: ToyProblem, supersample):
    """Learner parameters and train/ghost counts for all ``2^n`` memberships.

    Bit ``i`` of a membership selects entry ``i + n`` (instead of ``i``) for training.
    """
    ss = _check_supersample(problem, supersample)
    n = problem.n
    bits = _membership_bits(n).astype(bool)
    lo, hi = ss[:n], ss[n:]
    train = np.where(bits, hi[None, :], lo[None, :])
    ghost = np.where(bits, lo[None, :], hi[None, :])
    tc, gc = problem.counts(train), problem.counts(ghost)
    return problem.learner.fit(tc, problem), tc, gc


_COMBO_CACHE: dict = {}


def _subsets(n: int) -> np.ndarray:
    if math.comb(2 * n, n) > TYPE_II_MAX_SUBSETS:
        raise EnumerationLimitError(
            f"C({2 * n}, {n}) = {math.comb(2 * n, n)} subsets exceed the cap {TYPE_II_MAX_SUBSETS}")
    if n not in _COMBO_CACHE:
        _COMBO_CACHE[n] = np.array(list(itertools.combinations(range(2 * n), n)), dtype=np.int64)
    return _COMBO_CACHE[n]


def typeII_outputs(problem: ToyProblem, supersample):
    """Learner parameters and train counts for all ``C(2n, n)`` training subsets."""
    ss = _check_supersample(problem, supersample)
    tc = problem.counts(ss[_subsets(problem.n)])
    return problem.learner.fit(tc, problem), tc


def exact_cmi_typeI(problem: ToyProblem, supersample) -> float:
    """``I(W; J | supersample)`` for one client with fair-coin swaps of each pair."""
    params, _, _ = typeI_outputs(problem, supersample)
    return hypothesis_entropy(params)


def exact_cmi_typeII(problem: ToyProblem, supersample) -> float:
    """``I(W; T | supersample)`` with ``T`` a uniform n-subset of the 2n entries."""
    params, _ = typeII_outputs(problem, supersample)
    return hypothesis_entropy(params)


def _group(params, weights, vectors):
    """Collapse rows with equal hypotheses: distinct params, total weight, weighted vector sum."""
    uniq, inv = np.unique(params, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    H = uniq.shape[0]
    prob = np.bincount(inv, weights=weights, minlength=H)
    vec = np.zeros((H, vectors.shape[1]))
    np.add.at(vec, inv, weights[:, None] * vectors)
    return uniq, prob, vec


def _joint_terms(problem: ToyProblem, tables) -> np.ndarray:
    """``sum over hypothesis tuples of prod_{j != k} q_j(h_j) * <v_k(h_k), loss(aggregate(h))>``.

    ``tables[k] = (params (H_k, p), q (H_k,), v (H_k, |Z|))`` with ``v`` already
    carrying client k's own weight ``q_k``.
    """
    idx = np.array(list(itertools.product(*[range(t[0].shape[0]) for t in tables])),
                   dtype=np.int64).reshape(-1, len(tables))
    stacked = np.stack([tables[k][0][idx[:, k]] for k in range(len(tables))], axis=1)
    loss = problem.learner.loss_table(problem.learner.aggregate(stacked), problem)
    q = np.stack([tables[k][1][idx[:, k]] for k in range(len(tables))], axis=1)
    out = np.empty(len(tables))
    for k, (_, _, v) in enumerate(tables):
        others = np.prod(np.delete(q, k, axis=1), axis=1)
        out[k] = float(np.sum(others * np.einsum("tz,tz->t", v[idx[:, k]], loss)))
    return out


def expected_gen_exact(problem: ToyProblem, supersample) -> float:
    """Membership-averaged ghost-minus-train loss of the aggregate for fixed supersamples.

    ``supersample`` has shape (K, 2n), or (2n,) when K = 1.  Each client swaps its
    own pairs independently.
    """
    ss = np.atleast_2d(np.asarray(supersample))
    if ss.shape[0] != problem.K:
        raise DomainError(f"need one supersample per client, got {ss.shape[0]} for K={problem.K}")
    tables = []
    for k in range(problem.K):
        params, tc, gc = typeI_outputs(problem, ss[k])
        w = np.full(params.shape[0], 1.0 / params.shape[0])
        tables.append(_group(params, w, (gc - tc) / problem.n))
    return float(np.mean(_joint_terms(problem, tables)))


def _compositions(n: int, parts: int) -> np.ndarray:
    """All count vectors of ``parts`` non-negative integers summing to ``n``."""
    rows = [np.diff(np.concatenate(([-1], c, [n + parts - 1]))) - 1
            for c in itertools.combinations(range(n + parts - 1), parts - 1)]
    return np.array(rows, dtype=float).reshape(-1, parts)


def _multinomial_pmf(counts: np.ndarray, p: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=1)
    with np.errstate(divide="ignore"):
        logp = np.where(counts > 0, counts * np.log(np.where(p > 0, p, 1.0)), 0.0)
    impossible = np.any((counts > 0) & (p[None, :] == 0), axis=1)
    logpmf = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1) + logp.sum(axis=1)
    return np.where(impossible, 0.0, np.exp(logpmf))


def exact_risks(problem: ToyProblem) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-client ``E[L_k(W_bar)]`` and ``E[L_hat_k(S_k, W_bar)]``.

    Expectation over all clients' samples, by enumerating training multisets.
    """
    comps = _compositions(problem.n, problem.size)
    params = problem.learner.fit(comps, problem)
    pop_tables, emp_tables = [], []
    for k in range(problem.K):
        w = _multinomial_pmf(comps, problem.probs[k])
        uniq, q, v_emp = _group(params, w, comps / problem.n)
        pop_tables.append((uniq, q, q[:, None] * problem.probs[k][None, :]))
        emp_tables.append((uniq, q, v_emp))
    return _joint_terms(problem, pop_tables), _joint_terms(problem, emp_tables)


def _all_supersamples(size: int, length: int) -> np.ndarray:
    return np.array(list(itertools.product(range(size), repeat=length)), dtype=np.int64)


def _entropy_rows(freq: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(freq > 0, freq * np.log(np.where(freq > 0, freq, 1.0)), 0.0)
    return np.maximum(-terms.sum(axis=1), 0.0)


def _batch_entropies(problem: ToyProblem, counts: np.ndarray) -> np.ndarray:
    """Hypothesis entropy per row of ``counts`` (B, memberships, |Z|), memberships equiprobable.

    Memberships are first binned by their count vector (the learner only sees
    counts), so the learner runs once per distinct count vector.
    """
    B, R, Z = counts.shape
    base = problem.n + 1
    if base ** Z <= 4_000_000:
        codes = (counts.astype(np.int64) * (base ** np.arange(Z))[None, None, :]).sum(axis=2)
        ncode = base ** Z
        flat = np.bincount((codes + ncode * np.arange(B)[:, None]).ravel(), minlength=B * ncode)
        nz = np.flatnonzero(flat)
        row, code = np.divmod(nz, ncode)
        distinct = (code[:, None] // (base ** np.arange(Z))[None, :]) % base
        weight = flat[nz] / R
    else:
        row = np.repeat(np.arange(B), R)
        distinct = counts.reshape(B * R, Z)
        weight = np.full(B * R, 1.0 / R)
    params = problem.learner.fit(distinct.astype(float), problem)
    _, inv = np.unique(params, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    freq = np.zeros((B, int(inv.max()) + 1))
    np.add.at(freq, (row, inv), weight)
    return _entropy_rows(freq)


def batch_cmi(problem: ToyProblem, supersamples: np.ndarray, kind: str = "I",
              chunk_rows: int = 4_000_000) -> np.ndarray:
    """:func:`exact_cmi_typeI` (or type II) for every row of ``supersamples``."""
    ss = np.atleast_2d(np.asarray(supersamples, dtype=np.int64))
    n = problem.n
    if kind == "I":
        bits = _membership_bits(n).astype(float)
        # training count vector = bits @ onehot(second half) + (1 - bits) @ onehot(first half)
        sel = np.concatenate([1.0 - bits, bits], axis=1)
    elif kind == "II":
        combos = _subsets(n)
        sel = np.zeros((combos.shape[0], 2 * n))
        np.put_along_axis(sel, combos, 1.0, axis=1)
    else:
        raise DomainError(f"kind must be 'I' or 'II', got {kind!r}")
    onehot = (ss[:, :, None] == np.arange(problem.size)[None, None, :]).astype(float)
    R = sel.shape[0]
    step = max(1, chunk_rows // R)
    out = []
    for i in range(0, ss.shape[0], step):
        counts = np.rint(np.einsum("rj,bjz->brz", sel, onehot[i:i + step]))
        out.append(_batch_entropies(problem, counts))
    return np.concatenate(out) if out else np.zeros(0)


def mean_cmi(problem: ToyProblem, k: int, kind: str = "I", n_supersamples: int = 200,
             rng: np.random.Generator | None = None) -> tuple[float, float, bool]:
    """Supersample-averaged CMI of client ``k`` with its standard error.

    Exhaustive (standard error 0) when ``|Z|^(2n) <= 10^6``; Monte Carlo otherwise.
    Returns ``(mean, se, exhaustive)``.
    """
    length = 2 * problem.n
    p = problem.probs[k]
    if problem.size ** length <= EXHAUSTIVE_LIMIT:
        ss = _all_supersamples(problem.size, length)
        w = np.prod(p[ss], axis=1)
        keep = w > 0
        vals = batch_cmi(problem, ss[keep], kind)
        return float(np.dot(w[keep], vals)), 0.0, True
    if rng is None:
        raise DomainError("Monte Carlo CMI needs an rng")
    vals = batch_cmi(problem, problem.sample(rng, k, (n_supersamples, length)), kind)
    se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return float(vals.mean()), se, False


@dataclass(frozen=True)
class TheoremCheck:
    theorem: str
    lhs: float
    rhs: float
    holds: bool
    details: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def verify_thm1(problem: ToyProblem, n_supersamples: int, rng: np.random.Generator,
                tol: float = 1e-12) -> TheoremCheck:
    """Exact expected generalization error against the averaged type-I CMI bound."""
    pop, emp = exact_risks(problem)
    lhs = float(np.mean(pop - emp))
    stats = [mean_cmi(problem, k, "I", n_supersamples, rng) for k in range(problem.K)]
    cmis = [s[0] for s in stats]
    rhs = bound_thm1(cmis, problem.n)
    return TheoremCheck("thm1", lhs, rhs, lhs <= rhs + tol,
                        {"cmi": cmis, "cmi_se": [s[1] for s in stats],
                         "exhaustive": all(s[2] for s in stats)})


def _prior_masses(problem: ToyProblem, k: int, train: np.ndarray, ghosts: np.ndarray) -> np.ndarray:
    """``-log Q(w*)`` for each ghost sample, ``Q`` the membership-averaged learner output."""
    w_star = problem.learner.fit(problem.counts(train)[None, :], problem)[0]
    kls = np.empty(ghosts.shape[0])
    for g, ghost in enumerate(ghosts):
        params, _, _ = typeI_outputs(problem, np.concatenate([train, ghost]))
        q = np.mean(np.all(params == w_star[None, :], axis=1))
        kls[g] = -math.log(q)
    return kls


def verify_thm2_tail(problem: ToyProblem, delta: float, trials: int, rng: np.random.Generator,
                     n_ghost: int = 16) -> TheoremCheck:
    """Frequency of the realized generalization error exceeding the tail bound.

    The per-client KL term is that of the point mass at the trained model
    against the membership-averaged output, averaged over ``n_ghost`` ghost
    samples.  ``lhs`` is the violation rate, ``rhs`` is ``delta + 3 sigma``.
    """
    if not 0.0 < delta <= 1.0 or trials < 1:
        raise DomainError("need delta in (0, 1] and trials >= 1")
    n, K = problem.n, problem.K
    violations = 0
    for _ in range(trials):
        trains = [problem.sample(rng, k, n) for k in range(K)]
        params = np.stack([problem.learner.fit(problem.counts(t)[None, :], problem)[0]
                           for t in trains])
        w_bar = problem.learner.aggregate(params[None, :, :])
        loss = problem.learner.loss_table(w_bar, problem)[0]
        gen = np.mean([problem.probs[k] @ loss - problem.counts(trains[k]) @ loss / n
                       for k in range(K)])
        kl = [float(np.mean(_prior_masses(problem, k, trains[k],
                                          problem.sample(rng, k, (n_ghost, n)))))
              for k in range(K)]
        if gen > bound_thm2(kl, n, K, delta):
            violations += 1
    rate = violations / trials
    allowance = delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials)
    return TheoremCheck("thm2", rate, allowance, rate <= allowance,
                        {"violations": violations, "trials": trials, "delta": delta})


def verify_thm5(problem: ToyProblem, n_supersamples: int, rng: np.random.Generator,
                tol: float = 1e-12) -> TheoremCheck:
    """``n h_D(E[L], E[L_hat]) <= mean_k CMI_II + ln n`` in natural-log units."""
    if problem.n < 10:
        raise DomainError("the Jensen-Shannon in-expectation check needs n >= 10")
    pop, emp = exact_risks(problem)
    lhs = problem.n * h_d(float(np.mean(pop)), float(np.mean(emp)), LogBase.NATURAL)
    stats = [mean_cmi(problem, k, "II", n_supersamples, rng) for k in range(problem.K)]
    cmis = [s[0] for s in stats]
    rhs = float(np.mean(cmis)) + math.log(problem.n)
    return TheoremCheck("thm5", float(lhs), rhs, lhs <= rhs + tol,
                        {"cmi": cmis, "cmi_se": [s[1] for s in stats],
                         "pop_risk": float(np.mean(pop)), "emp_risk": float(np.mean(emp))})
