"""One-round federated averaging of linear SVM clients and measured generalization error.

Each client trains once on its own sample, the server returns the arithmetic
mean of the client weight vectors, and the generalization error is the
client-average of ``L_k(w_bar) - L_hat_k(S_k, w_bar)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_is_fitted

from .datagen import SetupSpec, sample_client_dataset
from .errors import DomainError
from .seeding import derive_rng
from .svm import LinearSVM, TrainerCfg, empirical_margin_risk, population_risk_mc

__all__ = [
    "OneRoundFedAvg",
    "RoundResult",
    "ExperimentCfg",
    "ReplicationReport",
    "run_round",
    "run_experiment",
]

CONVENTIONS = ("mixed", "margin")
VIEWS = ("client", "pooled")


class OneRoundFedAvg(ClassifierMixin, BaseEstimator):
    """Train one copy of ``estimator`` per client and average their ``coef_``.

    ``fit`` takes a list of per-client ``(X, y)`` pairs instead of a single
    design matrix.
    """

    def __init__(self, estimator=None, random_state=None):
        self.estimator = estimator
        self.random_state = random_state

    def fit(self, client_data, y=None):
        if y is not None:
            raise TypeError("pass per-client (X, y) pairs as the only argument")
        client_data = list(client_data)
        if not client_data:
            raise DomainError("need at least one client")
        base = self.estimator if self.estimator is not None else LinearSVM()
        rng = self.random_state if isinstance(self.random_state, np.random.Generator) \
            else np.random.default_rng(self.random_state)
        models = []
        for X, yk in client_data:
            est = clone(base).set_params(random_state=np.random.default_rng(rng.integers(2**63)))
            models.append(est.fit(X, yk).coef_)
        self.client_coefs_ = np.stack(models)
        self.coef_ = self.client_coefs_.mean(axis=0)
        self.classes_ = np.array([-1, 1])
        self.n_features_in_ = self.coef_.shape[0]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return np.asarray(X, dtype=float) @ self.coef_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0.0, 1, -1)


@dataclass
class RoundResult:
    client_models: np.ndarray
    aggregated: np.ndarray
    emp_risk: np.ndarray
    pop_risk: np.ndarray
    pop_risk_se: np.ndarray
    gen_error: float
    convention: str = "mixed"
    pooled_pop_risk: float | None = None
    pooled_pop_risk_se: float | None = None

    @property
    def K(self) -> int:
        return self.client_models.shape[0]

    def gen_per_client(self) -> np.ndarray:
        return self.pop_risk - self.emp_risk

    @property
    def pooled_gen_error(self) -> float | None:
        """Risk on the client-averaged mixture minus the mean empirical risk."""
        if self.pooled_pop_risk is None:
            return None
        return self.pooled_pop_risk - float(np.mean(self.emp_risk))


def _trainer_estimator(trainer: TrainerCfg) -> LinearSVM:
    return LinearSVM(trainer.learning_rate, trainer.epochs, trainer.batch_size,
                     trainer.l2_penalty, trainer.projection_radius)


def run_round(setup: SetupSpec, n: int, trainer: TrainerCfg, theta: float, n_test: int,
              rng: np.random.Generator, convention: str = "mixed",
              pooled_test: bool = False) -> RoundResult:
    """Sample K client datasets, train, average, and measure the generalization error.

    ``convention="mixed"`` scores the population with the 0-1 loss and the
    training sample with the margin loss; ``"margin"`` uses the margin loss
    for both.  With ``pooled_test`` the aggregate is also scored on the
    client-averaged mixture, which is the same for every setup over the same
    components.
    """
    if convention not in CONVENTIONS:
        raise DomainError(f"convention must be one of {CONVENTIONS}")
    if n < 1 or n_test < 1:
        raise DomainError("n and n_test must be >= 1")
    data_rng, train_rng, test_rng, pooled_rng = (
        np.random.default_rng(s) for s in rng.integers(2**63, size=4))
    datasets = [sample_client_dataset(mix, n, setup.teacher, data_rng) for mix in setup.mixtures]
    fed = OneRoundFedAvg(_trainer_estimator(trainer), random_state=train_rng)
    fed.fit([(ds.X, ds.y) for ds in datasets])
    w_bar = fed.coef_

    emp = np.array([empirical_margin_risk(ds.X, ds.y, w_bar, theta) for ds in datasets])
    pop_theta = theta if convention == "margin" else None
    pops = [population_risk_mc(mix, setup.teacher, w_bar, n_test, test_rng, theta=pop_theta)
            for mix in setup.mixtures]
    pop = np.array([p for p, _ in pops])
    se = np.array([s for _, s in pops])
    gen = float(np.mean(pop - emp))
    pooled = (None, None)
    if pooled_test:
        pooled = population_risk_mc(setup.pooled_mixture(), setup.teacher, w_bar, n_test,
                                    pooled_rng, theta=pop_theta)
    return RoundResult(fed.client_coefs_, w_bar, emp, pop, se, gen, convention, *pooled)


@dataclass(frozen=True)
class ExperimentCfg:
    setup: SetupSpec
    n: int
    theta: float = 1.0
    trainer: TrainerCfg = field(default_factory=TrainerCfg)
    n_test: int = 100_000
    trials: int = 1
    base_seed: int = 0
    convention: str = "mixed"
    view: str = "client"
    tag: str = "sim"

    def __post_init__(self):
        if self.n < 1 or self.n_test < 1 or self.trials < 1:
            raise DomainError("n, n_test and trials must be >= 1")
        if self.view not in VIEWS:
            raise DomainError(f"view must be one of {VIEWS}")


@dataclass
class ReplicationReport:
    gen_error: np.ndarray
    emp_risk: np.ndarray
    pop_risk: np.ndarray
    pop_risk_se: np.ndarray

    @property
    def trials(self) -> int:
        return self.gen_error.shape[0]

    @staticmethod
    def _se(x):
        return float(np.std(x, ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0

    def summary(self) -> dict:
        return {
            "gen_error_mean": float(np.mean(self.gen_error)),
            "gen_error_se": self._se(self.gen_error),
            "emp_risk_mean": float(np.mean(self.emp_risk)),
            "emp_risk_se": self._se(self.emp_risk),
            "pop_risk_mean": float(np.mean(self.pop_risk)),
            "pop_risk_se": self._se(self.pop_risk),
        }


def _one_trial(cfg: ExperimentCfg, t: int):
    pooled = cfg.view == "pooled"
    res = run_round(cfg.setup, cfg.n, cfg.trainer, cfg.theta, cfg.n_test,
                    derive_rng(cfg.base_seed, cfg.tag, t), cfg.convention, pooled_test=pooled)
    if pooled:
        return res.pooled_gen_error, float(res.emp_risk.mean()), res.pooled_pop_risk, \
            res.pooled_pop_risk_se
    # per-trial MC error of the client-averaged population risk
    se = float(np.sqrt(np.sum(res.pop_risk_se ** 2)) / res.K)
    return res.gen_error, float(res.emp_risk.mean()), float(res.pop_risk.mean()), se


def run_experiment(cfg: ExperimentCfg, n_jobs: int = 1) -> ReplicationReport:
    """Replicate :func:`run_round` over ``cfg.trials`` independently seeded trials.

    Trial ``t`` draws all randomness from ``(base_seed, tag, t)``, so reports do
    not depend on ``n_jobs``.
    """
    if n_jobs == 1:
        rows = [_one_trial(cfg, t) for t in range(cfg.trials)]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(_one_trial)(cfg, t) for t in range(cfg.trials))
    arr = np.array(rows, dtype=float).reshape(cfg.trials, 4)
    return ReplicationReport(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])
