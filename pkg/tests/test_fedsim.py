import numpy as np
import pytest

from hetgen.datagen import two_cluster_centers, two_cluster_teacher, build_setup
from hetgen.errors import DomainError
from hetgen.fedsim import ExperimentCfg, OneRoundFedAvg, run_experiment, run_round
from hetgen.svm import LinearSVM, TrainerCfg


@pytest.fixture(scope="module")
def setup():
    d = 8
    return build_setup(2, 2, 1, two_cluster_centers(d), "ball", 2.0, two_cluster_teacher(d))


def client_data(seed, K=3, n=20, d=4):
    g = np.random.default_rng(seed)
    out = []
    for _ in range(K):
        X = g.normal(size=(n, d))
        out.append((X, np.where(X[:, 0] > 0, 1, -1)))
    return out


class TestOneRoundFedAvg:
    def test_average_of_independent_client_fits(self):
        data = client_data(0)
        base = LinearSVM(learning_rate=0.1, epochs=3)
        fed = OneRoundFedAvg(base, random_state=5).fit(data)
        seeds = np.random.default_rng(5).integers(2**63, size=len(data))
        fits = [LinearSVM(learning_rate=0.1, epochs=3, random_state=np.random.default_rng(s)).fit(X, y).coef_
                for (X, y), s in zip(data, seeds)]
        assert np.allclose(fed.client_coefs_, fits)
        assert np.allclose(fed.coef_, np.mean(fits, axis=0))

    def test_predict_uses_average(self):
        fed = OneRoundFedAvg(LinearSVM(epochs=2), random_state=1).fit(client_data(1))
        X = np.random.default_rng(2).normal(size=(10, 4))
        assert np.array_equal(fed.predict(X), np.where(X @ fed.coef_ >= 0, 1, -1))

    def test_does_not_mutate_template(self):
        base = LinearSVM(epochs=1)
        OneRoundFedAvg(base, random_state=0).fit(client_data(2))
        assert not hasattr(base, "coef_")

    def test_rejects_empty_and_y(self):
        with pytest.raises(DomainError):
            OneRoundFedAvg().fit([])
        with pytest.raises(TypeError):
            OneRoundFedAvg().fit(client_data(3), y=[1])


class TestRunRound:
    def test_zero_model_closed_form(self, setup, rng):
        # w = 0: every margin is 0, so margin loss is 1 and the tie-correct 0-1 loss is 0
        res = run_round(setup, 10, TrainerCfg(epochs=0), 1.0, 500, rng)
        assert np.all(res.emp_risk == 1.0) and np.all(res.pop_risk == 0.0)
        assert res.gen_error == -1.0
        res = run_round(setup, 10, TrainerCfg(epochs=0), 1.0, 500, rng, convention="margin")
        assert res.gen_error == 0.0

    def test_gen_error_is_client_average(self, setup, rng):
        res = run_round(setup, 30, TrainerCfg(epochs=3), 0.5, 2000, rng, pooled_test=True)
        assert res.K == 2
        assert res.gen_error == pytest.approx(float(np.mean(res.gen_per_client())))
        assert np.allclose(res.aggregated, res.client_models.mean(axis=0))
        assert res.pooled_gen_error == pytest.approx(res.pooled_pop_risk - res.emp_risk.mean())

    def test_deterministic_given_generator_state(self, setup):
        a = run_round(setup, 15, TrainerCfg(epochs=2), 1.0, 300, np.random.default_rng(7))
        b = run_round(setup, 15, TrainerCfg(epochs=2), 1.0, 300, np.random.default_rng(7))
        assert np.array_equal(a.aggregated, b.aggregated) and a.gen_error == b.gen_error

    def test_bad_arguments(self, setup, rng):
        with pytest.raises(DomainError):
            run_round(setup, 10, TrainerCfg(), 1.0, 100, rng, convention="bogus")
        with pytest.raises(DomainError):
            run_round(setup, 0, TrainerCfg(), 1.0, 100, rng)


class TestRunExperiment:
    def test_worker_count_does_not_change_results(self, setup):
        cfg = ExperimentCfg(setup, n=12, trainer=TrainerCfg(epochs=2), n_test=400, trials=4, base_seed=3)
        serial = run_experiment(cfg, n_jobs=1)
        parallel = run_experiment(cfg, n_jobs=2)
        assert np.array_equal(serial.gen_error, parallel.gen_error)
        assert np.array_equal(serial.pop_risk_se, parallel.pop_risk_se)

    def test_summary_statistics(self, setup):
        cfg = ExperimentCfg(setup, n=12, trainer=TrainerCfg(epochs=1), n_test=300, trials=5, view="pooled")
        rep = run_experiment(cfg)
        s = rep.summary()
        assert rep.trials == 5
        assert s["gen_error_mean"] == pytest.approx(rep.gen_error.mean())
        assert s["gen_error_se"] == pytest.approx(rep.gen_error.std(ddof=1) / np.sqrt(5))

    def test_single_trial_has_zero_se(self, setup):
        rep = run_experiment(ExperimentCfg(setup, n=5, trainer=TrainerCfg(epochs=1), n_test=50))
        assert rep.summary()["gen_error_se"] == 0.0

    def test_config_validation(self, setup):
        with pytest.raises(DomainError):
            ExperimentCfg(setup, n=5, trials=0)
        with pytest.raises(DomainError):
            ExperimentCfg(setup, n=5, view="global")
