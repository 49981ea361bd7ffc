import numpy as np
import pytest

from fdrpath.bootstrap import (
    bootstrap_se_modelx,
    bootstrap_se_parametric,
    cv_null_set,
    pvalue_null_set,
    _modelx_replicate,
)
from fdrpath.data import Dataset, pair_index
from fdrpath.estimator import FdrConfig
from fdrpath.exceptions import DataError
from fdrpath.laws import BernoulliCovariateLaw, GaussianCovariateLaw
from fdrpath.mle import constrained_mle_graphical, constrained_mle_linear
from fdrpath.scenarios import ScenarioSpec, generate
from fdrpath.selectors import Selector


def linear_data(n=60, d=8, seed=0, beta=(2.0, -1.5)):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    b = np.zeros(d)
    b[: len(beta)] = beta
    y = x @ b + rng.standard_normal(n)
    return Dataset.from_arrays(x, y, "gaussian_linear")


class TestPvalueNullSet:
    def test_all_large(self):
        ns = pvalue_null_set(np.ones(4))
        assert ns.h0_hat.tolist() == [0, 1, 2, 3]

    def test_mixed(self):
        ns = pvalue_null_set([0.05, 0.5])
        assert ns.h0_hat.tolist() == [1]
        assert ns.source == "pvalue_rule"

    def test_excludes_strong_signals_on_average(self):
        from fdrpath.laws import t_pvalues

        missed = []
        for rep in range(30):
            data = linear_data(n=80, d=10, seed=300 + rep, beta=(3, 3, 3))
            ns = pvalue_null_set(t_pvalues(data))
            missed.append(np.isin([0, 1, 2], ns.h0_hat).mean())
        assert np.mean(missed) <= 0.1  # keeps at least 90% of true signals out


class TestConstrainedMleLinear:
    def test_all_null_gives_zero_vector(self):
        data = linear_data(seed=1)
        theta, sigma = constrained_mle_linear(data, np.arange(data.d))
        assert np.all(theta == 0)
        assert sigma == pytest.approx(np.sqrt(np.mean(data.y**2)))

    def test_empty_null_set_is_full_least_squares(self):
        data = linear_data(seed=2)
        theta, _ = constrained_mle_linear(data, [])
        oracle = np.linalg.solve(data.x.T @ data.x, data.x.T @ data.y)
        assert np.allclose(theta, oracle, atol=1e-10)

    def test_matches_normal_equations(self):
        data = linear_data(n=50, d=6, seed=3)
        h0 = np.array([1, 4])
        theta, _ = constrained_mle_linear(data, h0)
        keep = np.array([0, 2, 3, 5])
        xk = data.x[:, keep]
        oracle = np.linalg.solve(xk.T @ xk, xk.T @ data.y)
        assert np.allclose(theta[keep], oracle, atol=1e-8)
        assert np.all(theta[h0] == 0.0)


class TestConstrainedMleGraphical:
    def test_empty_null_set_inverts(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((60, 4))
        s = a.T @ a / 60
        theta = constrained_mle_graphical(s, [])
        assert np.allclose(theta, np.linalg.inv(s), atol=1e-8)

    def test_diagonal_input_unchanged_by_zeroing(self):
        s = np.diag([2.0, 3.0, 1.5])
        theta = constrained_mle_graphical(s, [0, 2])
        assert np.allclose(theta, np.diag([0.5, 1 / 3, 2 / 3]))

    def test_pd_repair_preserves_zeros(self):
        # near-singular covariance: zeroing the (0,1) precision entry alone
        # pushes the matrix out of the positive-definite cone
        d = 3
        s = np.array([
            [1.712668, 0.260366, -0.290939],
            [0.260366, 0.822044, 0.355113],
            [-0.290939, 0.355113, 0.295428],
        ])
        raw = np.linalg.inv(s)
        cand = raw.copy()
        cand[0, 1] = cand[1, 0] = 0.0
        assert np.linalg.eigvalsh(cand)[0] < 0  # zeroing breaks the cone
        h0 = [pair_index(0, 1, d)]
        theta = constrained_mle_graphical(s, h0)
        margin = 1e-4 * np.trace(cand) / d  # the margin is set pre-repair
        assert np.linalg.eigvalsh(theta)[0] >= margin * (1 - 1e-6)
        assert theta[0, 1] == 0.0 and theta[1, 0] == 0.0


class TestCvNullSet:
    def test_pure_noise_keeps_most_hypotheses_null(self):
        sizes = []
        for rep in range(12):
            data = linear_data(n=60, d=10, seed=400 + rep, beta=())
            ns = cv_null_set(data, Selector("lasso", n_grid=8), folds=5, seed=rep)
            sizes.append(data.d - ns.h0_hat.size)
        assert np.mean(sizes) <= 0.1 * 10 + 1.0

    def test_strong_signals_survive(self):
        kept = []
        for rep in range(12):
            data = linear_data(n=90, d=10, seed=500 + rep, beta=(3, -3, 3))
            ns = cv_null_set(data, Selector("lasso", n_grid=8), folds=5, seed=rep)
            kept.append(1.0 - np.isin([0, 1, 2], ns.h0_hat).mean())
        assert np.mean(kept) >= 0.9

    def test_leave_one_out_toy(self):
        data = linear_data(n=10, d=2, seed=6, beta=(1.0,))
        ns = cv_null_set(data, Selector("lasso", n_grid=4), folds=10, seed=0)
        assert set(ns.h0_hat.tolist()) <= {0, 1}
        assert ns.tuning_cv is not None

    def test_graphical_route(self):
        spec = ScenarioSpec("graphical", n=200, d=6, d1=4, theta_star=0.8)
        data, truth = generate(spec, 7)
        ns = cv_null_set(data, Selector("graphical_lasso", n_grid=5), folds=4, seed=1)
        assert ns.h0_hat.size <= data.n_hypotheses
        assert ns.source == "cv_complement"

    def test_rejects_model_x(self):
        rng = np.random.default_rng(8)
        data = Dataset.from_arrays(
            rng.standard_normal((30, 3)), rng.standard_normal(30), "model_x",
            covariate_law=GaussianCovariateLaw(np.zeros(3), np.eye(3)),
        )
        with pytest.raises(DataError):
            cv_null_set(data, Selector("lasso", n_grid=3))


class TestParametricBootstrap:
    def test_se_is_the_sample_sd_formula(self):
        data = linear_data(seed=9)
        sel = Selector("lasso", n_grid=4)
        res = bootstrap_se_parametric(
            data, sel, FdrConfig(mc_samples=5, seed=1), M=5, folds=4
        )
        manual = np.sqrt(
            np.sum((res.fdr_matrix - res.fdr_matrix.mean(axis=0)) ** 2, axis=0) / (5 - 1)
        )
        assert np.allclose(res.se, manual, rtol=1e-12)

    def test_empty_selector_gives_zero_se(self):
        data = linear_data(seed=10)
        sel = Selector("custom", grid=np.array([1.0, 2.0]), func=lambda x, y, t: [])
        res = bootstrap_se_parametric(
            data, sel, FdrConfig(mc_samples=3, seed=2), M=3,
            null_set=pvalue_null_set(np.ones(data.d)),
        )
        assert np.all(res.se == 0.0)
        assert np.all(res.fdr_matrix == 0.0)

    def test_generator_respects_null_constraint(self):
        data = linear_data(seed=11, beta=(2.0, -2.0, 1.0))
        h0 = np.array([3, 4, 5, 6, 7])
        theta, _ = constrained_mle_linear(data, h0)
        assert np.all(theta[h0] == 0.0)
        assert np.any(theta[:3] != 0.0)

    def test_deterministic_and_worker_invariant(self):
        data = linear_data(n=50, d=6, seed=12, beta=(2.0,))
        sel = Selector("lasso", n_grid=3)
        cfg = FdrConfig(mc_samples=4, seed=3)
        ns = pvalue_null_set(np.ones(6) * 0.5)
        a = bootstrap_se_parametric(data, sel, cfg, M=4, null_set=ns, workers=1)
        b = bootstrap_se_parametric(data, sel, cfg, M=4, null_set=ns, workers=2)
        assert np.array_equal(a.se, b.se)
        assert np.array_equal(a.fdr_matrix, b.fdr_matrix)


class TestModelXBootstrap:
    def _data(self, n=50, d=5, seed=13, beta=(2.0,)):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, d))
        b = np.zeros(d)
        b[: len(beta)] = beta
        y = x @ b + rng.standard_normal(n)
        law = GaussianCovariateLaw(np.zeros(d), np.eye(d))
        return Dataset.from_arrays(x, y, "model_x", covariate_law=law)

    def test_empty_null_set_is_plain_row_bootstrap(self):
        data = self._data()
        sel = Selector("lasso", grid=np.array([2.0]))
        cfg = FdrConfig(mc_samples=2, seed=4, crt_draws=19)
        _, _ = _modelx_replicate((data, sel, cfg, np.empty(0, dtype=np.int64), 0))
        # regenerate the replicate rows to check they come from the data
        from fdrpath._streams import BOOTSTRAP, rng_stream

        rng = rng_stream(cfg.seed, BOOTSTRAP, 0)
        idx = rng.integers(0, data.n, size=data.n)
        rows = np.column_stack([data.y[idx], data.x[idx]])
        observed = np.column_stack([data.y, data.x])
        for row in rows:
            assert any(np.allclose(row, orow) for orow in observed)

    def test_full_null_set_decorrelates_columns(self):
        corr = []
        for rep in range(15):
            data = self._data(n=120, seed=600 + rep, beta=(2.0, 1.0))
            from fdrpath._streams import BOOTSTRAP, rng_stream

            rng = rng_stream(rep, BOOTSTRAP, 0)
            idx = rng.integers(0, data.n, size=data.n)
            x_m = data.x[idx].copy()
            y_m = data.y[idx]
            h0 = np.arange(data.d)
            x_m[:, h0] = data.covariate_law.sample_block(rng, h0, x_m[:, :0])
            corr.append(abs(np.corrcoef(x_m[:, 0], y_m)[0, 1]))
        assert np.mean(corr) < 3.0 / np.sqrt(120)

    def test_se_shape_and_determinism(self):
        data = self._data(seed=14)
        sel = Selector("lasso", n_grid=3)
        cfg = FdrConfig(mc_samples=3, seed=5, crt_draws=19)
        a = bootstrap_se_modelx(data, sel, cfg, M=3, workers=1)
        b = bootstrap_se_modelx(data, sel, cfg, M=3, workers=2)
        assert a.se.shape == (3,)
        assert np.array_equal(a.se, b.se)

    def test_callback_law_cannot_bootstrap(self):
        from fdrpath.laws import CallbackCovariateLaw

        rng = np.random.default_rng(15)
        x = rng.standard_normal((30, 3))
        y = rng.standard_normal(30)
        law = CallbackCovariateLaw(lambda r, j, others: r.standard_normal(others.shape[0]))
        data = Dataset.from_arrays(x, y, "model_x", covariate_law=law)
        ns = pvalue_null_set(np.ones(3) * 0.9)
        with pytest.raises(DataError):
            bootstrap_se_modelx(
                data, Selector("lasso", n_grid=3),
                FdrConfig(mc_samples=2, seed=6, crt_draws=19), M=2, null_set=ns,
            )

    def test_rejects_parametric_data(self):
        data = linear_data(seed=16)
        with pytest.raises(DataError):
            bootstrap_se_modelx(data, Selector("lasso", n_grid=3), M=2)

    def test_logistic_selector_route(self):
        rng = np.random.default_rng(17)
        x = rng.standard_normal((60, 4))
        p = 1 / (1 + np.exp(-2 * x[:, 0]))
        y = (rng.random(60) < p).astype(float)
        data = Dataset.from_arrays(
            x, y, "model_x", covariate_law=GaussianCovariateLaw(np.zeros(4), np.eye(4))
        )
        res = bootstrap_se_modelx(
            data, Selector("logistic_l1", n_grid=3),
            FdrConfig(mc_samples=3, seed=7, crt_draws=19), M=3,
        )
        assert res.se.shape == (3,) and np.all(np.isfinite(res.se))
