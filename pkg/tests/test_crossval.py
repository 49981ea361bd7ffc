import numpy as np
import pytest

from fdrpath.crossval import CvCurve, cv_curve, fold_assignments, one_se_rule
from fdrpath.data import Dataset
from fdrpath.exceptions import DataError
from fdrpath.selectors import Selector, lasso_lambda_max


def linear_data(n=60, d=6, seed=0, beta=None, standardize=True):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    b = np.zeros(d) if beta is None else np.asarray(beta, dtype=float)
    y = x @ b + rng.standard_normal(n)
    return Dataset.from_arrays(x, y, "gaussian_linear", standardize=standardize)


def synthetic_curve(grid, mean, se, kind="lasso"):
    return CvCurve(
        grid=np.asarray(grid, dtype=float),
        mean_error=np.asarray(mean, dtype=float),
        se_error=np.asarray(se, dtype=float),
        metric="mse",
        selector_kind=kind,
        fold_ids=np.zeros(1, dtype=np.int64),
        lambda_min=float(grid[int(np.argmin(mean))]),
        lambda_1se=np.nan,
    )


class TestOneSeRule:
    def test_flat_curve_picks_most_regularized(self):
        c = synthetic_curve([5, 4, 3, 2, 1], [1, 1, 1, 1, 1], [0.1] * 5)
        assert one_se_rule(c) == 5.0

    def test_zero_se_picks_minimum(self):
        c = synthetic_curve([5, 4, 3, 2, 1], [9, 7, 5, 3, 1], [0.0] * 5)
        assert one_se_rule(c) == 1.0

    def test_hand_example(self):
        c = synthetic_curve([5, 4, 3, 2, 1], [5, 3, 2.5, 2.4, 2.45], [0.2] * 5)
        assert one_se_rule(c) == 3.0

    def test_stepwise_orientation(self):
        # fewer steps = more regularized
        c = synthetic_curve([1, 2, 3, 4], [2.5, 2.4, 2.38, 2.6], [0.2] * 4, kind="forward_stepwise")
        assert one_se_rule(c) == 1.0


class TestFoldAssignments:
    def test_partition(self):
        ids = fold_assignments(23, 5, seed=1)
        assert ids.shape == (23,)
        sizes = np.bincount(ids, minlength=5)
        assert sizes.min() >= 4 and sizes.max() <= 5

    def test_bounds(self):
        with pytest.raises(DataError):
            fold_assignments(10, 1)
        with pytest.raises(DataError):
            fold_assignments(10, 11)


class TestCvCurve:
    def test_max_penalty_predicts_training_mean(self):
        data = linear_data(n=200, d=5, seed=2)
        lam_max = lasso_lambda_max(data)
        sel = Selector("lasso", grid=np.array([lam_max * 1.2]))
        curve = cv_curve(data, sel, folds=5, seed=3)
        assert curve.mean_error[0] == pytest.approx(np.var(data.y), rel=0.05)

    def test_pure_noise_prefers_heavy_regularization(self):
        wins = 0
        for rep in range(30):
            data = linear_data(n=60, d=10, seed=100 + rep)
            curve = cv_curve(data, Selector("lasso", n_grid=8), folds=5, seed=rep)
            strength_rank = np.argsort(-curve.grid).tolist().index(
                int(np.argmin(curve.mean_error))
            )
            wins += strength_rank <= 2  # among the three most regularized
        assert wins >= 15

    def test_one_se_at_least_as_regularized_as_min(self):
        for rep in range(5):
            data = linear_data(n=80, d=8, seed=200 + rep, beta=[2, -1, 0, 0, 0, 0, 0, 0])
            curve = cv_curve(data, Selector("lasso", n_grid=8), folds=5, seed=rep)
            assert curve.lambda_1se >= curve.lambda_min

    def test_row_permutation_invariance_with_fixed_folds(self):
        data = linear_data(n=40, d=4, seed=4, beta=[1.5, 0, 0, 0])
        ids = fold_assignments(40, 4, seed=9)
        base = cv_curve(data, Selector("lasso", n_grid=5), folds=4, fold_ids=ids)
        perm = np.random.default_rng(5).permutation(40)
        data_p = Dataset.from_arrays(
            data.x[perm], data.y[perm], "gaussian_linear", standardize=False
        )
        moved = cv_curve(
            data_p,
            Selector("lasso", grid=base.grid),
            folds=4,
            fold_ids=ids[perm],
        )
        assert np.allclose(base.mean_error, moved.mean_error, rtol=1e-9)
        assert np.allclose(base.se_error, moved.se_error, rtol=1e-9)

    def test_duplicated_rows_with_aligned_folds(self):
        rng = np.random.default_rng(6)
        x = rng.standard_normal((20, 3))
        y = x[:, 0] + rng.standard_normal(20)
        x2, y2 = np.vstack([x, x]), np.concatenate([y, y])
        data = Dataset.from_arrays(x2, y2, "gaussian_linear", standardize=False)
        ids = np.concatenate([np.zeros(20, dtype=int), np.ones(20, dtype=int)])
        curve = cv_curve(data, Selector("lasso", n_grid=4), folds=2, fold_ids=ids)
        # both folds hold identical data, so the fold spread vanishes
        assert np.allclose(curve.se_error, 0.0, atol=1e-10)

    def test_stepwise_curve(self):
        data = linear_data(n=60, d=6, seed=7, beta=[2, -2, 0, 0, 0, 0])
        curve = cv_curve(data, Selector("forward_stepwise", grid=np.arange(0, 5)), folds=5, seed=1)
        assert np.argmin(curve.mean_error) in (2, 3, 4)
        assert curve.metric == "mse"

    def test_graphical_metric(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((120, 4))
        data = Dataset.from_arrays(x, None, "gaussian_graphical")
        curve = cv_curve(data, Selector("graphical_lasso", n_grid=4), folds=4, seed=2)
        assert curve.metric == "neg_loglik"
        assert np.all(np.isfinite(curve.mean_error))
        with pytest.raises(DataError):
            cv_curve(data, Selector("graphical_lasso", n_grid=3), folds=4, metric="mse")

    def test_logistic_metric(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal((100, 4))
        p = 1 / (1 + np.exp(-2 * x[:, 0]))
        y = (rng.random(100) < p).astype(float)
        from fdrpath.laws import GaussianCovariateLaw

        data = Dataset.from_arrays(
            x, y, "model_x", covariate_law=GaussianCovariateLaw(np.zeros(4), np.eye(4))
        )
        curve = cv_curve(data, Selector("logistic_l1", n_grid=4), folds=4, seed=3)
        assert curve.metric == "neg_loglik"
        assert np.all(curve.mean_error > 0)
