"""Per-hypothesis sufficient statistics, conditional resamplers, and
p-values for the three model settings.

Linear setting geometry.  Freezing everything but hypothesis j's cross
product reduces the conditional data law to a single scalar: the
projection coordinate v of the response along the residualized direction
of column j.  Under the null, t = v * sqrt(dof) / sqrt(r^2 - v^2) follows
a t distribution with ``dof`` degrees of freedom, where r^2 = RSS + v_obs^2
is fixed by the conditioning.  Every selector that depends on the data
only through (X'X, X'y, ||y||^2) can therefore be resampled exactly by
sweeping v.  The graphical setting reuses the same geometry with one
column as the response; the model-X setting instead redraws the whole
column from its declared conditional distribution.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from scipy import special

from ._streams import CRT, rng_stream
from .data import GAUSSIAN_GRAPHICAL, GAUSSIAN_LINEAR, MODEL_X, Dataset, index_to_pair
from .exceptions import DataError, RankDeficiencyError


def t_cdf(t, dof: int):
    """Student-t CDF via the regularized incomplete beta function."""
    return special.stdtr(dof, t)


def two_sided_t_pvalue(t, dof: int):
    return 2.0 * special.stdtr(dof, -np.abs(t))


def _diagnose_rank(x: np.ndarray) -> int:
    """Index of the first column that is linearly dependent on earlier ones."""
    _, R = np.linalg.qr(x)
    diag = np.abs(np.diag(R))
    scale = np.linalg.norm(x, axis=0)
    bad = np.flatnonzero(diag <= 1e-10 * np.maximum(scale, 1.0))
    return int(bad[0]) if bad.size else x.shape[1] - 1


# ------------------------------------------------------------- linear
class LinearModelContext:
    """Shared geometry for all per-column hypotheses of one regression."""

    def __init__(self, x: np.ndarray, y: np.ndarray, dof: int):
        x = np.ascontiguousarray(x, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if dof <= 0:
            raise DataError("conditional t law needs positive residual degrees of freedom")
        self.x = x
        self.y = y
        self.n, self.p = x.shape
        self.dof = int(dof)
        self.gram = x.T @ x
        try:
            self.gram_inv = np.linalg.inv(self.gram)
            # inv succeeds on numerically singular input; verify.
            if not np.all(np.isfinite(self.gram_inv)) or np.linalg.cond(self.gram) > 1e12:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            col = _diagnose_rank(x)
            raise RankDeficiencyError(
                f"design is rank deficient (column {col} depends on the others)", column=col
            ) from None
        self.xty = x.T @ y
        self.theta_ols = self.gram_inv @ self.xty
        self.fitted = x @ self.theta_ols
        self.ynorm2 = float(y @ y)
        self.rss = float(max(self.ynorm2 - self.xty @ self.theta_ols, 0.0))
        ginv_diag = np.diag(self.gram_inv)
        self.res_scale = 1.0 / np.sqrt(ginv_diag)  # norm of each residualized column
        self.u = self.theta_ols * self.res_scale  # projection coordinate per column
        self.frozen_b = self.xty - self.res_scale * self.u  # cross product minus the v part
        self.r = np.sqrt(self.rss + self.u**2)

    @classmethod
    def from_dataset(cls, data: Dataset) -> "LinearModelContext":
        if data.setting != GAUSSIAN_LINEAR:
            raise DataError("linear context expects a gaussian_linear dataset")
        return cls(data.x, data.y, data.dof)

    @cached_property
    def tstats(self) -> np.ndarray:
        if self.rss <= 0:
            raise DataError("zero residual variance: t statistics are undefined")
        return self.u / np.sqrt(self.rss / self.dof)

    @cached_property
    def pvalues(self) -> np.ndarray:
        return two_sided_t_pvalue(self.tstats, self.dof)

    def law(self, j: int) -> "LinearLaw":
        return LinearLaw(self, int(j))


class LinearLaw:
    """Conditional law of the data given the sufficient statistic for one
    column's null hypothesis."""

    def __init__(self, ctx: LinearModelContext, j: int):
        if not 0 <= j < ctx.p:
            raise DataError(f"hypothesis index {j} out of range")
        self.ctx = ctx
        self.hypothesis = j
        self.dof = ctx.dof
        self.a = float(ctx.frozen_b[j])
        self.c = float(ctx.res_scale[j])
        self.r = float(ctx.r[j])
        self.v_obs = float(ctx.u[j])

    @property
    def t_obs(self) -> float:
        return float(self.ctx.tstats[self.hypothesis])

    def v_from_t(self, t):
        t = np.asarray(t, dtype=float)
        return self.r * t / np.sqrt(self.dof + t**2)

    def t_from_v(self, v):
        v = np.asarray(v, dtype=float)
        v = np.clip(v, -self.r, self.r)
        gap = np.maximum(self.r**2 - v**2, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = v * np.sqrt(self.dof) / np.sqrt(gap)
        return np.where(gap > 0, raw, np.where(v >= 0, np.inf, -np.inf))

    def draw_v(self, rng: np.random.Generator, size=None):
        return self.v_from_t(rng.standard_t(self.dof, size=size))

    def cross_product(self, v):
        """Value of column j's cross product with the response at coordinate v."""
        return self.a + self.c * np.asarray(v, dtype=float)

    def reconstruct_b(self, v, out: np.ndarray | None = None) -> np.ndarray:
        """Full cross-product vector X'y consistent with the frozen statistic."""
        if out is None:
            out = self.ctx.xty.copy()
        out[self.hypothesis] = self.a + self.c * float(v)
        return out

    def reconstruct_y(self, v: float) -> np.ndarray:
        """A response vector realizing coordinate v with the frozen statistic.

        Any selector that sees the data only through (X'X, X'y, ||y||^2)
        behaves identically on this reconstruction and on a true draw.
        At the observed coordinate it returns the observed response.
        """
        ctx = self.ctx
        v = float(v)
        if abs(v) > self.r:
            raise DataError(f"|v| exceeds the conditional support radius {self.r:.6g}")
        w = ctx.x @ ctx.gram_inv[:, self.hypothesis] * self.c  # unit residualized direction
        base = ctx.fitted - self.v_obs * w
        resid_norm2 = max(self.r**2 - v**2, 0.0)
        if ctx.rss > 0:
            z = (ctx.y - ctx.fitted) / np.sqrt(ctx.rss)
            return base + v * w + np.sqrt(resid_norm2) * z
        return base + v * w

    def pvalue(self) -> float:
        return float(self.ctx.pvalues[self.hypothesis])


def t_pvalues(data: Dataset) -> np.ndarray:
    """Two-sided t-test p-values for every column of a linear dataset."""
    return LinearModelContext.from_dataset(data).pvalues


# ----------------------------------------------------------- graphical
class GraphicalContext:
    """Pairwise-hypothesis machinery for a multivariate Gaussian sample.

    The hypothesis for pair (j, k) conditions on everything except the
    (j, k) cross product; its conditional law is the linear-law geometry
    of the regression of column k on the remaining columns.
    """

    def __init__(self, data: Dataset):
        if data.setting != GAUSSIAN_GRAPHICAL:
            raise DataError("graphical context expects a gaussian_graphical dataset")
        self.data = data
        self.d = data.d
        self.n_effective = data.n_effective
        self.dof = data.dof
        self._regressions: dict[int, LinearModelContext] = {}
        self.sigma_hat = (data.x.T @ data.x) / data.n_effective

    def regression(self, k: int) -> LinearModelContext:
        ctx = self._regressions.get(k)
        if ctx is None:
            design = np.delete(self.data.x, k, axis=1)
            ctx = LinearModelContext(design, self.data.x[:, k], self.dof)
            self._regressions[k] = ctx
        return ctx

    @cached_property
    def pvalues(self) -> np.ndarray:
        out = np.empty(self.d * (self.d - 1) // 2)
        pos = 0
        for j in range(self.d - 1):
            for k in range(j + 1, self.d):
                ctx = self.regression(k)
                out[pos] = ctx.pvalues[j]  # j keeps its index after deleting column k > j
                pos += 1
        return out

    def law(self, pair_idx: int) -> "GraphicalLaw":
        return GraphicalLaw(self, pair_idx)


class GraphicalLaw:
    """Conditional law for one absent-edge hypothesis."""

    def __init__(self, ctx: GraphicalContext, pair_idx: int):
        self.ctx = ctx
        self.hypothesis = int(pair_idx)
        self.j, self.k = index_to_pair(self.hypothesis, ctx.d)
        self.reg = ctx.regression(self.k)
        self.inner = self.reg.law(self.j)  # column j's index survives the deletion of k
        self.dof = self.inner.dof

    @property
    def v_obs(self) -> float:
        return self.inner.v_obs

    def draw_v(self, rng, size=None):
        return self.inner.draw_v(rng, size)

    def v_from_t(self, t):
        return self.inner.v_from_t(t)

    def t_from_v(self, v):
        return self.inner.t_from_v(v)

    def reconstruct_sigma(self, v: float, out: np.ndarray | None = None) -> np.ndarray:
        """Sample covariance with the conditioned (j, k) entry set by v."""
        if out is None:
            out = self.ctx.sigma_hat.copy()
        val = self.inner.cross_product(float(v)) / self.ctx.n_effective
        out[self.j, self.k] = val
        out[self.k, self.j] = val
        return out

    def pvalue(self) -> float:
        return self.inner.pvalue()


def graphical_pvalues(data: Dataset) -> np.ndarray:
    return GraphicalContext(data).pvalues


# -------------------------------------------------------------- model-X
class CovariateLaw:
    """Declared distribution of the covariates in the model-X setting."""

    def conditional_column(self, j: int, x_others: np.ndarray) -> tuple[np.ndarray, float]:
        """Mean vector and scalar s.d. of column j given the other columns."""
        raise NotImplementedError

    def sample_column(self, rng: np.random.Generator, j: int, x_others: np.ndarray) -> np.ndarray:
        mean, sd = self.conditional_column(j, x_others)
        return mean + sd * rng.standard_normal(mean.shape[0])

    def sample_block(self, rng, block: np.ndarray, x_rest: np.ndarray) -> np.ndarray:
        """Joint draw of the ``block`` columns given the remaining columns."""
        raise DataError("this covariate law does not support joint block resampling")


class GaussianCovariateLaw(CovariateLaw):
    """Multivariate Gaussian covariates with known mean and covariance."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=float)
        self.cov = np.asarray(cov, dtype=float)
        d = self.mean.shape[0]
        if self.cov.shape != (d, d):
            raise DataError("covariance shape must match the mean")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10):
            raise DataError("covariance must be symmetric")
        try:
            self.precision = np.linalg.inv(self.cov)
        except np.linalg.LinAlgError:
            raise DataError("covariance must be invertible") from None
        self.d = d

    def conditional_column(self, j, x_others):
        omega = self.precision
        coef = -np.delete(omega[j], j) / omega[j, j]
        mean = self.mean[j] + (x_others - np.delete(self.mean, j)) @ coef
        sd = 1.0 / np.sqrt(omega[j, j])
        return mean, float(sd)

    def sample_block(self, rng, block, x_rest):
        block = np.asarray(block, dtype=np.int64)
        rest = np.setdiff1d(np.arange(self.d), block)
        if rest.size == 0:
            cov_c = self.cov[np.ix_(block, block)]
            mean_c = np.broadcast_to(self.mean[block], (x_rest.shape[0], block.size))
        else:
            s_rr = self.cov[np.ix_(rest, rest)]
            s_br = self.cov[np.ix_(block, rest)]
            gain = np.linalg.solve(s_rr, s_br.T).T
            mean_c = self.mean[block] + (x_rest - self.mean[rest]) @ gain.T
            cov_c = self.cov[np.ix_(block, block)] - gain @ s_br.T
        chol = np.linalg.cholesky(cov_c + 1e-12 * np.eye(block.size))
        z = rng.standard_normal((mean_c.shape[0], block.size))
        return mean_c + z @ chol.T


def ar1_covariance(d: int, rho: float, variance: float = 1.0) -> np.ndarray:
    idx = np.arange(d)
    return variance * rho ** np.abs(idx[:, None] - idx[None, :])


def ar1_gaussian_law(d: int, rho: float, variance: float = 1.0) -> GaussianCovariateLaw:
    return GaussianCovariateLaw(np.zeros(d), ar1_covariance(d, rho, variance))


class BernoulliCovariateLaw(CovariateLaw):
    """Independent Bernoulli covariates (conditional = marginal)."""

    def __init__(self, pi, d: int | None = None):
        pi = np.asarray(pi, dtype=float)
        if pi.ndim == 0:
            if d is None:
                raise DataError("scalar success probability needs an explicit dimension")
            pi = np.full(d, float(pi))
        if np.any((pi <= 0) | (pi >= 1)):
            raise DataError("success probabilities must lie strictly inside (0, 1)")
        self.pi = pi
        self.d = pi.shape[0]

    def conditional_column(self, j, x_others):
        raise DataError("Bernoulli draws are discrete; use sample_column")

    def sample_column(self, rng, j, x_others):
        n = x_others.shape[0]
        return (rng.random(n) < self.pi[j]).astype(float)

    def sample_block(self, rng, block, x_rest):
        n = x_rest.shape[0]
        return (rng.random((n, len(block))) < self.pi[np.asarray(block)]).astype(float)


class CallbackCovariateLaw(CovariateLaw):
    """User-supplied conditional sampler: f(rng, j, x_others) -> column."""

    def __init__(self, sampler):
        self.sampler = sampler

    def conditional_column(self, j, x_others):
        raise DataError("callback laws expose draws only; use sample_column")

    def sample_column(self, rng, j, x_others):
        col = np.asarray(self.sampler(rng, j, x_others), dtype=float)
        if col.shape[0] != x_others.shape[0]:
            raise DataError("callback sampler returned a column of the wrong length")
        return col


class ModelXContext:
    """Hypothesis machinery for the model-X setting."""

    def __init__(self, data: Dataset, crt_draws: int = 199):
        if data.setting != MODEL_X:
            raise DataError("model-X context expects a model_x dataset")
        if data.covariate_law is None:
            raise DataError("model_x datasets need a declared covariate law")
        if crt_draws < 19:
            raise DataError("crt_draws must be at least 19")
        self.data = data
        self.law_x: CovariateLaw = data.covariate_law
        self.crt_draws = int(crt_draws)

    def law(self, j: int) -> "ModelXLaw":
        return ModelXLaw(self, int(j))

    def pvalues(self, seed: int) -> np.ndarray:
        """CRT p-values for every column, one derived stream per column."""
        out = np.empty(self.data.d)
        for j in range(self.data.d):
            out[j] = self.law(j).crt_pvalue(rng_stream(seed, CRT, j))
        return out


def marginal_covariance(xj: np.ndarray, y: np.ndarray) -> float:
    """Sample covariance between one column and the response."""
    return float(np.dot(xj - xj.mean(), y - y.mean()) / xj.shape[0])


class ModelXLaw:
    """Conditional law for one conditional-independence hypothesis."""

    def __init__(self, ctx: ModelXContext, j: int):
        if not 0 <= j < ctx.data.d:
            raise DataError(f"hypothesis index {j} out of range")
        self.ctx = ctx
        self.hypothesis = j
        self.x_others = np.delete(ctx.data.x, j, axis=1)
        self.x_obs = ctx.data.x[:, j]
        self.y = ctx.data.y

    def resample_column(self, rng: np.random.Generator) -> np.ndarray:
        return self.ctx.law_x.sample_column(rng, self.hypothesis, self.x_others)

    def crt_pvalue(self, rng: np.random.Generator, draws: int | None = None) -> float:
        """Randomization p-value for the marginal-covariance statistic,
        with the add-one correction that keeps it valid at finite draws."""
        B = self.ctx.crt_draws if draws is None else int(draws)
        t_obs = abs(marginal_covariance(self.x_obs, self.y))
        yc = self.y - self.y.mean()
        n = self.y.shape[0]
        hits = 0
        for _ in range(B):
            col = self.resample_column(rng)
            t_b = abs(np.dot(col - col.mean(), yc) / n)
            if t_b >= t_obs:
                hits += 1
        return (1 + hits) / (B + 1)


# ------------------------------------------------- independent p-values
class PValueLaw:
    """Toy law for thresholding independent uniform p-values: freezing all
    p-values except one, the held-out p-value is uniform under its null."""

    def __init__(self, pvalues, j: int):
        self.pvalues = np.asarray(pvalues, dtype=float)
        self.hypothesis = int(j)

    def resample(self, rng: np.random.Generator) -> np.ndarray:
        out = self.pvalues.copy()
        out[self.hypothesis] = rng.random()
        return out
