"""Maximum-likelihood fits constrained to a declared null set.

Used to build sparsity-preserving bootstrap generators and to score
cross-validation folds: coefficients on the null set are pinned to zero,
everything else is fit freely.
"""

from __future__ import annotations

import numpy as np

from .data import GAUSSIAN_LINEAR, Dataset, index_to_pair
from .exceptions import DataError, RankDeficiencyError


def constrained_mle_linear(data: Dataset, h0_hat) -> tuple[np.ndarray, float]:
    """Least squares on the complement of ``h0_hat``; zeros elsewhere.

    Returns (theta_hat, sigma_hat) with the maximum-likelihood noise scale
    (residual sum of squares divided by n).
    """
    if data.setting != GAUSSIAN_LINEAR:
        raise DataError("constrained_mle_linear expects a gaussian_linear dataset")
    h0 = np.unique(np.asarray(h0_hat, dtype=np.int64))
    keep = np.setdiff1d(np.arange(data.d), h0)
    if keep.size >= data.n:
        raise DataError("constrained fit needs fewer retained columns than rows")
    theta = np.zeros(data.d)
    if keep.size:
        xk = data.x[:, keep]
        gram = xk.T @ xk
        try:
            coef = np.linalg.solve(gram, xk.T @ data.y)
        except np.linalg.LinAlgError:
            raise RankDeficiencyError("retained columns are rank deficient") from None
        if np.linalg.cond(gram) > 1e12:
            raise RankDeficiencyError("retained columns are rank deficient")
        theta[keep] = coef
        resid = data.y - xk @ coef
    else:
        resid = data.y
    sigma = float(np.sqrt(resid @ resid / data.n))
    return theta, sigma


def constrained_mle_graphical(sigma_hat, h0_hat, d: int | None = None, pd_margin=None):
    """Precision estimate with exact zeros on ``h0_hat`` (pair indices).

    Inverts the sample covariance, zeros the requested entries along with
    their transposes, and, if the result loses positive definiteness,
    shifts every eigenvalue up by the same amount until the smallest one
    clears a scale-aware margin.
    """
    S = np.asarray(sigma_hat, dtype=float)
    d = S.shape[0] if d is None else d
    try:
        theta = np.linalg.inv(S)
    except np.linalg.LinAlgError:
        raise DataError("sample covariance is singular") from None
    if not np.all(np.isfinite(theta)):
        raise DataError("sample covariance is singular")
    theta = (theta + theta.T) / 2.0
    for idx in np.unique(np.asarray(h0_hat, dtype=np.int64)):
        j, k = index_to_pair(int(idx), d)
        theta[j, k] = 0.0
        theta[k, j] = 0.0
    margin = pd_margin if pd_margin is not None else 1e-4 * np.trace(theta) / d
    min_eig = float(np.linalg.eigvalsh(theta)[0])
    if min_eig < margin:
        theta = theta + (margin - min_eig) * np.eye(d)
    return theta
