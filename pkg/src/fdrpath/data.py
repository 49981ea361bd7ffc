"""Core immutable data types: datasets, selection sets, ground truth, and
the error metrics defined on them.

Hypotheses are indexed 0-based internally.  In the regression settings a
hypothesis is a column index; in the graphical setting it is an unordered
pair (j, k), j < k, flattened in lexicographic order.  User-facing IO
(CSV columns, labels) is 1-based.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError

GAUSSIAN_LINEAR = "gaussian_linear"
MODEL_X = "model_x"
GAUSSIAN_GRAPHICAL = "gaussian_graphical"
SETTINGS = (GAUSSIAN_LINEAR, MODEL_X, GAUSSIAN_GRAPHICAL)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SelectionSet:
    """A sorted set of selected hypothesis indices."""

    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        object.__setattr__(self, "indices", _frozen(idx))

    @property
    def size(self) -> int:
        return int(self.indices.size)

    def __contains__(self, j) -> bool:
        return bool(np.isin(j, self.indices))

    def __iter__(self):
        return iter(self.indices.tolist())

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class ScenarioTruth:
    """Ground truth of a simulated scenario.

    ``signal_set`` holds hypothesis indices with nonzero effects, ``theta``
    the coefficient vector (or precision matrix in the graphical setting),
    and ``sigma`` the noise scale.
    """

    signal_set: np.ndarray
    theta: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "signal_set", _frozen(np.unique(np.asarray(self.signal_set, dtype=np.int64)))
        )
        object.__setattr__(self, "theta", _frozen(np.asarray(self.theta, dtype=float)))

    def null_set(self, n_hypotheses: int) -> np.ndarray:
        mask = np.ones(n_hypotheses, dtype=bool)
        mask[self.signal_set] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class Dataset:
    """Immutable design matrix plus optional response.

    ``x`` is stored after any construction-time standardization; the
    recorded transform (``col_center``, ``col_scale``, ``y_center``) maps
    fitted coefficients back to the original scale.  ``n_effective``
    counts one observation less than ``n`` when columns were centered,
    because centering consumes one linear constraint.
    """

    x: np.ndarray
    y: np.ndarray | None
    setting: str
    column_names: tuple[str, ...] | None = None
    covariate_law: object | None = None
    col_center: np.ndarray | None = None
    col_scale: np.ndarray | None = None
    y_center: float | None = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise DataError(f"unknown setting {self.setting!r}")
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError("x must be a 2-d matrix with at least one row and column")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains non-finite entries")
        object.__setattr__(self, "x", _frozen(x))
        if self.setting == GAUSSIAN_GRAPHICAL:
            if self.y is not None:
                raise DataError("graphical datasets carry no response")
        else:
            if self.y is None:
                raise DataError(f"{self.setting} requires a response vector")
            y = np.asarray(self.y, dtype=float).ravel()
            if y.shape[0] != x.shape[0]:
                raise DataError("y length must match the number of rows of x")
            if not np.all(np.isfinite(y)):
                raise DataError("y contains non-finite entries")
            object.__setattr__(self, "y", _frozen(y))
        if self.setting in (GAUSSIAN_LINEAR, GAUSSIAN_GRAPHICAL) and self.n_effective <= self.d_design:
            raise DataError(
                f"{self.setting} needs more observations than design columns "
                f"(n_effective={self.n_effective}, design columns={self.d_design})"
            )
        if self.column_names is not None and len(self.column_names) != x.shape[1]:
            raise DataError("column_names length must match the number of columns")

    # -- shapes -------------------------------------------------------
    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def centered(self) -> bool:
        return self.col_center is not None

    @property
    def n_effective(self) -> int:
        return self.n - 1 if self.centered else self.n

    @property
    def d_design(self) -> int:
        # Graphical hypotheses regress one column on the d-1 others.
        return self.d - 1 if self.setting == GAUSSIAN_GRAPHICAL else self.d

    @property
    def dof(self) -> int:
        """Residual degrees of freedom of the per-hypothesis regression."""
        return self.n_effective - self.d_design

    @property
    def n_hypotheses(self) -> int:
        if self.setting == GAUSSIAN_GRAPHICAL:
            return self.d * (self.d - 1) // 2
        return self.d

    # -- construction -------------------------------------------------
    @classmethod
    def from_arrays(
        cls,
        x,
        y=None,
        setting: str = GAUSSIAN_LINEAR,
        column_names=None,
        covariate_law=None,
        standardize: bool | None = None,
    ) -> "Dataset":
        """Build a dataset, applying the setting's default standardization.

        ``standardize=None`` resolves to: center + unit-norm scale for
        ``gaussian_linear`` (the response is centered as well), center only
        for ``gaussian_graphical``, and no transform for ``model_x`` (the
        declared covariate law refers to the raw columns).
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise DataError("x must be 2-d")
        if standardize is None:
            standardize = setting != MODEL_X
        col_center = col_scale = y_center = None
        if standardize:
            if setting == MODEL_X:
                raise DataError("model_x datasets must not be standardized")
            col_center = x.mean(axis=0)
            x = x - col_center
            if setting == GAUSSIAN_LINEAR:
                norms = np.linalg.norm(x, axis=0)
                if np.any(norms <= 0):
                    bad = int(np.flatnonzero(norms <= 0)[0])
                    raise DataError(f"column {bad} is constant and cannot be scaled")
                col_scale = norms
                x = x / col_scale
                y = np.asarray(y, dtype=float).ravel()
                y_center = float(y.mean())
                y = y - y_center
        return cls(
            x=x,
            y=None if y is None else np.asarray(y, dtype=float),
            setting=setting,
            column_names=tuple(column_names) if column_names is not None else None,
            covariate_law=covariate_law,
            col_center=None if col_center is None else _frozen(col_center),
            col_scale=None if col_scale is None else _frozen(col_scale),
            y_center=y_center,
        )

    def original_scale_coef(self, coef: np.ndarray) -> np.ndarray:
        """Map coefficients fitted on the stored columns back to raw units."""
        coef = np.asarray(coef, dtype=float)
        if self.col_scale is not None:
            coef = coef / self.col_scale
        return coef

    def hypothesis_labels(self) -> list[str]:
        """1-based labels: column indices, or ``j:k`` pairs when graphical."""
        if self.setting == GAUSSIAN_GRAPHICAL:
            return [f"{j + 1}:{k + 1}" for j, k in iter_pairs(self.d)]
        if self.column_names is not None:
            return list(self.column_names)
        return [str(j + 1) for j in range(self.d)]


# -- graphical pair enumeration --------------------------------------
def iter_pairs(d: int):
    """Unordered pairs (j, k), j < k, in lexicographic order."""
    for j in range(d - 1):
        for k in range(j + 1, d):
            yield j, k


def pair_index(j: int, k: int, d: int) -> int:
    """Flattened hypothesis index of pair (j, k), j < k."""
    if not 0 <= j < k < d:
        raise ValueError(f"need 0 <= j < k < d, got ({j}, {k}) with d={d}")
    return j * (2 * d - j - 1) // 2 + (k - j - 1)


def index_to_pair(i: int, d: int) -> tuple[int, int]:
    """Inverse of :func:`pair_index`."""
    if not 0 <= i < d * (d - 1) // 2:
        raise ValueError(f"pair index {i} out of range for d={d}")
    j = 0
    offset = 0
    while offset + (d - j - 1) <= i:
        offset += d - j - 1
        j += 1
    return j, j + 1 + (i - offset)


# -- error metrics ----------------------------------------------------
def fdp(sel: SelectionSet, h0) -> float:
    """False discovery proportion |sel ∩ h0| / |sel|, with 0/0 = 0."""
    if sel.size == 0:
        return 0.0
    h0 = np.asarray(h0, dtype=np.int64)
    return float(np.isin(sel.indices, h0).sum() / sel.size)


def fpr(sel: SelectionSet, truth: ScenarioTruth) -> float:
    """Fraction of true signals missed by the selection (a type-II rate)."""
    d1 = truth.signal_set.size
    if d1 == 0:
        raise DataError("fpr is undefined when the scenario has no signals")
    hit = np.isin(truth.signal_set, sel.indices).sum()
    return float(1.0 - hit / d1)


# -- CSV ingestion ----------------------------------------------------
def load_csv(
    path,
    response: str | None = None,
    setting: str = GAUSSIAN_LINEAR,
    standardize: bool | None = None,
    covariate_law=None,
) -> Dataset:
    """Load a dataset from a headed CSV file.

    The first row names the columns.  ``response`` selects the response
    column for the regression settings; graphical datasets pass
    ``response=None`` and use every column as a variable.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: non-numeric value ({exc})") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.asarray(rows, dtype=float)

    if setting == GAUSSIAN_GRAPHICAL:
        if response is not None:
            raise DataError("graphical datasets have no response column")
        return Dataset.from_arrays(
            values, None, setting, column_names=header, standardize=standardize
        )
    if response is None:
        raise DataError(f"{setting} requires a response column name")
    if response not in header:
        raise DataError(f"response column {response!r} not found (columns: {header})")
    ycol = header.index(response)
    y = values[:, ycol]
    x = np.delete(values, ycol, axis=1)
    names = [h for i, h in enumerate(header) if i != ycol]
    return Dataset.from_arrays(
        x,
        y,
        setting,
        column_names=names,
        covariate_law=covariate_law,
        standardize=standardize,
    )
