import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdrpath.data import (
    Dataset,
    ScenarioTruth,
    SelectionSet,
    fdp,
    fpr,
    index_to_pair,
    load_csv,
    pair_index,
)
from fdrpath.exceptions import DataError


def sel(*idx):
    return SelectionSet(np.asarray(idx, dtype=np.int64))


class TestFdp:
    def test_empty_selection_is_zero(self):
        assert fdp(sel(), [1, 2]) == 0.0

    def test_half_false(self):
        assert fdp(sel(1, 2), [2, 3]) == 0.5

    def test_no_nulls_selected(self):
        assert fdp(sel(1), []) == 0.0

    @given(
        st.sets(st.integers(0, 19)),
        st.sets(st.integers(0, 19)),
    )
    def test_bounds(self, selected, nulls):
        value = fdp(sel(*selected), sorted(nulls))
        assert 0.0 <= value <= 1.0

    @given(st.sets(st.integers(0, 19), min_size=1), st.sets(st.integers(0, 19)))
    def test_complement_identity(self, selected, signals):
        truth = ScenarioTruth(sorted(signals), np.zeros(20))
        h0 = truth.null_set(20)
        s = sel(*selected)
        hits = np.isin(s.indices, truth.signal_set).sum()
        assert fdp(s, h0) + hits / s.size == pytest.approx(1.0)


class TestFpr:
    def test_all_signals_found(self):
        truth = ScenarioTruth([0, 3], np.zeros(5))
        assert fpr(sel(0, 1, 3), truth) == 0.0

    def test_empty_selection(self):
        truth = ScenarioTruth(range(20), np.zeros(30))
        assert fpr(sel(), truth) == 1.0

    def test_partial_capture(self):
        truth = ScenarioTruth(range(20), np.zeros(40))
        found = sel(*range(16))
        assert fpr(found, truth) == pytest.approx(0.2)

    def test_no_signals_is_error(self):
        truth = ScenarioTruth([], np.zeros(5))
        with pytest.raises(DataError):
            fpr(sel(0), truth)


class TestSelectionSet:
    def test_sorted_unique(self):
        s = SelectionSet(np.array([3, 1, 3, 2]))
        assert s.indices.tolist() == [1, 2, 3]
        assert s.size == 3
        assert 2 in s and 5 not in s


class TestDataset:
    def test_linear_requires_more_rows_than_columns(self):
        x = np.random.default_rng(0).standard_normal((4, 4))
        with pytest.raises(DataError):
            Dataset.from_arrays(x, np.zeros(4), "gaussian_linear", standardize=False)

    def test_rejects_nonfinite(self):
        x = np.ones((5, 2))
        x[0, 0] = np.nan
        with pytest.raises(DataError):
            Dataset.from_arrays(x, np.zeros(5), "gaussian_linear", standardize=False)

    def test_graphical_has_no_response(self):
        x = np.random.default_rng(0).standard_normal((10, 3))
        with pytest.raises(DataError):
            Dataset(x=x, y=np.zeros(10), setting="gaussian_graphical")
        data = Dataset.from_arrays(x, None, "gaussian_graphical")
        assert data.y is None
        assert data.n_hypotheses == 3

    def test_standardization_recorded(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((30, 4)) * 3.0 + 5.0
        y = rng.standard_normal(30) + 2.0
        data = Dataset.from_arrays(x, y, "gaussian_linear")
        assert np.allclose(data.x.mean(axis=0), 0, atol=1e-12)
        assert np.allclose(np.linalg.norm(data.x, axis=0), 1, atol=1e-12)
        assert data.y_center == pytest.approx(y.mean())
        # coefficients map back to the raw scale
        coef = np.ones(4)
        raw = data.original_scale_coef(coef)
        assert np.allclose(raw * data.col_scale, coef)
        # centering consumes one degree of freedom
        assert data.dof == 30 - 4 - 1

    def test_uncentered_dof(self):
        rng = np.random.default_rng(2)
        data = Dataset.from_arrays(
            rng.standard_normal((12, 3)), rng.standard_normal(12),
            "gaussian_linear", standardize=False,
        )
        assert data.dof == 9

    def test_model_x_requires_no_standardization(self):
        rng = np.random.default_rng(3)
        with pytest.raises(DataError):
            Dataset.from_arrays(
                rng.standard_normal((10, 2)), np.zeros(10), "model_x", standardize=True
            )

    def test_labels_one_based(self):
        rng = np.random.default_rng(4)
        data = Dataset.from_arrays(rng.standard_normal((9, 3)), np.zeros(9),
                                   "gaussian_linear", standardize=False)
        assert data.hypothesis_labels() == ["1", "2", "3"]
        g = Dataset.from_arrays(rng.standard_normal((9, 3)), None, "gaussian_graphical")
        assert g.hypothesis_labels() == ["1:2", "1:3", "2:3"]


class TestPairIndexing:
    def test_roundtrip(self):
        d = 9
        seen = set()
        for j in range(d - 1):
            for k in range(j + 1, d):
                i = pair_index(j, k, d)
                assert index_to_pair(i, d) == (j, k)
                seen.add(i)
        assert seen == set(range(d * (d - 1) // 2))

    def test_edge_count_matches_pair_enumeration(self):
        d = 50
        assert d * (d - 1) // 2 == 1225


class TestLoadCsv(object):
    def _write(self, tmp_path, text):
        p = tmp_path / "data.csv"
        p.write_text(text)
        return p

    def test_response_by_name(self, tmp_path):
        p = self._write(tmp_path, "a,resp,b\n1,2,3\n4,5,6\n7,8,9\n0,1,2\n")
        data = load_csv(p, response="resp", standardize=False)
        assert data.column_names == ("a", "b")
        assert np.allclose(data.y, [2, 5, 8, 1])
        assert data.x.shape == (4, 2)

    def test_graphical_uses_all_columns(self, tmp_path):
        p = self._write(tmp_path, "a,b\n" + "\n".join(f"{i},{i * 2 % 7}" for i in range(10)) + "\n")
        data = load_csv(p, setting="gaussian_graphical")
        assert data.d == 2 and data.y is None

    def test_bad_numeric(self, tmp_path):
        p = self._write(tmp_path, "a,resp\n1,2\nx,4\n")
        with pytest.raises(DataError, match="non-numeric"):
            load_csv(p, response="resp")

    def test_missing_response(self, tmp_path):
        p = self._write(tmp_path, "a,b\n1,2\n3,4\n")
        with pytest.raises(DataError, match="not found"):
            load_csv(p, response="resp")
