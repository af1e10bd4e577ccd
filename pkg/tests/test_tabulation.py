import math

import numpy as np
import pytest

from areamix import (
    DomainError,
    DuplicateKeyError,
    InsufficientDataError,
    SchemaError,
    ShapeError,
    back_transform,
    delta_method_variance,
    gvf_impute,
    load_tabulation,
    log_transform,
    predict_summaries,
    write_prediction_csv,
)
from areamix.loess import loess_fit
from areamix.tabulation import IMPUTATION_FLOOR, PREDICTION_COLUMNS

from conftest import write_csv


class TestLoadTabulation:
    def test_basic_row_parsing(self, basic_table_csv):
        table = load_tabulation(basic_table_csv)
        assert table.areas == ("19013", "19041")
        assert table.n_cells == 2
        i = table.index_of("19041", 1)
        assert table.estimates[i] == 325.0
        assert table.std_errors[i] == 49.2
        assert table.sample_sizes[i] == 250.0

    def test_rows_are_area_major(self, basic_table_csv):
        table = load_tabulation(basic_table_csv)
        assert table.keys() == [("19013", 1), ("19013", 2), ("19041", 1), ("19041", 2)]
        assert table.n_rows == 4

    def test_duplicate_area_cell(self, tmp_path):
        path = write_csv(
            tmp_path / "dup.csv",
            "state,county,order,count,std_err\n19,041,1,325,49.2\n19,041,1,300,40.0\n",
        )
        with pytest.raises(DuplicateKeyError):
            load_tabulation(path)

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path / "m.csv", "state,county,order,count\n19,041,1,325\n")
        with pytest.raises(SchemaError):
            load_tabulation(path)

    def test_empty_file(self, tmp_path):
        path = write_csv(tmp_path / "e.csv", "state,county,order,count,std_err\n")
        with pytest.raises(SchemaError):
            load_tabulation(path)

    def test_negative_count_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "n.csv", "state,county,order,count,std_err\n19,041,1,-5,49.2\n"
        )
        with pytest.raises(DomainError):
            load_tabulation(path)

    def test_non_integer_cell_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "c.csv", "state,county,order,count,std_err\n19,041,one,325,49.2\n"
        )
        with pytest.raises(SchemaError):
            load_tabulation(path)

    def test_ragged_cells_rejected(self, tmp_path):
        # area 19013 is missing cell 2
        path = write_csv(
            tmp_path / "r.csv",
            "state,county,order,count,std_err\n"
            "19,041,1,325,49.2\n19,041,2,10,3.0\n19,013,1,7,2.0\n",
        )
        with pytest.raises(SchemaError, match="cells"):
            load_tabulation(path)

    def test_cells_must_start_at_one(self, tmp_path):
        path = write_csv(
            tmp_path / "s.csv",
            "state,county,order,count,std_err\n19,041,2,325,49.2\n19,041,3,10,3.0\n",
        )
        with pytest.raises(SchemaError):
            load_tabulation(path)

    def test_nonpositive_sample_size_rejected(self, tmp_path):
        path = write_csv(
            tmp_path / "z.csv",
            "state,county,order,count,std_err,sample_size\n19,041,1,325,49.2,0\n",
        )
        with pytest.raises(DomainError):
            load_tabulation(path)

    def test_column_name_overrides(self, tmp_path):
        path = write_csv(
            tmp_path / "alt.csv",
            "st,cty,cell,estimate,se\n19,041,1,325,49.2\n",
        )
        table = load_tabulation(
            path,
            columns={
                "state": "st",
                "county": "cty",
                "order": "cell",
                "count": "estimate",
                "std_err": "se",
            },
        )
        assert table.areas == ("19041",)
        assert table.estimates[0] == 325.0
        assert table.sample_sizes is None

    def test_missing_file(self):
        with pytest.raises(FileNotFoundError):
            load_tabulation("/nonexistent/tab.csv")


class TestDeltaMethod:
    def test_reference_value(self):
        # se^2 / (est + 1)^2 at est=325, se=49.2
        got = delta_method_variance(325.0, 49.2)
        assert got == pytest.approx((49.2 / 326.0) ** 2, rel=1e-14)

    def test_zero_estimate_zero_se(self):
        assert delta_method_variance(0.0, 0.0) == 0.0

    def test_vectorized(self):
        est = np.array([0.0, 9.0])
        se = np.array([1.0, 5.0])
        got = delta_method_variance(est, se)
        assert np.allclose(got, [(1.0 / 1.0) ** 2, (5.0 / 10.0) ** 2])

    def test_negative_inputs(self):
        with pytest.raises(DomainError):
            delta_method_variance(-1.0, 2.0)
        with pytest.raises(DomainError):
            delta_method_variance(1.0, -2.0)


class TestLogTransform:
    def test_z_is_log1p(self, basic_table_csv):
        table = load_tabulation(basic_table_csv)
        log_table = log_transform(table)
        assert np.array_equal(log_table.z, np.log1p(table.estimates))
        i = log_table.index_of("19041", 1)
        assert log_table.z[i] == pytest.approx(math.log(326.0), rel=1e-14)

    def test_zero_estimate_leaves_d_undefined(self, basic_table_csv):
        log_table = log_transform(load_tabulation(basic_table_csv))
        i = log_table.index_of("19041", 2)  # count 0, se 0.9
        assert math.isnan(log_table.d[i])
        j = log_table.index_of("19041", 1)
        assert log_table.d[j] == pytest.approx((49.2 / 326.0) ** 2)

    def test_zero_se_leaves_d_undefined(self, tmp_path):
        path = write_csv(
            tmp_path / "t.csv", "state,county,order,count,std_err\n19,041,1,10,0\n"
        )
        log_table = log_transform(load_tabulation(path))
        assert math.isnan(log_table.d[0])


def _table_with_variances(n_defined: int, n_missing: int, rule):
    """Single-cell table whose defined d follow a rule of log sample size."""
    areas = tuple(f"19{i:03d}" for i in range(n_defined + n_missing))
    sizes = np.linspace(50.0, 5000.0, n_defined + n_missing)
    est = np.full(len(areas), 100.0)
    se = np.empty(len(areas))
    for i in range(len(areas)):
        if i < n_defined:
            d_target = rule(math.log(sizes[i]))
            se[i] = math.sqrt(d_target) * 101.0
        else:
            se[i] = 0.0  # collapses to undefined after the transform
    from areamix.tabulation import TabulationTable

    table = TabulationTable(
        areas=areas, n_cells=1, estimates=est, std_errors=se, sample_sizes=sizes
    )
    return log_transform(table)


class TestGvfImpute:
    def test_matches_independent_smoother(self):
        rule = lambda u: 2.5 - 0.2 * u + 0.01 * math.sin(50 * u)
        log_table = _table_with_variances(20, 6, rule)
        filled = gvf_impute(log_table, span=0.75)

        defined = np.isfinite(log_table.d)
        predictor = np.log(log_table.sample_sizes)
        oracle = loess_fit(predictor[defined], log_table.d[defined], span=0.75)
        expected = np.maximum(oracle(predictor[~defined]), IMPUTATION_FLOOR)
        assert np.allclose(filled.d[~defined], expected, rtol=1e-12)

    def test_defined_entries_untouched(self):
        log_table = _table_with_variances(12, 3, lambda u: 0.5 + 0.05 * u)
        filled = gvf_impute(log_table)
        defined = np.isfinite(log_table.d)
        assert np.array_equal(filled.d[defined], log_table.d[defined])
        assert np.array_equal(filled.imputed, ~defined)

    def test_floor_applies(self):
        # defined variances are tiny, so the smoothed fill hits the floor
        log_table = _table_with_variances(10, 2, lambda u: 1e-9)
        filled = gvf_impute(log_table)
        assert np.all(filled.d[filled.imputed] == IMPUTATION_FLOOR)

    def test_no_defined_variances(self):
        log_table = _table_with_variances(0, 6, lambda u: 1.0)
        with pytest.raises(InsufficientDataError):
            gvf_impute(log_table)

    def test_too_few_defined(self):
        log_table = _table_with_variances(4, 3, lambda u: 1.0)
        with pytest.raises(InsufficientDataError):
            gvf_impute(log_table)

    def test_explicit_predictor(self):
        log_table = _table_with_variances(15, 4, lambda u: 1.5 - 0.1 * u)
        predictor = np.arange(log_table.n_rows, dtype=float)
        filled = gvf_impute(log_table, predictor=predictor, span=0.9)
        defined = np.isfinite(log_table.d)
        oracle = loess_fit(predictor[defined], log_table.d[defined], span=0.9)
        expected = np.maximum(oracle(predictor[~defined]), IMPUTATION_FLOOR)
        assert np.allclose(filled.d[~defined], expected, rtol=1e-12)


class TestBackTransform:
    def test_two_draw_example(self):
        # draws {log 1, log 3} decode to counts {0, 2}: mean 1, sd sqrt(2)
        out = back_transform(np.array([[0.0], [math.log(3.0)]]))
        assert out.mean[0] == 1.0
        assert out.sd[0] == pytest.approx(math.sqrt(2.0), rel=1e-15)
        assert out.cv[0] == pytest.approx(math.sqrt(2.0), rel=1e-15)

    def test_exact_on_encoded_integers(self):
        ks = np.array([0, 1, 2, 7, 10, 999, 10**6, 123456789], dtype=float)
        draws = np.log1p(ks)[None, :]
        out = back_transform(draws)
        assert np.array_equal(out.mean, ks)

    def test_non_integer_draws_use_expm1(self):
        out = back_transform(np.array([[0.5, 2.5]]))
        assert np.allclose(out.mean, np.expm1([0.5, 2.5]), rtol=1e-15)

    def test_single_draw_sd_zero(self):
        out = back_transform(np.array([math.log(4.0), 1.3]))
        assert np.array_equal(out.sd, [0.0, 0.0])
        assert out.cv[0] == 0.0

    def test_cv_undefined_at_zero_mean(self):
        out = back_transform(np.array([[0.0]]))
        assert out.mean[0] == 0.0
        assert math.isnan(out.cv[0])

    def test_negative_draws_pass_through(self):
        out = back_transform(np.array([[-0.5]]))
        assert out.mean[0] == pytest.approx(math.expm1(-0.5), rel=1e-15)

    def test_nonfinite_rejected(self):
        with pytest.raises(DomainError):
            back_transform(np.array([[np.nan]]))

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            back_transform(np.empty((0, 3)))


class TestPredictSummaries:
    def test_array_input(self):
        draws = np.array([[0.0, 1.0], [2.0, 3.0]])
        s = predict_summaries(draws)
        assert np.allclose(s.log_mean, [1.0, 2.0])
        assert np.allclose(s.log_sd, np.std(draws, axis=0, ddof=1))
        assert np.allclose(s.count.mean, np.expm1(draws).mean(axis=0))

    def test_fit_like_object(self):
        class Fake:
            y = np.array([[1.0, 2.0]])

        s = predict_summaries(Fake())
        assert np.allclose(s.log_mean, [1.0, 2.0])
        assert np.array_equal(s.log_sd, [0.0, 0.0])

    def test_csv_layout(self, tmp_path, basic_table_csv):
        log_table = log_transform(load_tabulation(basic_table_csv))
        draws = np.tile(log_table.z, (3, 1))
        path = tmp_path / "pred.csv"
        write_prediction_csv(path, log_table, predict_summaries(draws))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(PREDICTION_COLUMNS)
        assert len(lines) == 1 + log_table.n_rows
        first = lines[1].split(",")
        assert first[0] == "19013"
        assert first[1] == "1"
        # constant draws decode the direct count exactly
        assert first[4] == "1200.0"
        assert first[7] == "1200.0"

    def test_shape_mismatch(self, tmp_path, basic_table_csv):
        log_table = log_transform(load_tabulation(basic_table_csv))
        with pytest.raises(ShapeError):
            write_prediction_csv(
                tmp_path / "x.csv", log_table, predict_summaries(np.zeros((2, 3)))
            )
