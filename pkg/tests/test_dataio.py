import math
from dataclasses import replace

import numpy as np
import pytest

from edgeboost import dataio, synth
from edgeboost.dataio import (
    CleaningRules,
    Schema,
    clean,
    impute,
    load_csv,
    load_schema,
    save_schema,
    split,
    write_csv,
)
from edgeboost.errors import DataError

HEADER = "timestamp,va,vb,vc,ia,ib,ic,pf,p_set_prev,q_set_prev,p,q\n"


def row(ts, va=220.0, p=5.0, q=1.0):
    return f"{ts},{va},221.0,219.5,10.0,10.1,9.9,0.98,4.9,1.1,{p},{q}\n"


@pytest.fixture
def schema():
    return Schema(capacity=15.0, inverter="inv1")


def write(tmp_path, text, name="m.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestSchema:
    def test_json_round_trip(self, tmp_path, schema):
        path = tmp_path / "schema.json"
        save_schema(schema, path)
        assert load_schema(path) == schema

    def test_targets_cannot_be_features(self):
        with pytest.raises(DataError, match="cannot be features"):
            Schema(capacity=1.0, features=("va", "p"))

    def test_roles_required(self):
        with pytest.raises(DataError, match="active"):
            Schema.from_dict({"columns": {"va": "feature", "q": "reactive"}, "capacity": 1})
        with pytest.raises(DataError, match="unknown role"):
            Schema.from_dict({"columns": {"va": "label"}, "capacity": 1})

    def test_ignored_columns_are_skipped(self):
        s = Schema.from_dict({"columns": {"va": "feature", "note": "ignore", "p": "active",
                                          "q": "reactive"}, "capacity": 2.0})
        assert s.features == ("va",)

    def test_capacity_positive(self):
        with pytest.raises(DataError):
            Schema(capacity=0.0)

    def test_unknown_target(self, schema):
        with pytest.raises(DataError):
            schema.target_column("apparent")


class TestLoad:
    def test_four_rows(self, tmp_path, schema):
        text = HEADER + "".join(row(f"2021-06-01T00:{m:02d}:00") for m in (0, 15, 30, 45))
        ds = load_csv(write(tmp_path, text), schema)
        assert len(ds) == 4
        assert ds.feature_matrix().shape == (4, 10)
        assert list(ds.columns["interval_of_day"]) == [0.0, 1.0, 2.0, 3.0]
        assert list(ds.lines) == [2, 3, 4, 5]
        rec = ds.record(0)
        assert (rec.va, rec.p, rec.q) == (220.0, 5.0, 1.0)

    def test_sorted_by_time(self, tmp_path, schema):
        text = HEADER + row("2021-06-01T00:30:00", p=3.0) + row("2021-06-01T00:15:00", p=2.0)
        ds = load_csv(write(tmp_path, text), schema)
        assert list(ds.target_vector()) == [2.0, 3.0]
        assert list(ds.lines) == [3, 2]

    def test_duplicate_timestamp_names_line(self, tmp_path, schema):
        text = HEADER + row("2021-06-01T00:00:00") + row("2021-06-01T00:15:00") \
            + row("2021-06-01T00:00:00")
        with pytest.raises(DataError, match="line 4"):
            load_csv(write(tmp_path, text), schema)

    def test_missing_columns(self, tmp_path, schema):
        path = write(tmp_path, "timestamp,va,p,q\n2021-06-01T00:00:00,1,2,3\n")
        with pytest.raises(DataError, match="missing mandatory columns"):
            load_csv(path, schema)

    def test_unparseable_rows_reported(self, tmp_path, schema):
        text = HEADER + row("2021-06-01T00:00:00") + row("yesterday") + row("2021-06-01T00:30:00", p="x")
        with pytest.raises(DataError, match=r"2 unparseable rows: line 3.*line 4"):
            load_csv(write(tmp_path, text), schema)

    def test_blank_cells_are_missing(self, tmp_path, schema):
        text = HEADER + row("2021-06-01T00:00:00", va="")
        ds = load_csv(write(tmp_path, text), schema)
        assert math.isnan(ds.columns["va"][0])
        assert ds.matrices()[0].shape == (0, 10)

    def test_features_exclude_targets(self, tmp_path, schema):
        text = HEADER + row("2021-06-01T00:00:00", p=7.0, q=-3.0)
        ds = load_csv(write(tmp_path, text), schema)
        X = ds.feature_matrix()
        assert 7.0 not in X and -3.0 not in X
        assert ds.with_target("reactive").target_vector()[0] == -3.0

    def test_month_fixture(self, month_files):
        data, schema_path = month_files
        ds = load_csv(data, load_schema(schema_path))
        assert len(ds) == 2880
        assert np.all(np.diff(ds.timestamps.astype(np.int64)) > 0)

    def test_write_round_trip(self, tmp_path, synthetic_month):
        path = tmp_path / "again.csv"
        write_csv(synthetic_month, path)
        back = load_csv(path, synthetic_month.schema)
        assert np.array_equal(back.timestamps, synthetic_month.timestamps)
        for name, col in synthetic_month.columns.items():
            assert np.array_equal(back.columns[name], col, equal_nan=True), name


class TestClean:
    def test_out_of_range_voltage(self, tmp_path, schema):
        text = HEADER + row("2021-06-01T00:00:00") + row("2021-06-01T00:15:00", va=999.0)
        ds = load_csv(write(tmp_path, text), schema)
        cleaned, log = clean(ds)
        assert math.isnan(cleaned.columns["va"][1])
        assert len(log) == 1
        assert (log[0].line, log[0].column, log[0].value) == (3, "va", 999.0)
        assert "line 3" in str(log[0])

    def test_empty_rows_dropped(self, tmp_path, schema):
        text = HEADER + row("2021-06-01T00:00:00") + "2021-06-01T00:15:00" + "," * 11 + "\n"
        ds = load_csv(write(tmp_path, text), schema)
        cleaned, log = clean(ds)
        assert len(cleaned) == 1
        assert "dropped" in log[-1].action

    def test_corrupted_month(self, synthetic_month):
        dirty = synth.corrupt(synthetic_month, fraction=0.05, seed=3)
        cleaned, log = clean(dirty)
        assert log
        rules = CleaningRules.defaults(cleaned.schema)
        for name, (lo, hi) in rules.bounds.items():
            col = cleaned.columns[name]
            ok = col[~np.isnan(col)]
            assert np.all((ok >= lo) & (ok <= hi)), name
        for name in cleaned.data_columns:
            assert not np.any(np.isinf(cleaned.columns[name]))

    def test_idempotent(self, synthetic_month):
        once, _ = clean(synth.corrupt(synthetic_month, fraction=0.05, seed=4))
        twice, log = clean(once)
        assert log == []
        for name in once.columns:
            assert np.array_equal(once.columns[name], twice.columns[name], equal_nan=True)

    def test_clean_data_untouched(self, synthetic_month):
        _, log = clean(synthetic_month)
        assert log == []


def series(values, step_minutes=15):
    schema = Schema(capacity=100.0, features=("va",))
    n = len(values)
    ts = np.datetime64("2021-06-01T00:00:00") + np.arange(n) * np.timedelta64(step_minutes * 60, "s")
    cols = {"va": np.array(values, dtype=float), "p": np.zeros(n), "q": np.zeros(n)}
    return dataio.Dataset(schema, ts, cols, np.arange(2, n + 2))


class TestImpute:
    def test_midpoint(self):
        out = impute(series([10.0, np.nan, 12.0]))
        assert out.columns["va"][1] == 11.0

    def test_uneven_spacing_is_time_weighted(self):
        ds = series([0.0, np.nan, 30.0])
        ds = ds.take([0, 1, 2])
        ts = ds.timestamps.copy()
        ts[1] = ts[0] + np.timedelta64(600, "s")  # 10 of 30 minutes
        out = impute(dataio.Dataset(ds.schema, ts, ds.columns, ds.lines))
        assert out.columns["va"][1] == pytest.approx(10.0)

    def test_long_gap_left_missing(self):
        values = [1.0] + [np.nan] * 5 + [7.0]
        assert np.isnan(impute(series(values), max_gap=4).columns["va"][1:6]).all()
        filled = impute(series(values), max_gap=5).columns["va"]
        assert np.allclose(filled, np.arange(1.0, 8.0))

    def test_edge_runs_left_missing(self):
        out = impute(series([np.nan, 1.0, 2.0, np.nan])).columns["va"]
        assert np.isnan(out[0]) and np.isnan(out[3])

    def test_masked_values_between_flanks(self, synthetic_month):
        rng = np.random.default_rng(0)
        va = synthetic_month.columns["va"].copy()
        holes = rng.random(va.size) < 0.03
        holes[[0, -1]] = False
        masked = va.copy()
        masked[holes] = np.nan
        ds = replace(synthetic_month, columns={**synthetic_month.columns, "va": masked})
        out = impute(ds).columns["va"]
        assert np.array_equal(out[~holes], va[~holes])
        for i in np.flatnonzero(holes & ~np.isnan(out)):
            lo = i - 1
            while holes[lo]:
                lo -= 1
            hi = i + 1
            while holes[hi]:
                hi += 1
            assert min(va[lo], va[hi]) <= out[i] <= max(va[lo], va[hi])

    def test_gap_limit_validated(self):
        with pytest.raises(DataError):
            impute(series([1.0, 2.0]), max_gap=0)


class TestSplit:
    @pytest.mark.parametrize("n, n_train", [(10, 8), (5, 4), (2, 1), (2880, 2304)])
    def test_sizes(self, n, n_train):
        train, test = split(series(np.arange(float(n))))
        assert (len(train), len(test)) == (n_train, n - n_train)

    def test_partition_in_order(self):
        ds = series(np.arange(10.0))
        train, test = split(ds, 0.7)
        joined = np.concatenate([train.columns["va"], test.columns["va"]])
        assert np.array_equal(joined, ds.columns["va"])
        assert train.timestamps[-1] < test.timestamps[0]

    def test_invalid(self):
        with pytest.raises(DataError):
            split(series([1.0]))
        with pytest.raises(DataError):
            split(series([1.0, 2.0]), 1.0)
