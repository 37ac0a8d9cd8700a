import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftbench.data import (
    BatchPlan,
    Schema,
    encode_categoricals,
    load_dataset,
    load_domains,
    make_batches,
    standardize,
    write_dataset,
)
from driftbench.errors import (
    DegenerateClassError,
    EmptyInputError,
    ParseError,
    SchemaError,
    VocabularyError,
)
from synth import SCHEMA, make_dataset, schema


def _write(tmp_path, rows, header="x1,x2,x3,c,y,t"):
    path = tmp_path / "d.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def test_label_delay_one(tmp_path):
    rows = [f"0,0,0,a,0,{t}" for t in (0, 1, 2.5, 7)]
    ds = load_dataset(_write(tmp_path, rows), schema(), label_delay=1)
    np.testing.assert_array_equal(ds.label_time, ds.event_time + 1)


def test_zero_delay(tmp_path):
    ds = load_dataset(_write(tmp_path, ["0,0,0,a,0,3", "0,0,0,b,1,1"]), schema(), label_delay=0)
    np.testing.assert_array_equal(ds.label_time, ds.event_time)


def test_sorted_by_event_time(tmp_path):
    ds = load_dataset(_write(tmp_path, ["1,0,0,a,0,2.0", "2,0,0,a,0,0.5", "3,0,0,a,0,1.0"]), schema())
    assert list(ds.event_time) == [0.5, 1.0, 2.0]
    assert list(ds.numeric[:, 0]) == [2, 3, 1]
    assert list(ds.row_id) == [1, 2, 0]


def test_missing_column_named(tmp_path):
    with pytest.raises(SchemaError, match="x3"):
        load_dataset(_write(tmp_path, ["0,0,a,0,1"], header="x1,x2,c,y,t"), schema())


def test_parse_error_has_row(tmp_path):
    with pytest.raises(ParseError) as exc:
        load_dataset(_write(tmp_path, ["0,0,0,a,0,1", "0,oops,0,a,0,1"]), schema())
    assert exc.value.row == 1


def test_unknown_category(tmp_path):
    with pytest.raises(VocabularyError):
        load_dataset(_write(tmp_path, ["0,0,0,z,0,1"]), schema())


def test_open_vocabulary_first_seen(tmp_path):
    d = json.loads(json.dumps(SCHEMA))
    d["features"][3]["vocabulary"] = []
    ds = load_dataset(_write(tmp_path, ["0,0,0,q,0,1", "0,0,0,p,0,2", "0,0,0,q,0,3"]), Schema.from_dict(d))
    assert ds.schema.feature("c").vocabulary == ("q", "p")
    assert list(ds.codes[:, 0]) == [0, 1, 0]


def test_round_trip(tmp_path):
    ds = make_dataset(50, seed=3)
    write_dataset(ds, tmp_path / "rt.csv")
    back = load_domains(tmp_path / "rt.csv", ds.schema)[0]
    np.testing.assert_array_equal(back.numeric, ds.numeric)
    np.testing.assert_array_equal(back.codes, ds.codes)
    np.testing.assert_array_equal(back.labels, ds.labels)
    np.testing.assert_array_equal(back.label_time, ds.label_time)
    np.testing.assert_array_equal(back.row_id, ds.row_id)


def test_dataset_is_immutable():
    ds = make_dataset(10)
    with pytest.raises(ValueError):
        ds.numeric[0, 0] = 1.0


def _single_feature(values):
    s = Schema.from_dict({"features": [{"name": "v", "kind": "numerical"}], "label_column": "y", "event_time_column": "t"})
    from driftbench.data import Dataset
    n = len(values)
    return Dataset(s, np.array(values, float).reshape(n, 1), np.empty((n, 0)), np.zeros(n), np.zeros(n), np.zeros(n), np.arange(n))


def test_standardize_examples():
    assert list(standardize(_single_feature([1, 3])).numeric[:, 0]) == [-1.0, 1.0]
    assert list(standardize(_single_feature([5, 5, 5])).numeric[:, 0]) == [0.0, 0.0, 0.0]
    z = standardize(_single_feature([0.3, -1.2, 2.2, 0.7])).numeric[:, 0]
    np.testing.assert_allclose(standardize(_single_feature(z)).numeric[:, 0], z, atol=1e-9)


def test_standardize_records_stats():
    out = standardize(_single_feature([1, 3]))
    assert out.standardization_stats.mean[0] == 2.0
    assert out.standardization_stats.std[0] == 1.0


def test_standardize_empty():
    with pytest.raises(EmptyInputError):
        standardize(_single_feature([]))


def _cat_schema(vocab):
    return Schema.from_dict({
        "features": [{"name": "k", "kind": "categorical", "vocabulary": vocab}],
        "label_column": "y", "event_time_column": "t",
    })


def test_encode_examples():
    assert encode_categoricals({"k": ["A"]}, _cat_schema(["A", "B", "C"]))[0, 0] == 0
    assert encode_categoricals({"k": ["A"]}, _cat_schema(["A"]))[0, 0] == 0
    assert list(encode_categoricals({"k": ["B", "A", "B"]}, _cat_schema(["A", "B"]))[:, 0]) == [1, 0, 1]
    with pytest.raises(VocabularyError):
        encode_categoricals({"k": ["D"]}, _cat_schema(["A", "B"]))


def test_batches_exact_positive_count():
    labels = np.array([1] * 30 + [0] * 300)
    for batch in make_batches(labels, BatchPlan(batch_size=100, positive_ratio=0.10), rng_seed=1, n_batches=20):
        assert len(batch) == 100
        assert labels[batch].sum() == 10


def test_batches_single_positive_repeats():
    labels = np.array([0] * 50 + [1] + [0] * 50)
    batch = next(make_batches(labels, BatchPlan(batch_size=20, positive_ratio=0.10), rng_seed=0))
    assert list(batch).count(50) == 2


def test_batches_deterministic():
    labels = np.array([1, 0] * 40)
    plan = BatchPlan(batch_size=16)
    a = list(make_batches(labels, plan, 5, n_batches=5))
    b = list(make_batches(labels, plan, 5, n_batches=5))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_batches_degenerate():
    with pytest.raises(DegenerateClassError):
        next(make_batches(np.zeros(10), BatchPlan(), 0))


@given(st.integers(1, 500), st.floats(0.01, 0.99))
def test_positive_count_rounds_half_up(size, ratio):
    k = BatchPlan(batch_size=size, positive_ratio=ratio).n_positive
    assert 1 <= k <= size
    assert abs(k - ratio * size) <= 0.5 + 1e-9 or k == 1


@settings(max_examples=30)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=40))
def test_standardize_moments(values):
    z = standardize(_single_feature(values)).numeric[:, 0]
    if np.std(values) > 1e-6 * max(1.0, np.max(np.abs(values))):
        assert abs(z.mean()) < 1e-6
        assert abs(z.std() - 1) < 1e-6
