import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medagents.tabular.table import (
    TableError,
    apply_encoding,
    fit_encoding,
    impute,
    infer_task_type,
    parse_csv,
    read_csv,
    sample_rows,
    table_from_arrays,
    write_csv,
)


def test_numeric_column():
    t = parse_csv("age,name\n30,a\n41,b\n52,c\n")
    assert t.column("age").kind == "numeric" and t.n_rows == 3


def test_yes_no_is_categorical():
    t = parse_csv("x\nyes\nno\nyes\n")
    c = t.column("x")
    assert c.kind == "categorical" and c.categories() == ["no", "yes"]


def test_boolean_and_missing_tokens():
    t = parse_csv("b,v\ntrue,NA\nFALSE,null\ntrue,1.5\n,NaN\n")
    assert t.column("b").kind == "boolean"
    assert t.column("v").n_missing == 3 and t.column("b").n_missing == 1


def test_ragged_row_names_line():
    with pytest.raises(TableError, match="line 3: expected 5 fields"):
        parse_csv("a,b,c,d,e\n1,2,3,4,5\n1,2,3,4\n")


def test_duplicate_header():
    with pytest.raises(TableError, match="duplicate"):
        parse_csv("a,a\n1,2\n")


def test_crlf_and_quoting(tmp_path):
    p = tmp_path / "q.csv"
    p.write_bytes(b'name,n\r\n"Smith, J",1\r\n"say ""hi""",2\r\n')
    t = read_csv(p)
    assert list(t.column("name").values) == ["Smith, J", 'say "hi"']


def test_task_type():
    assert infer_task_type(table_from_arrays({"y": [0, 1, 0, 1]}), "y") == "classification"
    rng = np.random.default_rng(0)
    assert infer_task_type(table_from_arrays({"y": list(rng.normal(size=200))}), "y") == "regression"
    life = table_from_arrays({"Life_expectancy": [71.3, 65.2, 80.1, 77.7, 59.9, 68.4, 73.05, 81.2, 62.5, 70.0, 74.4]})
    assert infer_task_type(life, "Life_expectancy") == "regression"
    with pytest.raises(TableError, match="constant target"):
        infer_task_type(table_from_arrays({"y": [3, 3, 3]}), "y")


def test_impute_examples():
    t = impute(table_from_arrays({"x": [1.0, None, 3.0], "c": ["a", "a", None], "gone": [None, None, None]}))
    assert list(t.column("x").values) == [1.0, 2.0, 3.0]
    assert list(t.column("c").values) == ["a", "a", "a"]
    assert "gone" not in t and any("gone" in w for w in t.warnings)


def test_mode_tie_breaks_lexicographically():
    t = impute(table_from_arrays({"c": ["b", "a", None, "b", "a"]}))
    assert t.column("c").values[2] == "a"


def test_one_hot_sorted_names():
    t = table_from_arrays({"c": ["red", "blue", "red"]})
    m = apply_encoding(t, fit_encoding(t))
    assert m.names == ["c=blue", "c=red"]
    assert m.X.tolist() == [[0, 1], [1, 0], [0, 1]]


def test_ordinal_and_unseen():
    cats = [f"k{i:02d}" for i in range(20)]
    train = table_from_arrays({"c": cats})
    plan = fit_encoding(train)
    assert dict(plan.columns)["c"].action == "ordinal"
    assert apply_encoding(train, plan).X[:, 0].tolist() == list(range(20))
    test = table_from_arrays({"c": ["k03", "green"]})
    m = apply_encoding(test, plan)
    assert m.X[:, 0].tolist() == [3, 20] and len(m.warnings) == 1


def test_target_never_encoded():
    t = table_from_arrays({"c": ["a", "b"], "y": ["p", "q"]})
    assert fit_encoding(t, "y").feature_names() == ["c=a", "c=b"]


def test_sample_rows():
    t = table_from_arrays({"i": list(range(100))})
    assert sample_rows(t, 1000) is t
    a, b = sample_rows(t, 10, 7), sample_rows(t, 10, 7)
    va = a.column("i").values
    assert a.n_rows == 10 and np.array_equal(va, b.column("i").values)
    assert np.all(np.diff(va) > 0)


cell = st.one_of(st.none(), st.floats(-1e6, 1e6, allow_nan=False).map(lambda v: round(v, 3)))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(cell, st.sampled_from(["a", "b", "c", None]), cell), min_size=1, max_size=30))
def test_round_trip_and_impute_invariant(tmp_path_factory, rows):
    data = {"x": [r[0] for r in rows], "k": [r[1] for r in rows], "z": [r[2] for r in rows]}
    t = table_from_arrays(data)
    p = tmp_path_factory.mktemp("rt") / "t.csv"
    write_csv(t, p)
    back = read_csv(p)
    assert back.names == t.names
    assert back.rows_as_text() == t.rows_as_text()
    filled = impute(t)
    for c in filled.columns:
        orig = t.column(c.name)
        keep = ~orig.missing_mask
        if c.kind == "numeric":
            assert np.array_equal(c.values[keep], orig.values[keep])
        else:
            assert list(c.values[keep]) == list(orig.values[keep])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["r", "g", "b", "w", None]), min_size=1, max_size=20),
       st.lists(st.sampled_from(["r", "g", "x", "y", None]), min_size=1, max_size=20),
       st.integers(1, 6))
def test_encoding_width(train_vals, test_vals, threshold):
    train = table_from_arrays({"c": train_vals, "n": list(range(len(train_vals)))})
    plan = fit_encoding(train, cardinality_threshold=threshold)
    test = table_from_arrays({"c": test_vals, "n": list(range(len(test_vals)))})
    if test.column("c").kind != train.column("c").kind:
        return
    m = apply_encoding(test, plan)
    assert m.X.shape == (len(test_vals), plan.width) and len(m.names) == plan.width
    assert not any(math.isinf(v) for v in m.X.ravel())
