"""Data model: invariants, subsetting, CSV interchange, seed mixing."""

import numpy as np
import pytest

from misscate import (
    ConfigError,
    Dataset,
    Mechanism,
    MissingnessAssumption,
    Unit,
    VariableKind,
    as_columns,
    complete_cases,
    dataset_from_columns,
    mix_seed,
    read_dataset_csv,
    subset_observed_xt,
    validate_dataset,
    write_dataset_csv,
)

B = VariableKind.BINARY
C = VariableKind.CONTINUOUS


def tiny() -> Dataset:
    units = (
        Unit((1.0,), 1.0, 0.0, (1,), 1, 1),
        Unit((None,), 0.0, 1.0, (0,), 1, 1),
        Unit((0.0,), None, 1.0, (1,), 0, 1),
        Unit((1.0,), 1.0, None, (1,), 1, 0),
        Unit((None,), None, None, (0,), 0, 0),
    )
    return Dataset(units, (B,), B, B)


def test_validate_accepts_consistent_rows():
    assert validate_dataset(tiny()) == []


def test_validate_flags_presence_mismatch():
    d = Dataset((Unit((1.0,), None, 0.0, (1,), 1, 1),), (B,), B, B)
    bad = validate_dataset(d)
    assert len(bad) == 1
    assert bad[0].row == 0
    assert "t presence" in bad[0].rule


def test_validate_flags_value_under_zero_indicator():
    d = Dataset((Unit((1.0,), 0.0, 0.5, (1,), 1, 0),), (B,), B, C)
    bad = validate_dataset(d)
    assert any("y presence" in v.rule for v in bad)


def test_validate_flags_nonbinary_value():
    d = Dataset((Unit((2.0,), 1.0, 0.0, (1,), 1, 1),), (B,), B, B)
    assert any("binary" in v.rule for v in validate_dataset(d))


def test_validate_flags_nonfinite_continuous():
    d = Dataset((Unit((np.inf,), 1.0, 0.0, (1,), 1, 1),), (C,), B, B)
    assert any("continuous" in v.rule for v in validate_dataset(d))


def test_validate_flags_bad_indicator_and_dimension():
    d = Dataset((Unit((1.0,), 1.0, 0.0, (2,), 1, 1),), (B,), B, B)
    assert any("rx1" in v.rule for v in validate_dataset(d))
    d2 = Dataset((Unit((1.0, 0.0), 1.0, 0.0, (1, 1), 1, 1),), (B,), B, B)
    assert any("dimension" in v.rule for v in validate_dataset(d2))


def test_subset_observed_xt_keeps_outcome_missing_rows():
    d = subset_observed_xt(tiny())
    assert d.n == 2
    assert all(u.rt == 1 and u.rx == (1,) for u in d.units)
    # Original order preserved.
    assert d.units[0].y == 0.0 and d.units[1].y is None


def test_complete_cases_and_idempotence():
    d = complete_cases(tiny())
    assert d.n == 1
    assert complete_cases(d) == d
    assert subset_observed_xt(subset_observed_xt(tiny())) == subset_observed_xt(tiny())


def test_take_repeats_and_reorders():
    d = tiny()
    out = d.take([4, 0, 0])
    assert out.n == 3
    assert out.units[0] == d.units[4]
    assert out.units[1] == out.units[2] == d.units[0]
    assert out.x_kinds == d.x_kinds


def test_as_columns_masks_with_nan():
    cols = as_columns(tiny())
    assert cols.x.shape == (5, 1)
    assert np.isnan(cols.x[1, 0]) and cols.rx[1, 0] == 0
    assert np.isnan(cols.t[2]) and cols.rt[2] == 0
    assert cols.y[2] == 1.0 and cols.ry[2] == 1


def test_dataset_from_columns_round_trip():
    d = tiny()
    cols = as_columns(d)
    back = dataset_from_columns(
        cols.x, cols.t, cols.y, cols.rx, cols.rt, cols.ry, (B,), B, B
    )
    assert back == d


def test_dataset_from_columns_drops_masked_values():
    d = dataset_from_columns(
        np.array([[3.0], [7.0]]),
        np.array([1.0, 0.0]),
        np.array([0.5, 0.5]),
        np.array([[1], [0]]),
        np.array([1, 1]),
        np.array([0, 1]),
        (C,),
        B,
        C,
    )
    assert d.units[1].x == (None,)
    assert d.units[0].y is None and d.units[0].ry == 0


def test_csv_round_trip(tmp_path):
    d = tiny()
    path = tmp_path / "d.csv"
    write_dataset_csv(d, path)
    back = read_dataset_csv(path, (B,), B, B)
    assert back == d


def test_csv_round_trip_preserves_floats(tmp_path):
    x = np.array([[0.1 + 0.2], [1.0 / 3.0]])
    d = dataset_from_columns(
        x, np.array([0.0, 1.0]), np.array([2.5, -1.0]),
        np.ones((2, 1)), np.ones(2), np.ones(2), (C,), B, C,
    )
    path = tmp_path / "d.csv"
    write_dataset_csv(d, path)
    back = read_dataset_csv(path, (C,), B, C)
    assert back.units[0].x[0] == x[0, 0]
    assert back.units[1].x[0] == x[1, 0]


@pytest.mark.parametrize(
    "body",
    [
        "x1,t,y,rx1,rt,ry\n1.0,1,0,1,,1\n",          # empty indicator
        "x1,t,y,rx1,rt,ry\n1.0,1,0,1,2,1\n",          # indicator not 0/1
        "x1,t,y,rx1,rt,ry\n,1,0,1,1,1\n",             # value empty, rx=1
        "x1,t,y,rx1,rt,ry\n1.0,1,0,0,1,1\n",          # value present, rx=0
        "x1,t,y,rx1,rt,ry\nfoo,1,0,1,1,1\n",          # not numeric
        "x1,t,y,rx1,rt,ry\n1.0,1,0,1,1\n",            # short row
        "t,y,x1,rx1,rt,ry\n1.0,1,0,1,1,1\n",          # wrong header order
        "",                                            # empty file
    ],
)
def test_csv_rejects_malformed(tmp_path, body):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(ConfigError):
        read_dataset_csv(path, (B,), B, B)


def test_csv_rejects_kind_violation(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,t,y,rx1,rt,ry\n1.5,1,0,1,1,1\n")
    with pytest.raises(ConfigError, match="invalid rows"):
        read_dataset_csv(path, (B,), B, B)


def test_assumption_identifying_index():
    a = MissingnessAssumption(Mechanism.COVARIATE_INDEPENDENT, 1)
    assert a.identifying_index(3) == 1
    assert MissingnessAssumption(Mechanism.COVARIATE_INDEPENDENT).identifying_index(2) == 0
    with pytest.raises(ConfigError):
        a.identifying_index(1)
    with pytest.raises(ConfigError):
        MissingnessAssumption(Mechanism.TREATMENT_INDEPENDENT, 0)


def test_mechanism_parsing():
    assert Mechanism.from_token(" A2 ") is Mechanism.TREATMENT_INDEPENDENT
    with pytest.raises(ConfigError):
        Mechanism.from_token("a4")


def test_mix_seed_is_stable_and_spreads():
    assert mix_seed(0, 1, 2) == mix_seed(0, 1, 2)
    seen = {mix_seed(0, i) for i in range(1000)}
    assert len(seen) == 1000
    assert mix_seed(0, 1, 2) != mix_seed(0, 2, 1)
    assert mix_seed(1, 0) != mix_seed(0, 1)
