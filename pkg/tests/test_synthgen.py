import numpy as np
import pandas as pd
import pytest

from macsim import synthgen
from macsim.synthgen import ConfigError, ErrorSpec


def test_population_schema(small_population):
    y, x, _, _ = small_population
    assert list(y.columns) == synthgen.FIELDS
    assert len(y) == 4000 and len(x) == 500
    assert y["recid"].is_unique
    assert (y["sa1"].value_counts() == 40).all()
    assert (y.groupby("mb").size() == 8).all()
    assert ((y["mb"] // 100) == y["sa1"]).all()
    assert (y["sex"].value_counts() == 2000).all()
    assert (y["cob"] == "1101").sum() == 3000
    assert y["bday"].between(1, 366).all()
    assert y["byear"].between(1955, 2009).all()
    assert y["eye"].between(1, 5).all()
    pd.testing.assert_frame_equal(x, y.iloc[:500].reset_index(drop=True))


def test_population_deterministic():
    a = synthgen.generate_population(800, 0.1, seed=3)
    b = synthgen.generate_population(800, 0.1, seed=3)
    c = synthgen.generate_population(800, 0.1, seed=4)
    pd.testing.assert_frame_equal(a[0], b[0])
    assert not a[0].equals(c[0])


@pytest.mark.parametrize("n_y, scale", [(1000, 1.0), (4000, 0.013), (3980, 0.1), (4020, 0.5)])
def test_population_rejects_bad_sizes(n_y, scale):
    with pytest.raises(ConfigError):
        synthgen.generate_population(n_y, scale)


def test_error_counts_exact(small_population):
    _, x, x2, truth = small_population
    n = len(x)
    counts = ErrorSpec().counts(n)
    assert int(x2["bday"].isna().sum()) == counts["bday_missing"]
    assert int(x2["eye"].isna().sum()) == counts["eye_missing"]
    assert int((x2["sex"] != x["sex"]).sum()) == counts["sex_flip"]
    assert int((x2["sa1"] != x["sa1"]).sum()) == counts["sa1_adjacent"]
    diff = (x2["byear"] - x["byear"]).value_counts().to_dict()
    assert diff.get(-1, 0) == counts["byear_minus1"]
    assert diff.get(1, 0) == counts["byear_plus1"]
    bday_changed = (x2["bday"].notna() & (x2["bday"] != x["bday"])).sum()
    assert int(bday_changed) == counts["bday_altered"]


def test_perturbed_mb_stays_inside_sa1(small_population):
    _, _, x2, _ = small_population
    assert ((x2["mb"] // 100) == x2["sa1"]).all()
    assert (x2["mb"] % 100).between(1, 5).all()


def test_sa1_moves_are_adjacent(small_population):
    _, x, x2, _ = small_population
    moved = x2["sa1"] != x["sa1"]
    assert ((x2["sa1"][moved] - x["sa1"][moved]).abs() == 1).all()


def test_truth_sidecar_restores_originals(small_population):
    _, x, x2, truth = small_population
    assert set(truth["field"]) <= set(synthgen.ANALYSIS_FIELDS)
    restored = synthgen.original_values(x2, truth)
    pd.testing.assert_frame_equal(restored, x)
    assert len(truth) == int(sum((x[f].isna() != x2[f].isna()).sum()
                                 + (x[f] != x2[f]).fillna(False).sum()
                                 for f in synthgen.ANALYSIS_FIELDS))


def test_no_error_spec_is_identity(small_population):
    _, x, _, _ = small_population
    x2, truth = synthgen.inject_errors(x, ErrorSpec.none(seed=1))
    pd.testing.assert_frame_equal(x2, x)
    assert truth.empty


def test_error_spec_rejects_rates():
    with pytest.raises(ConfigError):
        ErrorSpec(sex_flip=1.5)


def test_infeasible_rule_named():
    y, x = synthgen.generate_population(800, 0.1, seed=1)
    with pytest.raises(ConfigError, match="eye_alternative"):
        synthgen.inject_errors(x, ErrorSpec(eye_missing=0.6, eye_alternative=0.6))


def test_files_round_trip(tmp_path):
    y, x2, truth = synthgen.generate_files(tmp_path, 800, 0.1, seed=2)
    assert synthgen.read_file(tmp_path / "y.csv").equals(y)
    pd.testing.assert_frame_equal(synthgen.read_file(tmp_path / "x.csv"), x2)
    back = synthgen.read_truth(tmp_path / "truth.csv")
    pd.testing.assert_frame_equal(back, truth.reset_index(drop=True))
    text = (tmp_path / "x.csv").read_text()
    assert ",," in text or ",\n" in text  # missing written as empty


def test_country_table():
    t = synthgen.country_table()
    assert synthgen.AUSTRALIA not in set(t["code"])
    assert np.isclose(t["proportion"].sum(), 1.0)
