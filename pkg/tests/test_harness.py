import math

import numpy as np
import pytest

from skewt.errors import DomainError
from skewt.harness import (
    D_BINS,
    D_EDGES,
    MISSING,
    ComparisonRecord,
    ExperimentConfig,
    bin_index,
    d_tables,
    design_matrix,
    format_table,
    generate_sample,
    records_from_csv,
    records_to_csv,
    replicate_seed,
    run_experiment,
    table_to_csv,
    timing_table,
)

SMALL = dict(lambdas=(2.0,), nus=(3.0,), ns=(40, 60), replicates=3, seed=7)


@pytest.fixture(scope="module")
def small_records():
    return run_experiment(ExperimentConfig(**SMALL))


def test_config_validation():
    with pytest.raises(DomainError):
        ExperimentConfig(family="nope")
    with pytest.raises(DomainError):
        ExperimentConfig(replicates=0)
    with pytest.raises(DomainError):
        ExperimentConfig(methods=("M1",))
    cfg = ExperimentConfig(methods=("M3", "M0"))
    assert cfg.methods == ("M0", "M3")
    cells = ExperimentConfig(family="bivariate").cells()
    assert cells and all(n != 50 for _, _, n in cells)
    assert len(ExperimentConfig().cells()) == 36


def test_designs():
    assert design_matrix("simple", 10) is None
    for case, p in (("A", 3), ("B", 3), ("C", 4)):
        X = design_matrix(f"regression-{case}", 25)
        assert X.shape == (25, p) and np.all(np.isfinite(X))
        np.testing.assert_array_equal(X[:, 1], np.linspace(-1, 1, 25))
    y, X = generate_sample("bivariate", 2.0, 8.0, 30, np.random.default_rng(0))
    assert y.shape == (30, 2) and X is None


def test_seed_independent_of_order():
    a = replicate_seed(1, "simple", 2.0, 3.0, 50, 4).generate_state(4)
    b = replicate_seed(1, "simple", 2.0, 3.0, 50, 4).generate_state(4)
    c = replicate_seed(1, "simple", 2.0, 3.0, 50, 5).generate_state(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_records_and_determinism(small_records):
    again = run_experiment(ExperimentConfig(**SMALL))
    assert len(small_records) == 6
    for r, s in zip(small_records, again):
        assert r.loglik == s.loglik
        assert r.D("M2", "M0") == r.loglik["M2"] - r.loglik["M0"]
        assert set(r.times) == {"t0", "t1", "t2", "t3"}
        # t2 includes the initialization time t1
        assert r.times["t2"] >= r.times["t1"]


@pytest.mark.slow
def test_serial_and_parallel_agree(small_records):
    par = run_experiment(ExperimentConfig(**SMALL), jobs=2)
    assert [r.loglik for r in par] == [r.loglik for r in small_records]


def test_csv_roundtrip(small_records):
    text = records_to_csv(small_records)
    back = records_from_csv(text)
    assert records_to_csv(back) == text
    # aggregation depends on the persisted records only
    a = [table_to_csv(t) for t in d_tables(small_records)]
    b = [table_to_csv(t) for t in d_tables(back)]
    assert a == b


def test_bins():
    assert bin_index(-20.0) == 0
    assert bin_index(-19.9) == 1
    assert bin_index(0.0) == 3
    assert bin_index(1e-12) == 4
    assert bin_index(20.0) == 6 and bin_index(21.0) == 7
    assert bin_index(math.nan) is None
    assert len(D_BINS) == len(D_EDGES) + 1
    assert D_BINS[0] == "(-inf,-20]" and D_BINS[-1] == "(20,inf]"


def test_table_row_sums(small_records):
    tabs = d_tables(small_records)
    assert [t.title for t in tabs] == [
        "D_20 x n", "D_20 x nu", "D_23 x n", "D_23 x nu", "D_30 x n", "D_30 x nu",
    ]
    for t in tabs:
        assert t.columns[-1] == MISSING
        per_row = t.counts.sum(axis=1)
        if t.row_name == "n":
            assert list(per_row) == [3, 3]
        else:
            assert list(per_row) == [6]
    tt = timing_table(small_records)
    assert tt.rows == ["t0", "t1", "t2", "t3", "t2-t0", "t2-t3", "t3-t0"]
    assert np.all(tt.counts.sum(axis=1) == 6)
    text = format_table(tabs[0])
    assert text.splitlines()[0] == "D_20 x n" and text.splitlines()[-1].lstrip().startswith("total")


def test_missing_values_counted():
    r = ComparisonRecord("simple", 0.0, 1.0, 50, 0, loglik={"M2": -10.0}, errors={"M0": "NumericalError: x"})
    tabs = d_tables([r])
    assert tabs[0].counts[0, -1] == 1


def test_m2_only_has_no_d_tables():
    recs = run_experiment(ExperimentConfig(lambdas=(0.0,), nus=(5.0,), ns=(30,), replicates=2, methods=("M2",)))
    assert d_tables(recs) == []
    tt = timing_table(recs)
    assert tt.rows == ["t1", "t2"]
