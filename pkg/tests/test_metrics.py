"""Counting metrics against hand fixtures and a brute-force oracle."""

import numpy as np
import pytest

from escounts.metrics import (
    GROUP_LABELS,
    MetricReport,
    compute_metrics,
    grouped_report,
    off_by_n,
)


def test_hand_fixture():
    # two videos: (c=4, pred 5) and (c=10, pred 10)
    rep = compute_metrics([(4, 5.0), (10, 10.0)])
    assert rep.mae == pytest.approx((1 / 4 + 0 / 10) / 2)  # 0.125
    assert rep.rmse == pytest.approx(np.sqrt((1 + 0) / 2))  # sqrt(0.5)
    assert rep.obo == 1.0
    assert rep.obz == 0.5
    assert rep.n == 2


def test_rounding_and_edges():
    # raw error exactly 1 counts for OBO; rounding is half-up
    rep = compute_metrics([(3, 4.0)])
    assert rep.obo == 1.0 and rep.obz == 0.0
    rep = compute_metrics([(3, 3.5)])
    assert rep.obz == 0.0  # 3.5 rounds to 4
    rep = compute_metrics([(4, 3.5)])
    assert rep.obz == 1.0
    rep = compute_metrics([(0, 0.4)])
    assert rep.mae == pytest.approx(0.4)  # zero count normalizes by 1
    assert rep.obz == 1.0
    with pytest.raises(ValueError):
        compute_metrics([])
    with pytest.raises(ValueError):
        compute_metrics([(-1, 0.0)])


def test_report_validation():
    with pytest.raises(ValueError):
        MetricReport(mae=0.1, rmse=0.2, obo=1.2, obz=0.5, n=1)
    with pytest.raises(ValueError):
        MetricReport(mae=0.1, rmse=0.2, obo=0.4, obz=0.6, n=1)
    rep = MetricReport(mae=0.1, rmse=0.2, obo=0.9, obz=0.5, n=7, obn={0: 0.5, 1: 0.9})
    d = rep.as_dict()
    assert d["n"] == 7 and d["obn"] == {"0": 0.5, "1": 0.9}
    assert "obn" not in MetricReport(0.1, 0.2, 0.9, 0.5, 7).as_dict()


def test_oracle_random_instances():
    # brute-force re-derivation per instance, all metrics at once
    rng = np.random.default_rng(11)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        c = rng.integers(0, 21, size=n).astype(float)
        pred = np.maximum(c + rng.normal(0, 2.0, size=n), 0.0)
        pairs = list(zip(c.tolist(), pred.tolist()))
        rep = compute_metrics(pairs)

        mae = sum(abs(a - b) / max(a, 1.0) for a, b in pairs) / n
        rmse = (sum((a - b) ** 2 for a, b in pairs) / n) ** 0.5
        obo = sum(abs(a - b) <= 1.0 for a, b in pairs) / n
        obz = sum(int(np.floor(b + 0.5)) == a for a, b in pairs) / n
        assert rep.mae == pytest.approx(mae, abs=1e-12)
        assert rep.rmse == pytest.approx(rmse, abs=1e-12)
        assert rep.obo == pytest.approx(obo, abs=1e-12)
        assert rep.obz == pytest.approx(obz, abs=1e-12)

        curve = off_by_n(pairs, 4)
        assert curve[0] == pytest.approx(obz, abs=1e-12)
        assert curve[1] == pytest.approx(obo, abs=1e-12)
        for k in range(1, 5):
            ref = sum(abs(a - b) <= k for a, b in pairs) / n
            assert curve[k] == pytest.approx(ref, abs=1e-12)
        assert np.all(np.diff(curve[1:]) >= 0)  # monotone from N=1 on


def test_off_by_n_validation():
    with pytest.raises(ValueError):
        off_by_n([(1, 1.0)], -1)
    curve = off_by_n([(2, 2.0), (5, 9.0)], 0)
    assert curve.shape == (1,)
    assert curve[0] == 0.5


def test_grouped_equal_population():
    # 10 items split into 5 groups of 2 by sorted value, stable on ties
    pairs = [(i, float(i)) for i in range(10)]  # perfect predictions
    values = [9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.0]
    out = grouped_report(pairs, values, 5)
    assert tuple(out) == GROUP_LABELS
    assert all(r.n == 2 for r in out.values())
    # lowest values come first: XS holds pairs 9 and 8 (values 0 and 1)
    assert out["XS"].mae == 0.0
    out3 = grouped_report(pairs, values, 3)
    assert tuple(out3) == ("G1", "G2", "G3")
    assert sum(r.n for r in out3.values()) == 10
    with pytest.raises(ValueError):
        grouped_report(pairs, values, 11)
    with pytest.raises(ValueError):
        grouped_report(pairs, values[:5], 2)


def test_grouped_explicit_bins():
    pairs = [(2, 2.0), (3, 5.0), (8, 8.0), (4, 4.0)]
    values = [10.0, 20.0, 30.0, 25.0]
    bins = {"short": (0.0, 15.0), "long": (15.0, 40.0)}
    out = grouped_report(pairs, values, bins)
    assert out["short"].n == 1 and out["long"].n == 3
    assert out["short"].mae == 0.0
    assert out["long"].obo == pytest.approx(2 / 3)
    # a value outside every bin is an error, not a silent drop
    with pytest.raises(ValueError):
        grouped_report(pairs, [10.0, 20.0, 99.0, 25.0], bins)
    # empty bins are simply absent
    out2 = grouped_report(pairs, values, {"all": (0.0, 50.0), "none": (90.0, 99.0)})
    assert "none" not in out2 and out2["all"].n == 4


def test_grouped_equal_population_is_stable():
    # ties keep original order so reports are reproducible across runs
    pairs = [(1, 1.0), (2, 2.0), (3, 3.0), (4, 4.0)]
    values = [5.0, 5.0, 5.0, 5.0]
    out = grouped_report(pairs, values, 2, labels=("a", "b"))
    assert out["a"].n == 2 and out["b"].n == 2
    # first two pairs land in the first group
    assert out["a"].rmse == 0.0
