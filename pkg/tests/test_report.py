import numpy as np
import pytest

from skyreserve.features import N_FEATURES, TransitRecord
from skyreserve.report import (conflict_fractions, overhead_histogram, overhead_stats, percentile, power_curve,
                               write_csv)


def sort_oracle(v, q):
    s = sorted(v)
    pos = (len(s) - 1) * q / 100.0
    lo = int(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def rec(n, d, conflict=False, incomplete=False):
    return TransitRecord(np.zeros(N_FEATURES), d, n, 0, 0, conflict, incomplete)


def test_percentile_matches_sort_oracle():
    rng = np.random.default_rng(0)
    for size in (1, 2, 7, 100, 1001):
        v = rng.lognormal(size=size)
        for q in (0, 5, 50, 90, 95, 99.5, 100):
            assert abs(percentile(v, q) - sort_oracle(list(v), q)) <= 1e-12 * max(1.0, max(v))
    with pytest.raises(ValueError):
        percentile([], 50)


def test_single_record_stats():
    (row,) = overhead_stats([rec(10, 0.0123)])
    assert row[0] == 10 and row[1] == 1
    assert all(v == pytest.approx(1.23) for v in row[2:])


def test_stats_exclude_incomplete_and_group():
    rows = overhead_stats([rec(30, 0.01), rec(10, 0.02), rec(10, 0.04), rec(10, 9.0, incomplete=True)])
    assert [r[0] for r in rows] == [10, 30]
    assert rows[0][1] == 2 and rows[0][2] == pytest.approx(3.0)


def test_conflict_fractions():
    rows = conflict_fractions([rec(10, 0, True), rec(10, 0), rec(10, 0), rec(10, 0), rec(20, 0, True)])
    assert rows[0] == (10, 4, 0.25, 0.75)
    assert rows[1][3] == 0.0


def test_histogram_counts_everything():
    rng = np.random.default_rng(1)
    recs = [rec(10, float(d)) for d in rng.lognormal(-5, 1, 300)] + [rec(10, 0.0)] * 20
    rows = overhead_histogram(recs, bins=12)
    assert sum(r[3] for r in rows) == 320
    assert rows[0][1:] == (0.0, 1e-5, 20)
    edges = [r[1] for r in rows[1:]]
    assert np.all(np.diff(np.log(edges)) > 0)


def test_power_curve_and_csv(tmp_path):
    rows = power_curve(speeds_kt=[100, 157])
    assert len(rows) == 2 and rows[1][0] == 157
    assert rows[1][6] == pytest.approx(rows[1][5] / 157)
    p = tmp_path / "x.csv"
    write_csv(p, ("a", "b", "c"), [(1, 0.5, "t"), (np.int64(2), np.float64(1 / 3), True)])
    assert p.read_text() == "a,b,c\n1,0.5,t\n2,0.333333333,1\n"
