"""Aggregate tables and plot-ready CSV data from transit records."""
from __future__ import annotations

import csv
from collections import defaultdict

import numpy as np

from .powerplant import AircraftConfig, power_table
from .units import isa_density

STATS_COLUMNS = ("n_aircraft", "transits", "mean_pct", "median_pct", "p90_pct", "p95_pct", "max_pct")
FRACTION_COLUMNS = ("n_aircraft", "transits", "in_conflict_fraction", "conflict_free_fraction")
HIST_COLUMNS = ("n_aircraft", "bin_lo", "bin_hi", "count")
SUMMARY_COLUMNS = ("n_aircraft", "run", "los_count", "nmac_count", "median_overhead")
POWER_COLUMNS = ("speed_kt", "induced_kw", "profile_kw", "parasite_kw", "hotel_kw", "total_kw",
                 "energy_per_nm_kwh")


def percentile(values, q):
    """Linear interpolation between order statistics (q in percent)."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("percentile of empty data")
    return float(np.percentile(v, q, method="linear"))


def _by_density(records, include_incomplete=False):
    groups = defaultdict(list)
    for r in records:
        if include_incomplete or not r.incomplete:
            groups[r.n_aircraft].append(r)
    return dict(sorted(groups.items()))


def overhead_stats(records) -> list[tuple]:
    """Per density: transit count and mean/median/P90/P95/max of delta_E in percent.
    Incomplete transits are excluded."""
    rows = []
    for n, group in _by_density(records).items():
        d = np.array([r.delta_e for r in group]) * 100.0
        rows.append((n, d.size, float(d.mean()), percentile(d, 50), percentile(d, 90),
                     percentile(d, 95), float(d.max())))
    if not rows:
        raise ValueError("no complete transits to summarize")
    return rows


def conflict_fractions(records) -> list[tuple]:
    rows = []
    for n, group in _by_density(records, include_incomplete=True).items():
        f = float(np.mean([r.started_in_conflict for r in group]))
        rows.append((n, len(group), f, 1.0 - f))
    return rows


def overhead_histogram(records, bins: int = 40, floor: float = 1e-5) -> list[tuple]:
    """Counts of delta_E on log-spaced bins per density.

    Values at or below ``floor`` (conflict-free transits) go into a first
    row with ``bin_lo = 0``.
    """
    groups = _by_density(records)
    all_d = np.array([r.delta_e for g in groups.values() for r in g])
    pos = all_d[all_d > floor]
    hi = float(pos.max()) if pos.size else floor * 10.0
    edges = np.logspace(np.log10(floor), np.log10(hi), bins + 1)
    edges[-1] = np.nextafter(hi, np.inf)
    rows = []
    for n, group in groups.items():
        d = np.array([r.delta_e for r in group])
        rows.append((n, 0.0, floor, int(np.count_nonzero(d <= floor))))
        counts, _ = np.histogram(d[d > floor], bins=edges)
        rows += [(n, float(edges[k]), float(edges[k + 1]), int(c)) for k, c in enumerate(counts)]
    return rows


def run_summary(results) -> list[tuple]:
    rows = []
    for r in results:
        d = r.complete_overheads()
        med = float(np.median(d)) if d.size else float("nan")
        rows.append((r.n_aircraft, r.run, r.los_count, r.nmac_count, med))
    return rows


def power_curve(aircraft: AircraftConfig | None = None, speeds_kt=None) -> list[tuple]:
    """Power components and energy per nautical mile across the speed envelope."""
    aircraft = aircraft or AircraftConfig()
    rho = isa_density(aircraft.cruise_altitude)
    table = power_table(aircraft, rho, speeds_kt)
    # kW / kt = kWh per nm
    return [(*row, row[5] / row[0]) for row in table.tolist()]


def _cell(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.9g}"


def write_csv(path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(x) for x in row])
