import hashlib
import math

import numpy as np
import pytest

from skyreserve import deconflict as dc
from skyreserve.features import (CSV_COLUMNS, N_FEATURES, DatasetError, NormalizationStats, TransitRecord,
                                 dataset_arrays, extract_all, extract_features, read_dataset, write_dataset)
from skyreserve.powerplant import AircraftConfig, best_range_speed
from skyreserve.simkit import Agent, ScenarioConfig, Simulation, run_scenario, spawn_scenario
from skyreserve.units import NM, isa_density

AC = AircraftConfig()
RHO = isa_density(AC.cruise_altitude)
VBR = best_range_speed(AC, RHO)


def snapshot_of(agents, n_aircraft=None):
    sc = ScenarioConfig(n_aircraft=max(2, len(agents)))
    sim = Simulation(agents, sc, AC, RHO, VBR)
    snap = sim.step(capture_snapshot=True).snapshot
    if n_aircraft is not None:
        snap.n_aircraft = n_aircraft
    return snap, sc


def agent(i, pos, exit_wp):
    pos, exit_wp = np.asarray(pos, float), np.asarray(exit_wp, float)
    v = (exit_wp - pos) / np.hypot(*(exit_wp - pos)) * VBR
    return Agent(i, dc.KinematicState(pos, v), exit_wp, v.copy())


def test_lone_aircraft_sentinels():
    snap, sc = snapshot_of([agent(0, (-3000, 0), (10 * NM, 0))], n_aircraft=1)
    f = extract_features(0, snap, sc, VBR)
    assert f[0] == pytest.approx(0.0, abs=1e-12)
    assert f[3] == f[4] == f[5] == 0.0
    assert f[6] == f[7] == f[9] == f[10] == 0.0
    assert f[11] == f[12] == 1.0
    assert f[1] == pytest.approx(3000 / (10 * NM))
    assert f[2] == pytest.approx((10 * NM + 3000) / (20 * NM))


def test_congestion_scale():
    snap, sc = snapshot_of([agent(0, (-3000, 0), (10 * NM, 0))], n_aircraft=60)
    assert extract_features(0, snap, sc, VBR)[8] == pytest.approx(60 / (math.pi * 100) * 1000, rel=1e-12)
    assert extract_features(0, snap, sc, VBR)[8] == pytest.approx(191, abs=0.1)


def test_conflict_geometry_features():
    agents = [agent(0, (-6000, 0), (10 * NM, 0)), agent(1, (6000, 0), (-10 * NM, 0)),
              agent(2, (0, 8000), (0, 10 * NM))]
    snap, sc = snapshot_of(agents)
    f0 = extract_features(0, snap, sc, VBR)
    assert f0[12] < 1 and f0[10] > 0 and f0[11] < 1
    # head-on partner resolves clockwise: a right turn is a negative heading change
    assert f0[6] < 0
    assert f0[7] == pytest.approx(np.hypot(*snap.delta_v[0]) / VBR)
    # neighbours of 0 within 5 nm: aircraft 1 (12 km = 6.5 nm) is outside, aircraft 2 (10 km) too
    assert f0[9] == 0.0
    f2 = extract_features(2, snap, sc, VBR)
    assert f2[12] == 1.0 and f2[11] == 1.0 and f2[6] == 0.0


def test_neighbour_conflict_density():
    agents = [agent(0, (-3000, 0), (10 * NM, 0)), agent(1, (3000, 0), (-10 * NM, 0)),
              agent(2, (0, 5000), (0, 10 * NM))]
    snap, sc = snapshot_of(agents)
    f = extract_features(0, snap, sc, VBR)
    # members {0, 1, 2}: one conflicting pair out of three
    assert f[9] == pytest.approx(1 / 3)


def test_feature_ranges_over_runs():
    for n in (10, 40):
        r = run_scenario(ScenarioConfig(n_aircraft=n, seed=4), AC, 0)
        f = r.features
        assert np.all(np.isfinite(f))
        assert np.all((f[:, 1] >= 0) & (f[:, 1] <= 1))
        assert np.all((f[:, 11] >= 0) & (f[:, 11] <= 1))
        assert np.all((f[:, 12] >= 0) & (f[:, 12] <= 1))


def test_extraction_pure_and_no_leakage():
    r = run_scenario(ScenarioConfig(n_aircraft=25, seed=5), AC, 1)
    sc = ScenarioConfig(n_aircraft=25, seed=5)
    agents = spawn_scenario(sc, np.random.default_rng([5, 25, 1]), VBR)
    agents_snap = Simulation(agents, sc, AC, RHO, VBR).step(capture_snapshot=True).snapshot

    def digest(s):
        h = hashlib.sha256()
        for a in (s.positions, s.velocities, s.exits, s.conflict, s.t_cpa, s.d_cpa, s.delta_v,
                  s.commanded_velocity):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    before = digest(agents_snap)
    f1 = extract_all(agents_snap, sc, VBR)
    assert digest(agents_snap) == before
    np.testing.assert_array_equal(f1, extract_all(agents_snap, sc, VBR))
    np.testing.assert_array_equal(f1, r.features)


def test_normalization_properties():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, (500, N_FEATURES))
    st = NormalizationStats.fit(x)
    np.testing.assert_allclose(st.apply(x).mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(st.apply(st.mean), 0.0, atol=1e-12)
    np.testing.assert_allclose(st.invert(st.apply(x[:5])), x[:5], rtol=1e-9)
    again = NormalizationStats.from_dict(st.to_dict())
    np.testing.assert_array_equal(again.apply(x), st.apply(x))
    with pytest.raises(ValueError):
        NormalizationStats.fit(x[:1])


def test_zero_variance_feature_dropped():
    x = np.random.default_rng(1).normal(size=(50, N_FEATURES))
    x[:, 0] = 0.0
    with pytest.warns(UserWarning, match="speed_dev"):
        st = NormalizationStats.fit(x)
    assert st.dim == N_FEATURES - 1
    assert st.apply(x).shape == (50, N_FEATURES - 1)


def random_records(rng, n):
    return [TransitRecord(rng.normal(size=N_FEATURES) * 10 ** rng.uniform(-6, 3), float(rng.uniform(-0.1, 2)),
                          int(rng.integers(2, 61)), int(rng.integers(0, 200)), k, bool(rng.random() < .5),
                          bool(rng.random() < .1)) for k in range(n)]


def test_dataset_round_trip(tmp_path):
    recs = random_records(np.random.default_rng(2), 1000)
    path = tmp_path / "d.csv"
    write_dataset(recs, path)
    back = read_dataset(path)
    assert len(back) == 1000
    for a, b in zip(recs, back):
        np.testing.assert_allclose(b.features, a.features, rtol=1e-8)
        assert b.delta_e == pytest.approx(a.delta_e, rel=1e-8)
        assert (a.n_aircraft, a.run, a.agent, a.started_in_conflict, a.incomplete) == \
            (b.n_aircraft, b.run, b.agent, b.started_in_conflict, b.incomplete)


def test_empty_dataset(tmp_path):
    path = tmp_path / "e.csv"
    write_dataset([], path)
    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"
    assert read_dataset(path) == []
    x, y, meta = dataset_arrays([])
    assert x.shape == (0, N_FEATURES)


def test_malformed_rows(tmp_path):
    path = tmp_path / "bad.csv"
    write_dataset(random_records(np.random.default_rng(3), 3), path)
    lines = path.read_text().splitlines()
    lines[2] = lines[2].rsplit(",", 1)[0]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match=r":3:"):
        read_dataset(path)
    path.write_text("a,b\n")
    with pytest.raises(DatasetError, match=r":1:"):
        read_dataset(path)


def test_dataset_arrays_excludes_incomplete():
    recs = random_records(np.random.default_rng(4), 200)
    x, y, meta = dataset_arrays(recs)
    assert x.shape[0] == sum(not r.incomplete for r in recs)
    x_all, _, _ = dataset_arrays(recs, include_incomplete=True)
    assert x_all.shape[0] == 200
