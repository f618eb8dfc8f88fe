"""Free-flight sector scenarios stepped with MVP deconfliction.

A run batch-spawns N aircraft inside a circular sector, flies them at the
best-range speed toward exit waypoints on the boundary, and integrates
electrical power along the realized trajectories. Energy overhead is the
per-distance energy relative to constant-speed flight at V_br.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import deconflict as dc
from .deconflict import DetectionParams
from .features import Snapshot, extract_all
from .powerplant import AircraftConfig, best_range_speed, electrical_power
from .units import FT, NM, isa_density


class ScenarioInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    n_aircraft: int = 10
    sector_radius: float = 10.0 * NM
    alpha: float = 0.9 * math.sqrt(math.pi)
    exit_bearing_range: tuple = (math.radians(60.0), math.radians(180.0))
    dt: float = 1.0
    max_sim_time: float | None = None
    seed: int = 42
    runs: int = 1
    detection: DetectionParams = field(default_factory=DetectionParams)
    nmac_threshold: float = 500.0 * FT
    radial_scale: tuple = (0.0, 1.0)
    neighbor_radius: float = 5.0 * NM
    max_resamples: int = 10_000
    tangent_correction: bool = True

    def __post_init__(self):
        if self.n_aircraft < 2:
            raise ValueError("n_aircraft must be >= 2")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.d_min <= 2 * self.nmac_threshold:
            raise ValueError("initial spacing d_min must exceed twice the NMAC threshold")
        lo, hi = self.radial_scale
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("radial_scale must satisfy 0 <= lo < hi <= 1")
        blo, bhi = self.exit_bearing_range
        if not 0.0 <= blo <= bhi <= math.pi:
            raise ValueError("exit bearing range must lie in [0, pi]")

    @property
    def d_min(self) -> float:
        return self.alpha * self.sector_radius / math.sqrt(self.n_aircraft)

    def time_limit(self, aircraft: AircraftConfig) -> float:
        if self.max_sim_time is not None:
            return self.max_sim_time
        return 3.0 * (2.0 * self.sector_radius / aircraft.speed_min)


@dataclass
class Agent:
    id: int
    state: dc.KinematicState
    exit_waypoint: np.ndarray
    original_velocity: np.ndarray
    maneuvering: bool = False
    conflict_memory: list = field(default_factory=list)
    energy_acc: float = 0.0
    path_length_acc: float = 0.0
    active: bool = True
    start_features_captured: bool = False


@dataclass
class RunResult:
    n_aircraft: int
    run: int
    delta_e: np.ndarray
    features: np.ndarray
    started_in_conflict: np.ndarray
    incomplete: np.ndarray
    min_separation: np.ndarray
    time_in_sector: np.ndarray
    los_count: int
    nmac_count: int

    def complete_overheads(self) -> np.ndarray:
        return self.delta_e[~self.incomplete]


def assign_exit(entry_position, rng, sector_radius: float,
                bearing_range=(math.radians(60.0), math.radians(180.0))):
    """Exit waypoint on the boundary, offset from the entry bearing by a
    uniform angle in ``bearing_range`` in a random direction."""
    entry = np.asarray(entry_position, dtype=float)
    if not np.any(entry):
        raise ValueError("entry position must be nonzero")
    theta = math.atan2(entry[1], entry[0])
    beta = rng.uniform(*bearing_range)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    ang = theta + sign * beta
    return sector_radius * np.array([math.cos(ang), math.sin(ang)])


def _sample_positions(rng, n, config: ScenarioConfig):
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    u = rng.uniform(*config.radial_scale, n)
    r = u * config.sector_radius
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def spawn_positions(config: ScenarioConfig, rng) -> np.ndarray:
    """Initial positions with pairwise spacing >= d_min.

    All N are drawn at once; a randomly chosen violating aircraft is then
    redrawn (accepted unless it adds violations) until the set is clean.
    Each aircraft may be redrawn at most ``max_resamples`` times.
    """
    n = config.n_aircraft
    d_min = config.d_min
    pos = _sample_positions(rng, n, config)
    close = np.hypot(*(pos[:, None, :] - pos[None, :, :]).transpose(2, 0, 1)) < d_min
    np.fill_diagonal(close, False)
    viol = close.sum(axis=1)
    tries = np.zeros(n, dtype=int)
    while True:
        bad = np.flatnonzero(viol)
        if bad.size == 0:
            return pos
        i = int(bad[rng.integers(bad.size)])
        if tries[i] >= config.max_resamples:
            raise ScenarioInfeasible(
                f"could not separate {n} aircraft by {d_min:.0f} m: aircraft {i} "
                f"redrawn {config.max_resamples} times"
            )
        tries[i] += 1
        cand = _sample_positions(rng, 1, config)[0]
        row = np.hypot(*(pos - cand).T) < d_min
        row[i] = False
        if np.count_nonzero(row) <= viol[i]:
            viol -= close[i]
            viol += row
            close[i] = row
            close[:, i] = row
            viol[i] = np.count_nonzero(row)
            pos[i] = cand


def spawn_scenario(config: ScenarioConfig, rng, v_br: float) -> list[Agent]:
    pos = spawn_positions(config, rng)
    agents = []
    for i, p in enumerate(pos):
        exit_wp = assign_exit(p, rng, config.sector_radius, config.exit_bearing_range)
        heading = exit_wp - p
        vel = heading / np.hypot(*heading) * v_br
        agents.append(Agent(i, dc.KinematicState(p, vel), exit_wp, vel.copy()))
    return agents


@dataclass
class StepEvents:
    t: float
    n_conflicts: int
    new_los: int
    new_nmac: int
    exited: np.ndarray
    snapshot: Snapshot | None = None


class Simulation:
    """Synchronous stepping of one scenario. State lives in arrays indexed by
    agent id; ``agents()`` rebuilds the ``Agent`` view."""

    def __init__(self, agents, scenario: ScenarioConfig, aircraft: AircraftConfig,
                 density: float, v_br: float, record_history: bool = False):
        n = len(agents)
        self.scenario = scenario
        self.aircraft = aircraft
        self.density = density
        self.v_br = v_br
        self.params = scenario.detection
        self.n = n
        self.pos = np.array([a.state.position for a in agents], dtype=float).reshape(n, 2)
        self.vel = np.array([a.state.velocity for a in agents], dtype=float).reshape(n, 2)
        self.exit = np.array([a.exit_waypoint for a in agents], dtype=float).reshape(n, 2)
        self.orig_speed = np.array([np.hypot(*a.original_velocity) for a in agents])
        self.maneuvering = np.array([a.maneuvering for a in agents], dtype=bool)
        self.active = np.array([a.active for a in agents], dtype=bool)
        self.memory = np.full((n, n), np.nan)
        self.energy = np.array([a.energy_acc for a in agents], dtype=float)
        self.path = np.array([a.path_length_acc for a in agents], dtype=float)
        self.time_in_sector = np.zeros(n)
        self.t = 0.0
        self.steps = 0
        self._los = np.zeros((n, n), dtype=bool)
        self._nmac = np.zeros((n, n), dtype=bool)
        self.los_count = 0
        self.nmac_count = 0
        self.min_sep = np.full(n, np.inf)
        self._update_separation(np.flatnonzero(self.active))
        self.history = [[] for _ in range(n)] if record_history else None

    def agents(self) -> list[Agent]:
        out = []
        for i in range(self.n):
            mem = [(j, float(self.memory[i, j])) for j in np.flatnonzero(~np.isnan(self.memory[i]))]
            out.append(Agent(i, dc.KinematicState(self.pos[i], self.vel[i]), self.exit[i].copy(),
                             self._intended(np.array([i]))[0], bool(self.maneuvering[i]), mem,
                             float(self.energy[i]), float(self.path[i]), bool(self.active[i]), True))
        return out

    def _intended(self, idx):
        heading = self.exit[idx] - self.pos[idx]
        norm = np.hypot(heading[:, 0], heading[:, 1])
        norm = np.where(norm > 0, norm, 1.0)
        return heading / norm[:, None] * self.orig_speed[idx, None]

    def _update_separation(self, idx):
        if idx.size < 2:
            return
        p = self.pos[idx]
        dist = np.hypot(*(p[:, None, :] - p[None, :, :]).transpose(2, 0, 1))
        np.fill_diagonal(dist, np.inf)
        self.min_sep[idx] = np.minimum(self.min_sep[idx], dist.min(axis=1))
        sub = np.ix_(idx, idx)
        los = dist < self.params.r_pz
        nmac = dist < self.scenario.nmac_threshold
        # count each pair once per episode
        self.los_count += int(np.count_nonzero(np.triu(los & ~self._los[sub], 1)))
        self.nmac_count += int(np.count_nonzero(np.triu(nmac & ~self._nmac[sub], 1)))
        self._los[sub] = los
        self._nmac[sub] = nmac

    def step(self, capture_snapshot: bool = False) -> StepEvents:
        sc, params, ac = self.scenario, self.params, self.aircraft
        idx = np.flatnonzero(self.active)
        t_now = self.t
        p = self.pos[idx]
        v = self.vel[idx]

        t, dcv, d = dc.pairwise_cpa(p, v)
        conf, t_e, dc_e, dn_e = dc.conflict_matrix(t, dcv, d, params)
        rel = v[:, None, :] - v[None, :, :]
        res = dc.resolution_matrix(v, rel, t_e, dc_e, dn_e, d, conf, params, sc.dt, sc.tangent_correction)
        dv = res.sum(axis=1)
        in_conf = conf.any(axis=1)

        new_v = v.copy()
        if in_conf.any():
            new_v[in_conf] = dc.clamp_speeds(v[in_conf] + dv[in_conf], ac.speed_min, ac.speed_max, v[in_conf])
            ci, cj = np.nonzero(conf)
            self.memory[idx[ci], idx[cj]] = t_now + t_e[ci, cj]
            self.maneuvering[idx[in_conf]] = True

        # recovery for aircraft still flying a resolution but no longer in conflict
        rec = self.maneuvering[idx] & ~in_conf
        if rec.any():
            intended = self._intended(idx)
            mem = self.memory[np.ix_(idx, np.arange(self.n))]
            cpa_passed = ~np.any(mem >= t_now, axis=1)  # NaN compares False
            tp, dcp, dp = dc.pairwise_cpa(p, v, own_vel=intended)
            probe_conf, *_ = dc.conflict_matrix(tp, dcp, dp, params)
            resume = rec & cpa_passed & ~probe_conf.any(axis=1)
            if resume.any():
                new_v[resume] = intended[resume]
                self.maneuvering[idx[resume]] = False
                self.memory[idx[resume]] = np.nan

        snap = None
        if capture_snapshot:
            snap = Snapshot(positions=p.copy(), velocities=v.copy(), exits=self.exit[idx].copy(),
                            conflict=conf, t_cpa=t_e, d_cpa=dn_e, delta_v=dv,
                            commanded_velocity=new_v.copy(), n_aircraft=idx.size)

        self.vel[idx] = new_v
        self.pos[idx] = p + new_v * sc.dt
        speed = np.hypot(new_v[:, 0], new_v[:, 1])
        self.energy[idx] += electrical_power(ac, speed, self.density) * sc.dt
        self.path[idx] += speed * sc.dt
        if self.history is not None:
            for k, i in enumerate(idx):
                self.history[i].append((t_now, t_now + sc.dt, float(speed[k])))
        self.t = t_now + sc.dt
        self.steps += 1

        los_before, nmac_before = self.los_count, self.nmac_count
        self._update_separation(idx)

        newp = self.pos[idx]
        to_exit = np.hypot(*(self.exit[idx] - newp).T)
        outbound = (np.hypot(newp[:, 0], newp[:, 1]) >= sc.sector_radius) & \
            (np.einsum("ij,ij->i", newp, new_v) > 0)
        done = (to_exit <= speed * sc.dt) | outbound
        exited = idx[done]
        self.active[exited] = False
        self.time_in_sector[exited] = self.t
        return StepEvents(t_now, int(np.count_nonzero(conf)) // 2, self.los_count - los_before,
                          self.nmac_count - nmac_before, exited, snap)

    def run(self, time_limit: float):
        """Step until every aircraft has exited or ``time_limit`` elapses.
        Returns the step-0 snapshot and the timed-out mask."""
        first = None
        while self.active.any() and self.t < time_limit:
            ev = self.step(capture_snapshot=first is None)
            if first is None:
                first = ev.snapshot
        timed_out = self.active.copy()
        self.time_in_sector[timed_out] = self.t
        return first, timed_out


def baseline_energy_per_distance(aircraft: AircraftConfig, density: float, v_br: float) -> float:
    return float(electrical_power(aircraft, v_br, density)) / v_br


def compute_overhead(energy_acc, path_length_acc, aircraft: AircraftConfig, density: float, v_br: float):
    """Fractional per-distance energy increase over constant-speed V_br flight."""
    e_actual = np.asarray(energy_acc, dtype=float) / np.asarray(path_length_acc, dtype=float)
    e_base = baseline_energy_per_distance(aircraft, density, v_br)
    return (e_actual - e_base) / e_base


def run_scenario(scenario: ScenarioConfig, aircraft: AircraftConfig, run: int,
                 density: float | None = None, v_br: float | None = None) -> RunResult:
    if density is None:
        density = isa_density(aircraft.cruise_altitude)
    if v_br is None:
        v_br = best_range_speed(aircraft, density)
    rng = np.random.default_rng([scenario.seed, scenario.n_aircraft, run])
    agents = spawn_scenario(scenario, rng, v_br)
    sim = Simulation(agents, scenario, aircraft, density, v_br)
    snap, timed_out = sim.run(scenario.time_limit(aircraft))
    feats = extract_all(snap, scenario, v_br)
    delta = compute_overhead(sim.energy, sim.path, aircraft, density, v_br)
    return RunResult(
        n_aircraft=scenario.n_aircraft, run=run, delta_e=delta, features=feats,
        started_in_conflict=feats[:, 12] < 1.0, incomplete=timed_out,
        min_separation=sim.min_sep, time_in_sector=sim.time_in_sector,
        los_count=sim.los_count, nmac_count=sim.nmac_count,
    )


def initial_features(scenario: ScenarioConfig, aircraft: AircraftConfig, run: int) -> np.ndarray:
    """Step-0 feature rows for one seeded run, without flying it."""
    density = isa_density(aircraft.cruise_altitude)
    v_br = best_range_speed(aircraft, density)
    rng = np.random.default_rng([scenario.seed, scenario.n_aircraft, run])
    sim = Simulation(spawn_scenario(scenario, rng, v_br), scenario, aircraft, density, v_br)
    return extract_all(sim.step(capture_snapshot=True).snapshot, scenario, v_br)


def _run_star(args):
    return run_scenario(*args)


def worker_count() -> int:
    cap = os.environ.get("SKYRESERVE_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def batch_runs(scenario: ScenarioConfig, aircraft: AircraftConfig, workers: int | None = None,
               runs: range | None = None) -> list[RunResult]:
    """Independent seeded runs, returned in run-index order."""
    density = isa_density(aircraft.cruise_altitude)
    v_br = best_range_speed(aircraft, density)
    runs = range(scenario.runs) if runs is None else runs
    jobs = [(scenario, aircraft, r, density, v_br) for r in runs]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_run_star(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_star, jobs))


