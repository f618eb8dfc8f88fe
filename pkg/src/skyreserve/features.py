"""Pre-flight feature vectors, z-score normalization, and the dataset CSV."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .units import NM

FEATURE_NAMES = (
    "speed_dev", "radial_pos", "route_dist", "bearing_var", "speed_var", "heading_offset",
    "mvp_dpsi", "mvp_dv", "congestion", "nbr_conflict_density", "w_deg", "min_tcpa", "min_dcpa",
)
N_FEATURES = len(FEATURE_NAMES)
CSV_COLUMNS = ("n_aircraft", "run", "agent", "started_in_conflict", "incomplete",
               *(f"f{k}" for k in range(1, N_FEATURES + 1)), "delta_e")


class DatasetError(ValueError):
    pass


@dataclass
class Snapshot:
    """Step-0 traffic picture: states, pairwise conflicts, and the MVP
    command each aircraft would receive. Row/column order is shared."""

    positions: np.ndarray
    velocities: np.ndarray
    exits: np.ndarray
    conflict: np.ndarray
    t_cpa: np.ndarray
    d_cpa: np.ndarray
    delta_v: np.ndarray
    commanded_velocity: np.ndarray
    n_aircraft: int


@dataclass
class TransitRecord:
    features: np.ndarray
    delta_e: float
    n_aircraft: int
    run: int
    agent: int
    started_in_conflict: bool
    incomplete: bool = False


def _wrap(a):
    return (np.asarray(a) + math.pi) % (2.0 * math.pi) - math.pi


def extract_features(i: int, snap: Snapshot, scenario, v_br: float) -> np.ndarray:
    r_sector = scenario.sector_radius
    params = scenario.detection
    p, v = snap.positions, snap.velocities
    own_p, own_v = p[i], v[i]
    own_speed = float(np.hypot(*own_v))
    own_hdg = math.atan2(own_v[1], own_v[0])
    f = np.zeros(N_FEATURES)

    f[0] = (own_speed - v_br) / v_br
    f[1] = min(float(np.hypot(*own_p)) / r_sector, 1.0)
    f[2] = float(np.hypot(*(snap.exits[i] - own_p))) / (2.0 * r_sector)

    rel = p - own_p
    dist = np.hypot(rel[:, 0], rel[:, 1])
    nb = np.flatnonzero(dist <= scenario.neighbor_radius)
    nb = nb[nb != i]
    if nb.size:
        bearings = _wrap(np.arctan2(rel[nb, 1], rel[nb, 0]) - own_hdg)
        f[3] = float(np.var(bearings))
        rel_speed = np.hypot(*(v[nb] - own_v).T)
        f[4] = float(np.var(rel_speed)) / v_br ** 2
        hdgs = np.arctan2(v[nb, 1], v[nb, 0])
        mean_hdg = math.atan2(np.sin(hdgs).mean(), np.cos(hdgs).mean())
        f[5] = abs(float(_wrap(own_hdg - mean_hdg)))

    row = np.flatnonzero(snap.conflict[i])
    if row.size:
        cmd = snap.commanded_velocity[i]
        f[6] = float(_wrap(math.atan2(cmd[1], cmd[0]) - own_hdg))
        f[7] = float(np.hypot(*snap.delta_v[i])) / v_br
    f[8] = snap.n_aircraft / (math.pi * (r_sector / NM) ** 2) * 1000.0

    members = np.concatenate([[i], nb])
    m = members.size
    if m >= 2:
        sub = snap.conflict[np.ix_(members, members)]
        pairs = np.triu(sub | sub.T, 1)
        f[9] = np.count_nonzero(pairs) / (m * (m - 1) / 2)

    if row.size:
        t = snap.t_cpa[i, row]
        d = snap.d_cpa[i, row]
        w = np.exp(-t / (0.35 * params.t_look)) * np.maximum((params.r_pz - d) / params.r_pz, 0.0)
        f[10] = float(w.sum()) / (snap.n_aircraft - 1)
        f[11] = min(float(t.min()) / params.t_look, 1.0)
        f[12] = min(float(d.min()) / params.r_pz, 1.0)
    else:
        f[11] = f[12] = 1.0
    return f


def extract_all(snap: Snapshot, scenario, v_br: float) -> np.ndarray:
    return np.array([extract_features(i, snap, scenario, v_br) for i in range(len(snap.positions))])


def records_from_run(result) -> list[TransitRecord]:
    return [
        TransitRecord(result.features[k].copy(), float(result.delta_e[k]), result.n_aircraft, result.run,
                      k, bool(result.started_in_conflict[k]), bool(result.incomplete[k]))
        for k in range(len(result.delta_e))
    ]


# -- normalization ----------------------------------------------------------

@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray

    @classmethod
    def fit(cls, x) -> "NormalizationStats":
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("normalization needs at least two training rows")
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
        if not keep.all():
            names = [FEATURE_NAMES[k] if x.shape[1] == N_FEATURES else str(k) for k in np.flatnonzero(~keep)]
            warnings.warn(f"dropping zero-variance features: {', '.join(names)}", stacklevel=2)
        return cls(mean, np.where(keep, std, 1.0), keep)

    @property
    def dim(self) -> int:
        return int(self.keep.sum())

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mean) / self.std
        return z[..., self.keep]

    def invert(self, z):
        z = np.asarray(z, dtype=float)
        return z * self.std[self.keep] + self.mean[self.keep]

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "keep": self.keep.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float),
                   np.array(d["keep"], dtype=bool))


# -- dataset file -----------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_dataset(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([r.n_aircraft, r.run, r.agent, int(r.started_in_conflict), int(r.incomplete),
                        *(_fmt(float(x)) for x in r.features), _fmt(r.delta_e)])


def read_dataset(path) -> list[TransitRecord]:
    out = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise DatasetError(f"{path}:1: unexpected header")
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            if len(row) != len(CSV_COLUMNS):
                raise DatasetError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(row)}")
            try:
                n, run, agent, sic, inc = (int(x) for x in row[:5])
                feats = np.array([float(x) for x in row[5:5 + N_FEATURES]])
                delta = float(row[-1])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if not np.all(np.isfinite(feats)) or not math.isfinite(delta) or delta <= -1.0:
                raise DatasetError(f"{path}:{lineno}: non-finite feature or delta_e <= -1")
            out.append(TransitRecord(feats, delta, n, run, agent, bool(sic), bool(inc)))
    return out


def dataset_arrays(records, include_incomplete: bool = False):
    """``(X, delta_e, meta)`` with meta columns n_aircraft, run, agent, started_in_conflict."""
    rows = [r for r in records if include_incomplete or not r.incomplete]
    if not rows:
        return np.zeros((0, N_FEATURES)), np.zeros(0), np.zeros((0, 4), dtype=int)
    x = np.array([r.features for r in rows], dtype=float)
    y = np.array([r.delta_e for r in rows], dtype=float)
    meta = np.array([[r.n_aircraft, r.run, r.agent, int(r.started_in_conflict)] for r in rows], dtype=int)
    return x, y, meta
