"""State-based conflict detection and MVP resolution.

Two routes over the same geometry: per-pair functions on ``KinematicState``
(``cpa``, ``detect``, ``mvp_resolve``, ``combine``, ``recovery_check``) and
matrix versions (``pairwise_cpa``, ``conflict_matrix``, ``resolution_matrix``)
that the simulator steps with. Relative quantities are always ownship minus
intruder.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .units import NM

PARALLEL_EPS = 1e-9  # m/s; relative speeds below this are treated as co-moving
COLLOCATED_EPS = 1e-6  # m; CPA miss distances below this have no defined direction


@dataclass
class KinematicState:
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)

    @property
    def speed(self) -> float:
        return float(np.hypot(*self.velocity))


@dataclass(frozen=True)
class DetectionParams:
    r_pz: float = 0.6 * NM
    t_look: float = 90.0

    def __post_init__(self):
        if self.r_pz <= 0 or self.t_look <= 0:
            raise ValueError("r_pz and t_look must be positive")


@dataclass(frozen=True)
class ConflictPair:
    intruder_id: object
    t_cpa: float
    d_cpa_vec: np.ndarray = field(compare=False)
    d_cpa: float = 0.0


@dataclass(frozen=True)
class ResolutionCommand:
    delta_v: np.ndarray
    resulting_velocity: np.ndarray


def _right_of(u):
    # clockwise normal in an x-east / y-north frame
    return np.array([u[1], -u[0]])


def cpa(own: KinematicState, intruder: KinematicState):
    """Time to closest approach and the predicted relative position there."""
    d = own.position - intruder.position
    v = own.velocity - intruder.velocity
    vv = float(v @ v)
    if math.sqrt(vv) <= PARALLEL_EPS:
        return 0.0, d.copy()
    t = max(0.0, -float(d @ v) / vv)
    return t, d + v * t


def detect(own: KinematicState, others, params: DetectionParams, ids=None) -> list[ConflictPair]:
    """Conflicts of ``own`` against each state in ``others``.

    A pair is in conflict when the predicted miss distance is below r_pz
    within the look-ahead. Pairs already inside r_pz are always reported;
    if the prediction alone would not flag them, t_cpa is 0 and the miss
    vector is the current relative position.
    """
    if ids is None:
        ids = range(len(others))
    found = []
    for oid, intr in zip(ids, others):
        t, dc = cpa(own, intr)
        dn = float(np.hypot(*dc))
        if dn < params.r_pz and t < params.t_look:
            found.append(ConflictPair(oid, t, dc, dn))
            continue
        d = own.position - intr.position
        dist = float(np.hypot(*d))
        if dist < params.r_pz:
            found.append(ConflictPair(oid, 0.0, d, dist))
    return found


def _degenerate_direction(own_vel, rel_vel):
    """Unit push for an exact-collision prediction: perpendicular to the
    relative velocity, on the side that turns ownship clockwise."""
    speed_rel = float(np.hypot(*rel_vel))
    right = _right_of(own_vel)
    if speed_rel <= PARALLEL_EPS:
        n = float(np.hypot(*right))
        return right / n if n > 0 else np.array([1.0, 0.0])
    p = _right_of(rel_vel) / speed_rel
    side = float(p @ right)
    if side < 0:
        p = -p
    return p


def mvp_resolve(own: KinematicState, intruder: KinematicState, conflict: ConflictPair,
                params: DetectionParams, dt: float = 1.0, tangent_correction: bool = True):
    """MVP velocity change for ownship against one intruder.

    The push is along the CPA miss vector with magnitude
    ``(r_pz - d_cpa) / t_cpa``. With ``tangent_correction`` the target miss
    distance is divided by ``cos(asin(r_pz/dist) - asin(d_cpa/dist))`` so the
    new relative track is tangent to the protected zone instead of crossing
    r_pz at the old CPA time (otherwise the re-predicted miss distance falls
    short of r_pz by a factor |v|/|v + dv|).
    """
    r_pz = params.r_pz
    d = own.position - intruder.position
    dist = float(np.hypot(*d))
    rel_vel = own.velocity - intruder.velocity
    if conflict.t_cpa <= 0.0:
        if dist > COLLOCATED_EPS:
            n = d / dist
        else:
            n = _degenerate_direction(own.velocity, rel_vel)
        return max(r_pz - dist, 0.0) / dt * n

    dc = np.asarray(conflict.d_cpa_vec, dtype=float)
    dn = float(np.hypot(*dc))
    if dn > COLLOCATED_EPS:
        n = dc / dn
    else:
        n = _degenerate_direction(own.velocity, rel_vel)
    erratum = 1.0
    if tangent_correction and dist > r_pz:
        erratum = math.cos(math.asin(r_pz / dist) - math.asin(min(dn / dist, 1.0)))
    return (r_pz / erratum - dn) / conflict.t_cpa * n


def clamp_speed(velocity, speed_min: float, speed_max: float, fallback_direction=None):
    vel = np.asarray(velocity, dtype=float)
    s = float(np.hypot(*vel))
    if s <= PARALLEL_EPS:
        u = np.asarray(fallback_direction if fallback_direction is not None else (1.0, 0.0), dtype=float)
        return u / float(np.hypot(*u)) * speed_min
    return vel / s * min(max(s, speed_min), speed_max)


def combine(own: KinematicState, intruders, conflicts, params: DetectionParams,
            speed_min: float, speed_max: float, dt: float = 1.0,
            tangent_correction: bool = True) -> ResolutionCommand:
    """Sum per-conflict MVP vectors and clamp the commanded speed."""
    if not conflicts:
        raise ValueError("combine needs at least one conflict")
    dv = np.zeros(2)
    for intr, conf in zip(intruders, conflicts):
        dv = dv + mvp_resolve(own, intr, conf, params, dt, tangent_correction)
    vel = clamp_speed(own.velocity + dv, speed_min, speed_max, own.velocity)
    return ResolutionCommand(dv, vel)


def recovery_check(own: KinematicState, others, original_velocity, conflict_memory,
                   t_now: float, params: DetectionParams) -> bool:
    """True when every remembered CPA time has passed and flying
    ``original_velocity`` would not itself be in conflict."""
    if any(t_now <= t_abs for _, t_abs in conflict_memory):
        return False
    probe = KinematicState(own.position, original_velocity)
    return not detect(probe, others, params)


def severity(conflicts, n_aircraft: int, params: DetectionParams) -> float:
    """Urgency-weighted intrusion depth summed over conflicts, per other aircraft."""
    if n_aircraft < 2:
        raise ValueError("severity needs at least two aircraft")
    total = 0.0
    for c in conflicts:
        depth = max((params.r_pz - c.d_cpa) / params.r_pz, 0.0)
        total += math.exp(-c.t_cpa / (0.35 * params.t_look)) * depth
    return total / (n_aircraft - 1)


# -- matrix route -----------------------------------------------------------

def pairwise_cpa(pos: np.ndarray, vel: np.ndarray, own_vel: np.ndarray | None = None):
    """CPA for every ordered pair (row = ownship, column = intruder).

    ``own_vel`` substitutes the row aircraft's velocity (recovery probes).
    Returns ``(t_cpa, d_cpa_vec, d_now)`` with shapes (n,n), (n,n,2), (n,n,2).
    """
    if own_vel is None:
        own_vel = vel
    d = pos[:, None, :] - pos[None, :, :]
    v = own_vel[:, None, :] - vel[None, :, :]
    vv = np.einsum("ijk,ijk->ij", v, v)
    dv = np.einsum("ijk,ijk->ij", d, v)
    moving = np.sqrt(vv) > PARALLEL_EPS
    t = np.where(moving, np.maximum(0.0, -dv / np.where(moving, vv, 1.0)), 0.0)
    dc = d + v * t[..., None]
    return t, dc, d


def conflict_matrix(t, dc, d, params: DetectionParams, valid=None):
    """Boolean conflict matrix plus effective (t_cpa, d_cpa_vec, d_cpa)."""
    dn = np.hypot(dc[..., 0], dc[..., 1])
    dist = np.hypot(d[..., 0], d[..., 1])
    predicted = (dn < params.r_pz) & (t < params.t_look)
    los_only = (dist < params.r_pz) & ~predicted
    conf = predicted | los_only
    np.fill_diagonal(conf, False)
    if valid is not None:
        conf &= valid
    t_eff = np.where(los_only, 0.0, t)
    dc_eff = np.where(los_only[..., None], d, dc)
    dn_eff = np.where(los_only, dist, dn)
    return conf, t_eff, dc_eff, dn_eff


def resolution_matrix(own_vel, rel_vel, t, dc, dn, d, conf, params: DetectionParams,
                      dt: float = 1.0, tangent_correction: bool = True):
    """Per-pair MVP vectors, zero where ``conf`` is False; shape (n, n, 2)."""
    r_pz = params.r_pz
    n_ag = conf.shape[0]
    out = np.zeros((n_ag, n_ag, 2))
    ii, jj = np.nonzero(conf)
    if ii.size == 0:
        return out
    t_p = t[ii, jj]
    dn_p = dn[ii, jj]
    dc_p = dc[ii, jj]
    d_p = d[ii, jj]
    dist_p = np.hypot(d_p[:, 0], d_p[:, 1])
    rv = rel_vel[ii, jj]
    ov = own_vel[ii]

    # fallback direction for collocated predictions
    rv_speed = np.hypot(rv[:, 0], rv[:, 1])
    right = np.column_stack([ov[:, 1], -ov[:, 0]])
    perp = np.column_stack([rv[:, 1], -rv[:, 0]]) / np.where(rv_speed > PARALLEL_EPS, rv_speed, 1.0)[:, None]
    flip = np.einsum("ij,ij->i", perp, right) < 0
    perp[flip] *= -1.0
    right_n = np.hypot(right[:, 0], right[:, 1])
    right_u = np.where(right_n[:, None] > 0, right / np.where(right_n > 0, right_n, 1.0)[:, None],
                       np.array([1.0, 0.0]))
    degenerate = np.where((rv_speed > PARALLEL_EPS)[:, None], perp, right_u)

    immediate = t_p <= 0.0
    # predicted conflicts
    with np.errstate(divide="ignore", invalid="ignore"):
        n_pred = np.where((dn_p > COLLOCATED_EPS)[:, None], dc_p / dn_p[:, None], degenerate)
        n_now = np.where((dist_p > COLLOCATED_EPS)[:, None], d_p / dist_p[:, None], degenerate)
        erratum = np.ones_like(t_p)
        if tangent_correction:
            outside = dist_p > r_pz
            ratio_r = np.where(outside, r_pz / np.where(outside, dist_p, 1.0), 0.0)
            ratio_d = np.where(outside, np.minimum(dn_p / np.where(outside, dist_p, 1.0), 1.0), 0.0)
            erratum = np.where(outside, np.cos(np.arcsin(ratio_r) - np.arcsin(ratio_d)), 1.0)
        mag_pred = (r_pz / erratum - dn_p) / np.where(immediate, 1.0, t_p)
    mag_now = np.maximum(r_pz - dist_p, 0.0) / dt
    vec = np.where(immediate[:, None], mag_now[:, None] * n_now, mag_pred[:, None] * n_pred)
    out[ii, jj] = vec
    return out


def clamp_speeds(vel: np.ndarray, speed_min: float, speed_max: float, fallback: np.ndarray):
    s = np.hypot(vel[:, 0], vel[:, 1])
    fb_s = np.hypot(fallback[:, 0], fallback[:, 1])
    safe = s > PARALLEL_EPS
    direction = np.where(safe[:, None], vel / np.where(safe, s, 1.0)[:, None],
                         fallback / np.where(fb_s > 0, fb_s, 1.0)[:, None])
    return direction * np.clip(s, speed_min, speed_max)[:, None]
