"""Cruise power model for a six-rotor tilt-rotor eVTOL.

Component drag build-up on the wing reference area, Glauert high-speed
induced power, blade-element profile power, and parasite power, combined
through drivetrain efficiency plus a constant hotel load. Every function
broadcasts over numpy arrays of airspeed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .units import KT, MU_AIR, RPM, FT

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class PowerModelError(ValueError):
    pass


class ShaftPowerWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DragComponent:
    name: str
    wetted_area: float
    form_factor: float = 1.0
    characteristic_length: float = 1.0
    bluff_body: bool = False
    bluff_cd: float = 0.0
    frontal_area: float = 0.0
    count: int = 1

    def __post_init__(self):
        if self.wetted_area <= 0:
            raise PowerModelError(f"{self.name}: wetted_area must be positive")
        if self.count < 1:
            raise PowerModelError(f"{self.name}: count must be >= 1")
        if self.bluff_body:
            if self.bluff_cd <= 0 or self.frontal_area <= 0:
                raise PowerModelError(f"{self.name}: bluff body needs bluff_cd and frontal_area > 0")
        elif self.form_factor < 1.0:
            raise PowerModelError(f"{self.name}: streamlined form factor must be >= 1")


# Raymer-style estimates for a Joby-S4-class airframe. Absolute values are
# not published; the scalar calibration factor in AircraftConfig carries
# the V_br anchor.
DEFAULT_COMPONENTS = (
    DragComponent("wing", wetted_area=22.4, form_factor=1.52, characteristic_length=1.016),
    DragComponent("fuselage", wetted_area=27.0, form_factor=1.52, characteristic_length=7.3),
    DragComponent("tail", wetted_area=8.0, form_factor=1.30, characteristic_length=0.8),
    DragComponent("pod", wetted_area=1.9, characteristic_length=1.5, bluff_body=True,
                  bluff_cd=0.30, frontal_area=0.126, count=6),
    DragComponent("gear", wetted_area=0.6, characteristic_length=0.5, bluff_body=True,
                  bluff_cd=0.50, frontal_area=0.15),
)


@dataclass(frozen=True)
class AircraftConfig:
    """Baseline tilt-rotor parameters, SI units throughout."""

    n_rotors: int = 6
    rotor_radius: float = 1.45
    n_blades: int = 5
    blade_chord: float = 0.083 * math.pi * 1.45 / 5
    cruise_rpm: float = 300.0 * RPM
    wing_area: float = 10.83
    aspect_ratio: float = 10.8
    oswald: float = 0.8
    mtom: float = 2177.0
    gravity: float = 9.81
    kappa: float = 1.15
    k_mu: float = 4.65
    blade_cd0: float = 0.012
    k_lift: float = 6.0
    eta_drv: float = 0.85
    p_hotel: float = 2000.0
    max_shaft_power: float = 690e3
    cruise_altitude: float = 2000.0 * FT
    speed_min: float = 85.0 * KT
    speed_max: float = 185.0 * KT
    drag_components: tuple = field(default=DEFAULT_COMPONENTS)
    parasite_calibration_factor: float = 0.187753

    def __post_init__(self):
        if not 0.0 < self.eta_drv <= 1.0:
            raise PowerModelError("eta_drv must lie in (0, 1]")
        if not self.speed_min < self.speed_max:
            raise PowerModelError("speed_min must be below speed_max")
        if self.rotor_radius <= 0 or self.cruise_rpm <= 0:
            raise PowerModelError("rotor radius and rpm must be positive")
        object.__setattr__(self, "drag_components", tuple(self.drag_components))

    @property
    def solidity(self) -> float:
        return self.n_blades * self.blade_chord / (math.pi * self.rotor_radius)

    @property
    def disk_area(self) -> float:
        return math.pi * self.rotor_radius ** 2

    @property
    def total_disk_area(self) -> float:
        return self.disk_area * self.n_rotors

    @property
    def tip_speed(self) -> float:
        return self.cruise_rpm * self.rotor_radius

    @property
    def weight(self) -> float:
        return self.mtom * self.gravity

    def with_(self, **changes) -> "AircraftConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class PowerBreakdown:
    induced: np.ndarray | float
    profile: np.ndarray | float
    parasite: np.ndarray | float
    shaft_total: np.ndarray | float
    hotel: np.ndarray | float
    electrical_total: np.ndarray | float


def skin_friction(reynolds):
    """Prandtl-Schlichting turbulent flat-plate skin friction coefficient."""
    re = np.asarray(reynolds, dtype=float)
    if np.any(re <= 1e4):
        raise PowerModelError("skin friction correlation needs Re > 1e4")
    cf = 0.455 / np.log10(re) ** 2.58
    return cf if cf.ndim else float(cf)


def parasite_drag_coefficient(config: AircraftConfig, airspeed, density: float):
    v = np.asarray(airspeed, dtype=float)
    if np.any(v <= 0):
        raise PowerModelError("airspeed must be positive")
    if not config.drag_components:
        raise PowerModelError("aircraft has no drag components")
    cdp = np.zeros_like(v)
    for comp in config.drag_components:
        if comp.bluff_body:
            cdp = cdp + comp.count * comp.bluff_cd * comp.frontal_area / config.wing_area
        else:
            re = density * v * comp.characteristic_length / MU_AIR
            cdp = cdp + comp.count * comp.form_factor * skin_friction(re) * comp.wetted_area / config.wing_area
    cdp = cdp * config.parasite_calibration_factor
    return cdp if cdp.ndim else float(cdp)


def total_drag(config: AircraftConfig, airspeed, density: float):
    """Return ``(parasite, induced, total)`` drag in newtons."""
    v = np.asarray(airspeed, dtype=float)
    q = 0.5 * density * v ** 2
    d_p = parasite_drag_coefficient(config, v, density) * q * config.wing_area
    d_i = config.weight ** 2 / (math.pi * config.aspect_ratio * config.oswald * q * config.wing_area)
    return d_p, d_i, d_p + d_i


def induced_power(config: AircraftConfig, thrust_required, airspeed, density: float):
    # Glauert: v_i = v_h^2 / V with v_h^2 = T / (2 rho A_total)
    v = np.asarray(airspeed, dtype=float)
    if np.any(v <= 0):
        raise PowerModelError("Glauert approximation needs V > 0")
    t = np.asarray(thrust_required, dtype=float)
    v_i = t / (2.0 * density * config.total_disk_area) / v
    return config.kappa * t * v_i


def profile_power(config: AircraftConfig, thrust_required, airspeed, density: float):
    v = np.asarray(airspeed, dtype=float)
    t = np.asarray(thrust_required, dtype=float)
    omega_r = config.tip_speed
    a = config.disk_area
    mu = v / omega_r
    c_t = t / (density * a * omega_r ** 2 * config.n_rotors)
    sigma = config.solidity
    cd_blade = config.blade_cd0 * (1.0 + config.k_lift * (c_t / sigma) ** 2)
    return (cd_blade * sigma / 8.0) * (1.0 + config.k_mu * mu ** 2) * density * a * omega_r ** 3 * config.n_rotors


def _check_range(config: AircraftConfig, v: np.ndarray):
    tol = 1e-9 * config.speed_max
    if np.any(v < config.speed_min - tol) or np.any(v > config.speed_max + tol):
        raise PowerModelError(
            f"airspeed outside permitted range [{config.speed_min:.3f}, {config.speed_max:.3f}] m/s"
        )


def total_power(config: AircraftConfig, airspeed, density: float, check_range: bool = True) -> PowerBreakdown:
    v = np.asarray(airspeed, dtype=float)
    if check_range:
        _check_range(config, v)
    _, _, d_total = total_drag(config, v, density)
    p_ind = induced_power(config, d_total, v, density)
    p_prof = profile_power(config, d_total, v, density)
    p_par = d_total * v
    shaft = p_ind + p_prof + p_par
    if np.any(shaft > config.max_shaft_power):
        warnings.warn("shaft power exceeds installed maximum", ShaftPowerWarning, stacklevel=2)
    electrical = shaft / config.eta_drv + config.p_hotel
    hotel = np.full_like(v, config.p_hotel)
    if v.ndim == 0:
        return PowerBreakdown(float(p_ind), float(p_prof), float(p_par), float(shaft),
                              float(hotel), float(electrical))
    return PowerBreakdown(p_ind, p_prof, p_par, shaft, hotel, electrical)


def electrical_power(config: AircraftConfig, airspeed, density: float, check_range: bool = True):
    return total_power(config, airspeed, density, check_range).electrical_total


def segment_energy(config: AircraftConfig, speed_profile, density: float) -> float:
    """Trapezoidal integral of electrical power over a ``(t, V)`` series [J]."""
    prof = np.asarray(speed_profile, dtype=float)
    if prof.ndim != 2 or prof.shape[0] < 2 or prof.shape[1] != 2:
        raise PowerModelError("speed profile needs at least two (t, V) samples")
    t, v = prof[:, 0], prof[:, 1]
    dt = np.diff(t)
    if np.any(dt < 0) or (np.any(dt == 0) and t[-1] != t[0]):
        raise PowerModelError("timestamps must be strictly increasing")
    if t[-1] == t[0]:
        return 0.0
    p = electrical_power(config, v, density)
    return float(np.sum(0.5 * (p[1:] + p[:-1]) * dt))


def energy_per_distance(config: AircraftConfig, airspeed, density: float):
    v = np.asarray(airspeed, dtype=float)
    return electrical_power(config, v, density, check_range=False) / v


def best_range_speed(config: AircraftConfig, density: float, tol: float = 0.01) -> float:
    """Golden-section minimum of P(V)/V on the permitted speed range [m/s]."""
    a, b = config.speed_min, config.speed_max
    f = lambda v: float(energy_per_distance(config, v, density))  # noqa: E731
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def power_table(config: AircraftConfig, density: float, speeds_kt=None):
    """Rows of (speed_kt, induced, profile, parasite, hotel, total) in kW."""
    if speeds_kt is None:
        speeds_kt = np.arange(85.0, 186.0, 1.0)
    speeds_kt = np.asarray(speeds_kt, dtype=float)
    pb = total_power(config, speeds_kt * KT, density)
    rows = np.column_stack([
        speeds_kt, pb.induced / 1e3, pb.profile / 1e3, pb.parasite / 1e3,
        pb.hotel / 1e3, pb.electrical_total / 1e3,
    ])
    return rows
