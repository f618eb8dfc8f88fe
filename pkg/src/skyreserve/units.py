"""Unit conversions and ISA troposphere density.

Everything inside the package is SI (m, m/s, kg, N, W, rad, s). Aviation
units only appear at the config and CLI boundary.
"""
import math

KT = 0.514444
NM = 1852.0
FT = 0.3048
RPM = 2.0 * math.pi / 60.0

# (dimension, factor to SI)
_UNITS = {
    "m": ("length", 1.0),
    "km": ("length", 1000.0),
    "nm": ("length", NM),
    "ft": ("length", FT),
    "m/s": ("speed", 1.0),
    "kt": ("speed", KT),
    "km/h": ("speed", 1000.0 / 3600.0),
    "kg": ("mass", 1.0),
    "N": ("force", 1.0),
    "W": ("power", 1.0),
    "kW": ("power", 1000.0),
    "rad": ("angle", 1.0),
    "deg": ("angle", math.pi / 180.0),
    "s": ("time", 1.0),
    "min": ("time", 60.0),
    "h": ("time", 3600.0),
    "rad/s": ("angular_rate", 1.0),
    "rpm": ("angular_rate", RPM),
}

ISA_RHO0 = 1.225
ISA_TROPOPAUSE = 11000.0
MU_AIR = 1.7894e-5


class UnitError(ValueError):
    pass


def convert(value, from_unit: str, to_unit: str):
    """Convert ``value`` (scalar or ndarray) between two units of one dimension."""
    try:
        dim_a, fa = _UNITS[from_unit]
        dim_b, fb = _UNITS[to_unit]
    except KeyError as exc:
        raise UnitError(f"unknown unit {exc.args[0]!r}") from None
    if dim_a != dim_b:
        raise UnitError(f"cannot convert {dim_a} ({from_unit}) to {dim_b} ({to_unit})")
    if from_unit == to_unit:
        return value
    return value * fa / fb


def isa_density(altitude: float) -> float:
    """Air density [kg/m^3] in the ISA troposphere, ``0 <= altitude <= 11 km``."""
    if not 0.0 <= altitude <= ISA_TROPOPAUSE:
        raise ValueError(f"altitude {altitude} m outside ISA troposphere [0, 11000]")
    return ISA_RHO0 * (1.0 - 2.25577e-5 * altitude) ** 4.25588
