import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skyreserve.units import KT, NM, UnitError, _UNITS, convert, isa_density


def test_isa_sea_level():
    assert isa_density(0.0) == pytest.approx(1.225, abs=1e-12)


@pytest.mark.parametrize("alt, rho", [(609.6, 1.1548973), (1000.0, 1.1116425)])
def test_isa_hand_values(alt, rho):
    # reference values from a hand evaluation of the troposphere power law
    assert isa_density(alt) == pytest.approx(rho, abs=2e-6)


@pytest.mark.parametrize("alt", [-1.0, 11000.1, math.nan])
def test_isa_domain(alt):
    with pytest.raises(ValueError):
        isa_density(alt)


def test_isa_decreasing():
    h = np.linspace(0, 11000, 500)
    rho = np.array([isa_density(x) for x in h])
    assert np.all(np.diff(rho) < 0)


def test_conversion_examples():
    assert convert(157, "kt", "m/s") == pytest.approx(80.767708, rel=1e-12)
    assert convert(0.6, "nm", "m") == pytest.approx(1111.2, rel=1e-12)
    assert convert(0, "ft", "nm") == 0
    assert convert(300, "rpm", "rad/s") == pytest.approx(10 * math.pi, rel=1e-12)
    assert KT == 0.514444 and NM == 1852.0


def test_dimension_mismatch():
    with pytest.raises(UnitError):
        convert(1.0, "kt", "m")
    with pytest.raises(UnitError):
        convert(1.0, "furlong", "m")


pairs = [(a, b) for a in _UNITS for b in _UNITS if _UNITS[a][0] == _UNITS[b][0]]


@given(st.sampled_from(pairs), st.floats(-1e9, 1e9, allow_nan=False))
def test_round_trip(pair, x):
    a, b = pair
    assert convert(convert(x, a, b), b, a) == pytest.approx(x, rel=1e-12, abs=1e-300)
