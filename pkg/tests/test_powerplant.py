import math
import warnings

import numpy as np
import pytest

from skyreserve.powerplant import (AircraftConfig, DragComponent, PowerModelError, ShaftPowerWarning,
                                   best_range_speed, electrical_power, induced_power, parasite_drag_coefficient,
                                   power_table, profile_power, segment_energy, skin_friction, total_drag,
                                   total_power)
from skyreserve.units import KT, isa_density

RHO = isa_density(609.6)
AC = AircraftConfig()


def oracle_power(v, rho=RHO, k_cal=0.187753):
    """Scalar re-derivation of the electrical power chain from the raw constants."""
    mu_air = 1.7894e-5
    s_ref = 10.83
    cdp = 0.0
    for swet, ff, length in ((22.4, 1.52, 1.016), (27.0, 1.52, 7.3), (8.0, 1.30, 0.8)):
        re = rho * v * length / mu_air
        cdp += ff * 0.455 / math.log10(re) ** 2.58 * swet / s_ref
    cdp += (6 * 0.30 * 0.126 + 0.50 * 0.15) / s_ref
    cdp *= k_cal
    q = 0.5 * rho * v * v
    w = 2177 * 9.81
    drag = cdp * q * s_ref + w * w / (math.pi * 10.8 * 0.8 * q * s_ref)
    a = math.pi * 1.45 ** 2
    p_ind = 1.15 * drag ** 2 / (2 * rho * 6 * a * v)
    omega_r = 300 * 2 * math.pi / 60 * 1.45
    sigma = 0.083
    ct = drag / (rho * a * omega_r ** 2 * 6)
    cdb = 0.012 * (1 + 6 * (ct / sigma) ** 2)
    p_prof = cdb * sigma / 8 * (1 + 4.65 * (v / omega_r) ** 2) * rho * a * omega_r ** 3 * 6
    return (p_ind + p_prof + drag * v) / 0.85 + 2000.0


def test_skin_friction_examples():
    assert skin_friction(1e7) == pytest.approx(0.003004, abs=5e-7)
    assert skin_friction(1e6) == pytest.approx(0.455 / 6 ** 2.58, rel=1e-12)
    assert skin_friction(1e6) == pytest.approx(0.004476, rel=2e-3)
    assert skin_friction(1e8) < skin_friction(1e7)


@pytest.mark.parametrize("re", [1e4, 10.0, -5.0])
def test_skin_friction_domain(re):
    with pytest.raises(PowerModelError):
        skin_friction(re)


def test_solidity_and_disk():
    assert AC.solidity == pytest.approx(0.083, rel=1e-9)
    assert AC.solidity == pytest.approx(AC.n_blades * AC.blade_chord / (math.pi * AC.rotor_radius), rel=1e-12)
    assert AC.total_disk_area == pytest.approx(6 * math.pi * 1.45 ** 2)
    assert AC.tip_speed == pytest.approx(45.553, abs=1e-3)


def test_config_validation():
    with pytest.raises(PowerModelError):
        AircraftConfig(eta_drv=0.0)
    with pytest.raises(PowerModelError):
        AircraftConfig(speed_min=100.0, speed_max=90.0)
    with pytest.raises(PowerModelError):
        DragComponent("x", wetted_area=-1.0)
    with pytest.raises(PowerModelError):
        DragComponent("x", wetted_area=1.0, form_factor=0.9)
    with pytest.raises(PowerModelError):
        DragComponent("x", wetted_area=1.0, bluff_body=True)


def test_cdp_reduces_to_skin_friction():
    comp = DragComponent("plate", wetted_area=AC.wing_area, form_factor=1.0, characteristic_length=2.0)
    ac = AC.with_(drag_components=(comp,), parasite_calibration_factor=1.0)
    v = 70.0
    re = RHO * v * 2.0 / 1.7894e-5
    assert parasite_drag_coefficient(ac, v, RHO) == pytest.approx(skin_friction(re), rel=1e-12)


def test_cdp_linear_in_wetted_area():
    doubled = tuple(DragComponent(c.name, c.wetted_area * 2, c.form_factor, c.characteristic_length)
                    for c in AC.drag_components if not c.bluff_body)
    base = AC.with_(drag_components=tuple(c for c in AC.drag_components if not c.bluff_body))
    assert parasite_drag_coefficient(base.with_(drag_components=doubled), 80.0, RHO) == \
        pytest.approx(2 * parasite_drag_coefficient(base, 80.0, RHO), rel=1e-12)


def test_cdp_empty_components():
    with pytest.raises(PowerModelError):
        parasite_drag_coefficient(AC.with_(drag_components=()), 80.0, RHO)


def test_induced_drag_hand_value():
    _, d_i, _ = total_drag(AC, 80.77, 1.1548)
    assert d_i == pytest.approx(412.0, abs=1.0)
    _, d_i2, _ = total_drag(AC, 2 * 80.77, 1.1548)
    assert d_i2 == pytest.approx(d_i / 4, rel=1e-12)


def test_induced_power_examples():
    assert induced_power(AC, 0.0, 80.77, 1.1548) == 0.0
    assert induced_power(AC, 2000.0, 80.77, 1.1548) == pytest.approx(622.0, abs=1.5)
    p1 = induced_power(AC, 1000.0, 70.0, RHO)
    assert induced_power(AC, 2000.0, 70.0, RHO) == pytest.approx(4 * p1, rel=1e-12)
    with pytest.raises(PowerModelError):
        induced_power(AC, 1000.0, 0.0, RHO)


def test_profile_power_examples():
    a = math.pi * 1.45 ** 2
    omega_r = AC.tip_speed
    hover_floor = 0.012 * 0.083 / 8 * RHO * a * omega_r ** 3 * 6
    assert profile_power(AC, 0.0, 0.0, RHO) == pytest.approx(hover_floor, rel=1e-9)
    assert 157 * KT / omega_r == pytest.approx(1.773, abs=1e-3)
    v = np.linspace(1, 100, 50)
    assert np.all(np.diff(profile_power(AC, 1500.0, v, RHO)) > 0)


def test_total_power_matches_oracle_on_grid():
    for kt in range(85, 186, 5):
        assert float(electrical_power(AC, kt * KT, RHO)) == pytest.approx(oracle_power(kt * KT), rel=1e-9)


def test_breakdown_identity_and_range():
    v = np.arange(85, 186) * KT
    pb = total_power(AC, v, RHO)
    _, _, d = total_drag(AC, v, RHO)
    np.testing.assert_allclose(pb.parasite, d * v, rtol=1e-12)
    np.testing.assert_allclose(pb.shaft_total, pb.induced + pb.profile + pb.parasite, rtol=1e-12)
    assert np.all(pb.electrical_total > pb.shaft_total)
    with pytest.raises(PowerModelError):
        total_power(AC, 80 * KT, RHO)
    with pytest.raises(PowerModelError):
        total_power(AC, 190 * KT, RHO)


def test_fig3_ordering_at_high_speed():
    pb = total_power(AC, 170 * KT, RHO)
    assert pb.parasite > pb.profile > pb.induced


def test_drag_monotonicity():
    v = np.arange(85, 186) * KT
    d_p, d_i, d = total_drag(AC, v, RHO)
    assert np.all(np.diff(d_p) > 0) and np.all(np.diff(d_i) < 0)
    _, _, d_hi = total_drag(AC, 185 * KT + 1e-3, RHO)
    assert d_hi > d[-1]


def test_shaft_warning():
    weak = AC.with_(max_shaft_power=1000.0)
    with pytest.warns(ShaftPowerWarning):
        total_power(weak, 150 * KT, RHO)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        total_power(AC, 150 * KT, RHO)


def test_best_range_speed_and_grid_oracle():
    vbr = best_range_speed(AC, RHO) / KT
    assert 152.0 <= vbr <= 162.0
    grid = np.arange(85.0, 185.0001, 0.1)
    e = [oracle_power(k * KT) / (k * KT) for k in grid]
    assert abs(grid[int(np.argmin(e))] - vbr) <= 0.2


def test_unimodal_energy_per_distance():
    v = np.arange(85, 185.01, 0.5) * KT
    e = electrical_power(AC, v, RHO) / v
    s = np.sign(np.diff(e))
    assert np.count_nonzero(np.diff(s) != 0) == 1


def test_heavier_parasite_lowers_vbr():
    speeds = [best_range_speed(AC.with_(parasite_calibration_factor=k), RHO) for k in (0.15, 0.19, 0.3, 0.5)]
    assert all(a > b for a, b in zip(speeds, speeds[1:]))


def test_segment_energy():
    v = 150 * KT
    p = float(electrical_power(AC, v, RHO))
    assert segment_energy(AC, [[0, v], [60, v]], RHO) == pytest.approx(60 * p, rel=1e-12)
    assert segment_energy(AC, [[5, v], [5, v]], RHO) == 0.0
    with pytest.raises(PowerModelError):
        segment_energy(AC, [[0, v]], RHO)
    with pytest.raises(PowerModelError):
        segment_energy(AC, [[0, v], [2, v], [1, v]], RHO)


def _smooth_profile(dt):
    t = np.arange(0.0, 120.0 + dt / 2, dt)
    return np.column_stack([t, (140 + 30 * np.sin(t / 20.0)) * KT])


def test_segment_energy_refinement_and_additivity():
    coarse = segment_energy(AC, _smooth_profile(0.1), RHO)
    fine = segment_energy(AC, _smooth_profile(0.01), RHO)
    assert abs(coarse - fine) / fine < 1e-3
    prof = _smooth_profile(0.5)
    whole = segment_energy(AC, prof, RHO)
    parts = segment_energy(AC, prof[:101], RHO) + segment_energy(AC, prof[100:], RHO)
    assert parts == pytest.approx(whole, rel=1e-9)


def test_power_table_shape():
    rows = power_table(AC, RHO)
    assert rows.shape == (101, 6)
    assert rows[0, 0] == 85 and rows[-1, 0] == 185
    np.testing.assert_allclose(rows[:, 5] * 1e3, [oracle_power(k * KT) for k in rows[:, 0]], rtol=1e-9)
