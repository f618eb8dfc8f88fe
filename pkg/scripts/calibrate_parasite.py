"""Tune the parasite-drag calibration factor so that V_br = 157 kt at 2000 ft.

Run once; the printed factor is what configs/default.cfg ships with.
"""
import argparse

from scipy.optimize import brentq

from skyreserve.powerplant import AircraftConfig, best_range_speed
from skyreserve.units import KT, isa_density


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--target-kt", type=float, default=157.0)
    args = ap.parse_args()

    base = AircraftConfig()
    rho = isa_density(base.cruise_altitude)

    def gap(k):
        cfg = base.with_(parasite_calibration_factor=k)
        return best_range_speed(cfg, rho, tol=1e-5) / KT - args.target_kt

    k = brentq(gap, 0.05, 1.0, xtol=1e-8)
    cfg = base.with_(parasite_calibration_factor=k)
    print(f"parasite_calibration_factor = {k:.6f}")
    print(f"V_br = {best_range_speed(cfg, rho) / KT:.3f} kt")


if __name__ == "__main__":
    main()
