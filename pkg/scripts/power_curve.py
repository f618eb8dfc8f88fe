"""Write the cruise power breakdown across the speed envelope as CSV (one row per knot)."""
import argparse

from skyreserve.config import default_config, load_config
from skyreserve.powerplant import best_range_speed
from skyreserve.report import POWER_COLUMNS, power_curve, write_csv
from skyreserve.units import KT, isa_density


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--out", default="power_curve.csv")
    args = ap.parse_args()
    ac = (load_config(args.config) if args.config else default_config()).aircraft
    write_csv(args.out, POWER_COLUMNS, power_curve(ac))
    vbr = best_range_speed(ac, isa_density(ac.cruise_altitude)) / KT
    print(f"wrote {args.out}; best-range speed {vbr:.1f} kt")


if __name__ == "__main__":
    main()
