"""Compare batch median overheads at dt = 1 s and dt = 0.1 s.

The step size is acceptable when the medians differ by at most 0.1
percentage point at every density.
"""
import argparse
from dataclasses import replace

import numpy as np

from skyreserve.config import default_config
from skyreserve.simkit import batch_runs


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--densities", default="10,30,60")
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    cfg = default_config()
    worst = 0.0
    for n in (int(x) for x in args.densities.split(",")):
        med = {}
        for dt in (1.0, 0.1):
            sc = replace(cfg.scenario, n_aircraft=n, runs=args.runs, seed=args.seed, dt=dt)
            d = np.concatenate([r.complete_overheads() for r in batch_runs(sc, cfg.aircraft)]) * 100
            med[dt] = float(np.median(d))
        gap = abs(med[1.0] - med[0.1])
        worst = max(worst, gap)
        print(f"N={n:3d}  median dt=1: {med[1.0]:.4f}%  dt=0.1: {med[0.1]:.4f}%  gap {gap:.4f} pp")
    print(f"largest gap {worst:.4f} pp ({'within' if worst <= 0.1 else 'exceeds'} 0.1 pp)")


if __name__ == "__main__":
    main()
