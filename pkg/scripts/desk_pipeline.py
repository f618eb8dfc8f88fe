"""Desk-scale end-to-end run: simulate, report, train, evaluate.

Defaults give N = 10..60 (step 5) with 30 runs each, about 11.5k transits.
Pass --paper-scale for 200 runs per density and 10,000 training epochs.
"""
import argparse
import sys
from pathlib import Path

from skyreserve.cli import main as cli


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--config")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--runs", type=int)
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--paper-scale", action="store_true")
    args = ap.parse_args()

    out = Path(args.out)
    common = ["--config", args.config] if args.config else []
    sim = ["simulate", "--out", str(out / "data"), "--seed", str(args.seed), *common]
    trn = ["train", str(out / "data" / "dataset.csv"), "--out", str(out / "model"), *common]
    if args.runs is not None:
        sim += ["--runs", str(args.runs)]
    if args.epochs is not None:
        trn += ["--epochs", str(args.epochs)]
    if args.paper_scale:
        sim.append("--paper-scale")
        trn.append("--paper-scale")
    steps = [
        sim,
        ["report", str(out / "data" / "dataset.csv"), "--out", str(out / "report")],
        trn,
        ["evaluate", str(out / "model" / "model.ckpt"), str(out / "data" / "dataset.csv"),
         "--out", str(out / "eval")],
    ]
    for argv in steps:
        print("$ skyreserve " + " ".join(argv), flush=True)
        code = cli(argv)
        if code:
            sys.exit(code)


if __name__ == "__main__":
    main()
