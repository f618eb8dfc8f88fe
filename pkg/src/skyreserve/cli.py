"""Command-line entry point: simulate, report, train, evaluate, predict.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime or data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, default_config, dump_config, load_config
from .features import DatasetError, FEATURE_NAMES, N_FEATURES, dataset_arrays, read_dataset, records_from_run, \
    write_dataset
from .predictor import TrainingError, evaluate, load_checkpoint, predict_mean, predict_quantile, save_checkpoint, \
    train
from .report import (FRACTION_COLUMNS, HIST_COLUMNS, STATS_COLUMNS, SUMMARY_COLUMNS, conflict_fractions,
                     overhead_histogram, overhead_stats, run_summary, write_csv)
from .simkit import ScenarioInfeasible, batch_runs, initial_features

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
FULL_DENSITIES = tuple(range(10, 61, 5))
FULL_RUNS = 200
FULL_EPOCHS = 10_000
QUANTILES = (0.05, 0.10, 0.50, 0.90, 0.95)


class UsageError(ValueError):
    pass


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out: Path, command: str, argv, cfg_text, seeds, outputs, started):
    manifest = {
        "tool": "skyreserve",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": cfg_text,
        "seeds": seeds,
        "outputs": {str(p): _sha256(p) for p in outputs},
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    path = out / f"{command}_manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _config(args):
    return load_config(args.config) if args.config else default_config()


def _int_list(text):
    try:
        vals = tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise UsageError(f"--densities: expected integers, got {text!r}") from None
    if not vals or min(vals) < 2:
        raise UsageError("--densities: values must be >= 2")
    return vals


def cmd_simulate(args, argv):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    cfg = _config(args)
    densities, runs = cfg.densities, cfg.scenario.runs
    if args.paper_scale:
        densities, runs = FULL_DENSITIES, FULL_RUNS
    if args.densities:
        densities = _int_list(args.densities)
    if args.runs is not None:
        runs = args.runs
    seed = cfg.scenario.seed if args.seed is None else args.seed
    if runs < 1:
        raise UsageError("--runs must be >= 1")
    cfg = replace(cfg, densities=densities, scenario=replace(cfg.scenario, runs=runs, seed=seed))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, results = [], []
    for n in densities:
        t0 = time.perf_counter()
        batch = batch_runs(replace(cfg.scenario, n_aircraft=n), cfg.aircraft)
        results += batch
        for r in batch:
            records += records_from_run(r)
        los = sum(r.los_count for r in batch)
        nmac = sum(r.nmac_count for r in batch)
        _log(f"N={n:3d}  runs={runs}  LoS={los}  NMAC={nmac}  ({time.perf_counter() - t0:.1f} s)")
    dataset = out / "dataset.csv"
    summary = out / "run_summary.csv"
    write_dataset(records, dataset)
    write_csv(summary, SUMMARY_COLUMNS, run_summary(results))
    seeds = {"seed": seed, "derivation": "numpy default_rng([seed, n_aircraft, run])"}
    _write_manifest(out, "simulate", argv, dump_config(cfg), seeds, [dataset, summary], started)
    print(f"wrote {len(records)} transit records to {dataset}")
    return EXIT_OK


def cmd_report(args, argv):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    records = read_dataset(args.dataset)
    if not records:
        raise DatasetError(f"{args.dataset}: dataset is empty")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stats = overhead_stats(records)
    paths = [out / "overhead_stats.csv", out / "conflict_fraction.csv", out / "overhead_histogram.csv"]
    write_csv(paths[0], STATS_COLUMNS, stats)
    write_csv(paths[1], FRACTION_COLUMNS, conflict_fractions(records))
    write_csv(paths[2], HIST_COLUMNS, overhead_histogram(records))
    _write_manifest(out, "report", argv, None, {}, paths, started)
    print(f"{'N':>4} {'transits':>9} {'mean%':>8} {'median%':>8} {'P90%':>8} {'P95%':>8} {'max%':>8}")
    for n, cnt, *vals in stats:
        print(f"{n:4d} {cnt:9d} " + " ".join(f"{v:8.3f}" for v in vals))
    return EXIT_OK


def cmd_train(args, argv):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    cfg = _config(args)
    tc = cfg.train
    if args.paper_scale:
        tc = replace(tc, epochs=FULL_EPOCHS)
    if args.epochs is not None:
        tc = replace(tc, epochs=args.epochs)
    if args.seed is not None:
        tc = replace(tc, seed=args.seed)
    cfg = replace(cfg, train=tc)
    x, y, _ = dataset_arrays(read_dataset(args.dataset))
    if x.shape[0] < 10:
        raise DatasetError(f"{args.dataset}: need at least 10 complete transits, found {x.shape[0]}")

    def progress(epoch, tr, va):
        if epoch % 10 == 0:
            _log(f"epoch {epoch:5d}  train NLL {tr:.5f}  val NLL {va:.5f}")

    ckpt = train(x, y, cfg.net, tc, progress=progress)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = out / "model.ckpt"
    log = out / "train_log.csv"
    save_checkpoint(ckpt, model)
    write_csv(log, ("epoch", "train_nll", "val_nll"),
              [(e["epoch"], e["train_nll"], e["val_nll"]) for e in ckpt.log])
    _write_manifest(out, "train", argv, dump_config(cfg), {"seed": tc.seed}, [model, log], started)
    print(f"best epoch {ckpt.best_epoch}, validation NLL {ckpt.best_val_nll:.6f}; wrote {model}")
    return EXIT_OK


def cmd_evaluate(args, argv):
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    ckpt = load_checkpoint(args.checkpoint)
    x, y, meta = dataset_arrays(read_dataset(args.dataset))
    metrics, per, rows = evaluate(ckpt, x, y)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "metrics.csv"
    ppath = out / "predictions.csv"
    mdict = asdict(metrics)
    write_csv(mpath, ("metric", "value"), [(k, v) for k, v in mdict.items()])
    cols = ("n_aircraft", "run", "agent", *per.keys())
    write_csv(ppath, cols, [(*meta[i, :3], *(per[k][j] for k in per)) for j, i in enumerate(rows)])
    _write_manifest(out, "evaluate", argv, None, {}, [mpath, ppath], started)
    for k, v in mdict.items():
        print(f"{k:>14s} {v:.6g}")
    print(f"logged best validation NLL {ckpt.best_val_nll:.6g}")
    return EXIT_OK


def cmd_predict(args, argv):
    ckpt = load_checkpoint(args.checkpoint)
    if args.features:
        try:
            row = np.array([float(v) for v in args.features.replace(",", " ").split()])
        except ValueError:
            raise UsageError("--features: expected numbers") from None
        if row.size != N_FEATURES:
            raise UsageError(f"--features: expected {N_FEATURES} values ({', '.join(FEATURE_NAMES)})")
    else:
        if args.n_aircraft is None:
            raise UsageError("give --features or --n-aircraft with --run and --agent")
        cfg = _config(args)
        seed = cfg.scenario.seed if args.seed is None else args.seed
        sc = replace(cfg.scenario, n_aircraft=args.n_aircraft, seed=seed)
        feats = initial_features(sc, cfg.aircraft, args.run)
        if not 0 <= args.agent < feats.shape[0]:
            raise UsageError(f"--agent must lie in [0, {feats.shape[0] - 1}]")
        row = feats[args.agent]
    pred = ckpt.predict(row)
    print(f"mu_z {pred.mu_z:.6g}  sigma_z {np.sqrt(pred.sigma_z2):.6g}")
    print(f"expected overhead {100 * float(predict_mean(pred.mu_z, pred.sigma_z2)):.3f}%")
    for q in QUANTILES:
        print(f"q{round(q * 100):02d} {100 * float(predict_quantile(pred.mu_z, pred.sigma_z2, q)):.3f}%")
    ub = 100 * float(predict_quantile(pred.mu_z, pred.sigma_z2, 0.90))
    print(f"recommended energy reserve (90% upper bound): {ub:.2f}% above the best-range baseline")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skyreserve", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"skyreserve {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run seeded density sweeps and write the transit dataset")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--densities", help="comma-separated aircraft counts, e.g. 10,30,60")
    s.add_argument("--runs", type=int)
    s.add_argument("--paper-scale", action="store_true", help="N = 10..60 step 5, 200 runs each")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="overhead statistics, conflict fractions, histogram data")
    r.add_argument("dataset")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    t = sub.add_parser("train", help="fit the overhead predictor")
    t.add_argument("dataset")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--paper-scale", action="store_true", help="train for 10,000 epochs")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="validation metrics and per-transit predictions")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    q = sub.add_parser("predict", help="overhead distribution for one transit")
    q.add_argument("checkpoint")
    q.add_argument("--features", help=f"{N_FEATURES} raw feature values, comma-separated")
    q.add_argument("--config")
    q.add_argument("--seed", type=int)
    q.add_argument("--n-aircraft", type=int)
    q.add_argument("--run", type=int, default=0)
    q.add_argument("--agent", type=int, default=0)
    q.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, argv)
    except (ConfigError, UsageError) as exc:
        _log(f"skyreserve: error: {exc}")
        return EXIT_CONFIG
    except (DatasetError, TrainingError, ScenarioInfeasible, ValueError, OSError) as exc:
        _log(f"skyreserve: error: {exc}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
