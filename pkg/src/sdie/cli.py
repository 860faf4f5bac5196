"""Command line interface.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 failed
property battery.
"""
import argparse
import csv
import os
import sys
from dataclasses import fields

import numpy as np

from . import bench
from .config import RunConfig
from .engine import save_labels
from .exceptions import InputError, NumericalError
from .imgpipe import load_image, save_image, synthetic_image
from .oracle import verify_theorems
from .pipeline import build_problem, load_inputs, montecarlo, segment

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_BATTERY = 0, 1, 2, 3


def _add_run_flags(parser):
    parser.add_argument("--config", help="key = value configuration file")
    for f in fields(RunConfig):
        kind = {"int": int, "float": float}.get(
            f.type if isinstance(f.type, str) else f.type.__name__, str)
        parser.add_argument("--" + f.name.replace("_", "-"), dest=f.name,
                            type=kind, default=None)


def _run_config(args):
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)
                 if getattr(args, f.name) is not None}
    if args.config:
        return RunConfig.load(args.config, **overrides)
    return RunConfig.from_mapping(overrides)


def _write_csv(path, fieldnames, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _write_metadata(path, cfg, results):
    with open(path, "w") as fh:
        fh.write(cfg.to_text())
        for key, value in results.items():
            fh.write(f"# result.{key} = {value}\n")


def cmd_segment(args):
    cfg = _run_config(args)
    inputs = load_inputs(cfg)
    problem, truth = build_problem(cfg, inputs)
    result = segment(cfg, problem, truth)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    target = inputs[2].data
    save_image(result.mask.astype(float), os.path.join(out, "labels.png"))
    save_image(target * result.mask[:, :, None],
               os.path.join(out, "masked_target.png"))
    save_labels(result.u, os.path.join(out, "u.bin"))
    summary = dict(iterations=result.n_iter, converged=result.converged,
                   wall_time_seconds=f"{result.seconds:.4f}")
    if result.error is not None:
        summary["relative_segmentation_error"] = f"{result.error:.6f}"
    _write_metadata(os.path.join(out, "metadata.txt"), cfg, summary)
    for key, value in summary.items():
        print(f"{key}: {value}")
    return EXIT_OK


def cmd_montecarlo(args):
    cfg = _run_config(args)
    inputs = load_inputs(cfg)
    problem, truth = build_problem(cfg, inputs)
    runs, mean, std = montecarlo(cfg, problem, args.repeats, truth,
                                 n_jobs=args.jobs)
    out = cfg.output_dir
    os.makedirs(out, exist_ok=True)
    target = inputs[2].data
    # std of a 0/1 variable is at most 1/2
    save_image(mean, os.path.join(out, "mean.png"))
    save_image(2 * std, os.path.join(out, "std.png"))
    save_image(target * mean[:, :, None],
               os.path.join(out, "mean_weighted_target.png"))
    save_image(target * (2 * std)[:, :, None],
               os.path.join(out, "std_weighted_target.png"))
    np.save(os.path.join(out, "mean.npy"), mean)
    np.save(os.path.join(out, "std.npy"), std)
    rows = [dict(run=i, iterations=r.n_iter, converged=r.converged,
                 error="" if r.error is None else f"{r.error:.6f}",
                 seconds=f"{r.seconds:.4f}") for i, r in enumerate(runs)]
    _write_csv(os.path.join(out, "runs.csv"),
               ["run", "iterations", "converged", "error", "seconds"], rows)
    summary = dict(repeats=args.repeats, max_std=float(std.max()),
                   mean_std=float(std.mean()))
    _write_metadata(os.path.join(out, "metadata.txt"), cfg, summary)
    for key, value in summary.items():
        print(f"{key}: {value}")
    return EXIT_OK


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}")


def cmd_bench_lowrank(args):
    img = load_image(args.image) if args.image else synthetic_image(80)
    rows = bench.bench_lowrank(img, args.Ks, args.repeats, args.seed,
                               args.sigma)
    _write_csv(args.output, bench.LOWRANK_FIELDS, rows)
    for (method, K), (mean, std, count) in sorted(
            bench.summarize_lowrank(rows).items(), key=lambda x: x[0][::-1]):
        print(f"{method:<16} K={K:<4d} mean={mean:.6e} std={std:.3e} "
              f"n={count}")
    return EXIT_OK


def cmd_bench_expm(args):
    rows = bench.bench_expm(args.n, args.tau, args.ks, args.rank, args.seed)
    _write_csv(args.output, bench.EXPM_FIELDS, rows)
    for scheme, order in bench.expm_orders(rows).items():
        print(f"{scheme:<8} fitted order {order:.3f}")
    return EXIT_OK


def cmd_bench_b(args):
    Ks = [None if K == 0 else K for K in args.Ks]
    rows = bench.bench_b(args.n, args.taus, Ks, args.seed, args.k_b, args.m)
    _write_csv(args.output, bench.B_FIELDS, rows)
    for r in rows:
        print(f"{r['b_method']:<18} tau={r['tau']:<5g} K={r['K']:<4d} "
              f"rel_error={r['rel_l2_error']:.3e}")
    return EXIT_OK


def cmd_verify(args):
    report = verify_theorems(args.seed, (args.n_min, args.n_max), args.trials)
    print(report.to_text())
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(report.to_csv())
    return EXIT_OK if report.passed else EXIT_BATTERY


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdie", description="Graph segmentation by the SDIE scheme.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment a target image")
    _add_run_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("montecarlo", help="repeat segmentation over seeds")
    _add_run_flags(p)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_montecarlo)

    p = sub.add_parser("bench-lowrank", help="low-rank accuracy benchmark")
    p.add_argument("--image", help="image file (default: builtin 80x80)")
    p.add_argument("--Ks", type=_int_list, default=[50, 100, 150, 200, 250,
                                                     300])
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--sigma", type=float, default=70.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", default="bench_lowrank.csv")
    p.set_defaults(func=cmd_bench_lowrank)

    p = sub.add_parser("bench-expm", help="propagator convergence orders")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--ks", type=_int_list,
                   default=[2 ** j for j in range(9)])
    p.add_argument("--rank", choices=["full", "reduced"], default="full")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", default="bench_expm.csv")
    p.set_defaults(func=cmd_bench_expm)

    p = sub.add_parser("bench-b", help="accuracy of the b-methods")
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--taus", type=_float_list, default=[0.5, 4.0])
    p.add_argument("--Ks", type=_int_list, default=[0],
                   help="ranks; 0 means full rank")
    p.add_argument("--k-b", dest="k_b", type=int, default=64)
    p.add_argument("--m", type=int, default=128)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", default="bench_b.csv")
    p.set_defaults(func=cmd_bench_b)

    p = sub.add_parser("verify", help="run the numerical property battery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--n-min", type=int, default=6)
    p.add_argument("--n-max", type=int, default=12)
    p.add_argument("--output", help="CSV report path")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
