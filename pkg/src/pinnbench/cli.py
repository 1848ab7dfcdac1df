"""Command-line interface.

Subcommands: ``fdm`` (reference data generation), ``train`` (one scenario),
``bench`` (scenario suite), ``eval`` (checkpoint vs stored field), ``infer``
(dump a prediction), ``report`` (render figures from run artifacts).

Every numeric result is printed both in a human block and as
machine-parseable ``key=value`` lines.  Exit codes are a stable contract:
0 success, 2 usage/config error, 3 stability violation, 4 divergence.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from ._version import __version__
from .config import ConfigError, load_scenario, load_suite, write_manifest
from .domain import (GridSpec, StabilityViolation, add_field_noise,
                     check_stability, solve_fdm)
from .experiment import (RESULTS_COLUMNS, relative_l2_error, run_scenario,
                         benchmark_suite, infer_field, write_results_csv)
from .fieldio import read_field, write_csv, write_snapshot, write_solution
from .network import load_checkpoint
from .optimizer import DivergenceDetected
from .report import render_run_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STABILITY = 3
EXIT_DIVERGENCE = 4


def _kv(key: str, value) -> None:
    if isinstance(value, float):
        print(f"{key}={value:.10g}")
    else:
        print(f"{key}={value}")


def _global_overrides(args) -> dict:
    over: dict = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.precision is not None:
        over["network.precision"] = args.precision
    if getattr(args, "deterministic", False):
        over["deterministic"] = True
    if getattr(args, "iterations", None) is not None:
        over["adam.iterations"] = args.iterations
    return over


def _out_dir(args, command: str) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path("pinnbench-out") / command


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_fdm(args) -> int:
    cfg = load_scenario(args.config, _global_overrides(args)) if args.config \
        else load_scenario_from_empty(args)
    out = _out_dir(args, "fdm")
    write_manifest(out, args.config, cfg, "fdm")

    report = check_stability(cfg.domain, cfg.grid)
    for key, value in report.as_dict().items():
        _kv(f"stability.{key}", value)
    _kv("stability.passed", report.passed)
    if not report.passed:
        for reason in report.failures():
            print(f"stability violation: {reason}", file=sys.stderr)
        if not args.force:
            return EXIT_STABILITY
        print("WARNING: --force set, solving on an unstable grid", file=sys.stderr)

    t0 = time.perf_counter()
    clean = solve_fdm(cfg.domain, cfg.grid, force=True)
    fdm_s = time.perf_counter() - t0
    noisy = add_field_noise(clean, cfg.noise)
    write_solution(clean, out / "field_clean")
    write_solution(noisy, out / "field_noisy", noise=cfg.noise)
    if args.csv:
        write_csv(clean, out / "field_clean.csv")
        write_csv(noisy, out / "field_noisy.csv")
    _kv("n_points", clean.n_points)
    _kv("fdm_s", fdm_s)
    _kv("out_dir", out)
    print(f"wrote clean + noisy fields ({clean.n_points} values each) to {out}")
    return EXIT_OK


def load_scenario_from_empty(args):
    from .config import resolve_scenario
    return resolve_scenario({}, _global_overrides(args))


def cmd_train(args) -> int:
    cfg = load_scenario(args.config, _global_overrides(args)) if args.config \
        else load_scenario_from_empty(args)
    out = _out_dir(args, "train")
    write_manifest(out, args.config, cfg, "train")
    try:
        result = run_scenario(cfg, out, force=args.force,
                              resume_from=args.resume)
    except StabilityViolation as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_STABILITY
    except DivergenceDetected as err:
        print(f"error: {err} (trace preserved)", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ValueError as err:  # bad resume target and similar usage errors
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    write_results_csv([result], out / "results.csv")
    _kv("name", result.name)
    _kv("final_loss", result.final_loss)
    _kv("last_loss", result.last_loss)
    _kv("rel_l2", result.rel_l2_error)
    _kv("ic_mse", result.ic_mse)
    _kv("train_s", result.train_time)
    _kv("fdm_s", result.fdm_time)
    _kv("infer_s", result.inference_time)
    print(f"\n{result.name}: final_loss={result.final_loss:.5g} "
          f"rel_l2={result.rel_l2_error:.5g} train={result.train_time:.5g}s "
          f"infer={result.inference_time:.5g}s")
    return EXIT_OK


def cmd_bench(args) -> int:
    configs = load_suite(args.config, _global_overrides(args))
    out = _out_dir(args, "bench")
    write_manifest(out, args.config, configs, "bench")
    results = benchmark_suite(configs, out, force=args.force)

    widths = [34, 9, 11, 10, 7, 12, 9, 9, 8, 8]
    header = ["name", "arch", "optimizer", "iterations", "lr",
              "final_loss", "rel_l2", "train_s", "fdm_s", "infer_s"]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in results:
        row = [r.name, r.arch, r.optimizer, str(r.iterations), f"{r.lr:g}",
               f"{r.final_loss:.5g}", f"{r.rel_l2_error:.5g}",
               f"{r.train_time:.5g}", f"{r.fdm_time:.5g}",
               f"{r.inference_time:.5g}"]
        print("  ".join(c.ljust(w) for c, w in zip(row, widths))
              + ("" if r.status == "ok" else f"  [{r.status}]"))
        _kv(f"result.{r.name}.rel_l2", r.rel_l2_error)
        _kv(f"result.{r.name}.final_loss", r.final_loss)
        _kv(f"result.{r.name}.status", r.status)
    _kv("results_csv", out / "results.csv")
    return EXIT_OK


def cmd_eval(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    ff = read_field(args.field)
    if args.time is not None:
        t = float(args.time)
        level = int(np.argmin(np.abs(ff.times - t)))
        if abs(ff.times[level] - t) > 1e-9 and len(ff.times) > 1:
            print(f"note: using nearest stored level t={ff.times[level]:g}",
                  file=sys.stderr)
    else:
        level = len(ff.times) - 1
        t = float(ff.times[level])
    ref = ff.values[level]

    grid = GridSpec(nx=ff.nx, ny=ff.ny, nt=1)
    pred, infer_s = infer_field(params, ff.spec, grid, float(ff.times[level]))
    try:
        err = relative_l2_error(pred, ref)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _kv("t", float(ff.times[level]))
    _kv("rel_l2", err)
    _kv("infer_s", infer_s)
    if args.dump:
        write_snapshot(pred, float(ff.times[level]), ff.spec, Path(args.dump))
        _kv("dumped", args.dump)
    print(f"relative L2 error at t={ff.times[level]:g}: {err:.5g} "
          f"(inference {infer_s:.5g}s)")
    return EXIT_OK


def cmd_infer(args) -> int:
    params, _ = load_checkpoint(args.checkpoint)
    nx, ny = args.nx, args.ny
    from .domain import DomainSpec
    spec = DomainSpec()
    grid = GridSpec(nx=nx, ny=ny, nt=1)
    t = args.time if args.time is not None else spec.t_final
    pred, infer_s = infer_field(params, spec, grid, t)
    out = _out_dir(args, "infer")
    base = out / f"pinn_t{t:g}"
    write_snapshot(pred, t, spec, base)
    _kv("t", t)
    _kv("infer_s", infer_s)
    _kv("field", base)
    return EXIT_OK


def cmd_report(args) -> int:
    target = Path(args.dir)
    if not target.exists():
        print(f"error: no such directory {target}", file=sys.stderr)
        return EXIT_CONFIG
    produced = render_run_report(target)
    for p in produced:
        _kv("figure", p)
    print(f"rendered {len(produced)} figure(s) under {target}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinnbench",
        description="Benchmark a physics-informed network against an "
                    "advection-diffusion finite-difference reference.",
    )
    parser.add_argument("--version", action="version", version=__version__)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="master seed override")
    common.add_argument("--deterministic", action="store_true",
                        help="record and require bit-stable execution")
    common.add_argument("--precision", choices=("single", "double"),
                        default=None, help="network precision override")
    common.add_argument("--out", type=str, default=None,
                        help="output directory")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fdm", parents=[common],
                       help="generate the clean + noisy reference fields")
    p.add_argument("config", nargs="?", help="scenario config (YAML)")
    p.add_argument("--force", action="store_true",
                   help="solve even if the stability check fails")
    p.add_argument("--csv", action="store_true",
                   help="also write t,x,y,u CSVs")
    p.set_defaults(fn=cmd_fdm)

    p = sub.add_parser("train", parents=[common], help="train one scenario")
    p.add_argument("config", nargs="?", help="scenario config (YAML)")
    p.add_argument("--iterations", type=int, default=None,
                   help="override adam.iterations")
    p.add_argument("--force", action="store_true")
    p.add_argument("--resume", type=str, default=None,
                   help="checkpoint base to resume from (adam/adamw only)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("bench", parents=[common], help="run a scenario suite")
    p.add_argument("config", help="suite config (YAML with scenarios list)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("eval", parents=[common],
                       help="relative L2 error of a checkpoint vs a stored field")
    p.add_argument("checkpoint", help="checkpoint base path (without .ckpt.json)")
    p.add_argument("field", help="field base path (without .meta.json)")
    p.add_argument("--time", type=float, default=None,
                   help="time level to compare (default: last stored)")
    p.add_argument("--dump", type=str, default=None,
                   help="also write the predicted field to this base path")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("infer", parents=[common],
                       help="dump a full-field prediction at one time")
    p.add_argument("checkpoint", help="checkpoint base path")
    p.add_argument("--time", type=float, default=None)
    p.add_argument("--nx", type=int, default=51)
    p.add_argument("--ny", type=int, default=51)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("report", parents=[common],
                       help="render figures from a run directory")
    p.add_argument("dir", help="output directory of a previous run")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StabilityViolation as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_STABILITY


if __name__ == "__main__":
    sys.exit(main())
