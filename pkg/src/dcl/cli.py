"""Experiment harness CLI.

Subcommands: train, eval, sweep, oracle, reproduce.  Exit codes: 0 ok,
2 config error, 3 numeric failure, 4 check failure.  DCL_DETERMINISTIC=1
(or --threads N) pins the BLAS thread pool before numpy loads.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_CHECK = 4


def _pin_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(n)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dcl",
                                description="contrastive disentanglement harness")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=str, default=None,
                        help="path to a key=value config file")
        sp.add_argument("--preset", type=str, default=None,
                        help="named preset configuration")
        sp.add_argument("--seed", type=int, default=None,
                        help="override train.seed")
        sp.add_argument("--out", type=str, default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None,
                        help="pin BLAS threads (1 reproduces bit-exactly)")

    t = sub.add_parser("train", help="train one model, emit a run directory")
    common(t)

    e = sub.add_parser("eval", help="re-evaluate a finished run directory")
    e.add_argument("--run", type=str, required=True)
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--threads", type=int, default=None)

    s = sub.add_parser("sweep", help="train across an axis, emit aggregated CSV")
    common(s)
    s.add_argument("--axis", choices=("n", "sigma"), required=True)
    s.add_argument("--values", type=str, required=True,
                   help="comma-separated axis values")
    s.add_argument("--seeds", type=str, default="0,1")
    s.add_argument("--losses", type=str,
                   default="delta-nce,delta-ince,delta-scl,delta-nwj")

    o = sub.add_parser("oracle", help="run a verification suite")
    o.add_argument("--suite", choices=("lemma1", "figure2", "samplers",
                                       "gradcheck"), required=True)
    o.add_argument("--out", type=str, default=None)
    o.add_argument("--seed", type=int, default=None)
    o.add_argument("--threads", type=int, default=None)
    o.add_argument("--fast", action="store_true",
                   help="figure2 only: shorter training for smoke runs")

    r = sub.add_parser("reproduce", help="run a named experiment preset")
    r.add_argument("--preset", choices=("table1-desk", "table2-desk", "figure2",
                                        "table1-full"), required=True)
    r.add_argument("--out", type=str, default=None)
    r.add_argument("--seeds", type=str, default="0,1,2")
    r.add_argument("--threads", type=int, default=None)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if os.environ.get("DCL_DETERMINISTIC") == "1":
        _pin_threads(1)
    if getattr(args, "threads", None):
        _pin_threads(args.threads)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    handler = {"train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep,
               "oracle": cmd_oracle, "reproduce": cmd_reproduce}[args.command]
    return handler(args)


def _load_config(args):
    from .config import ConfigError, load_config, preset_config, RunConfig

    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset_config(args.preset)
    else:
        cfg = RunConfig.default()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_overrides({"train.seed": args.seed})
    return cfg


def _run_dir(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else Path("runs") / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _train_one(cfg, out: Path):
    """Train per config and emit the run directory artifacts."""
    from . import reporting as rep
    from .mixing import save_mixer
    from .models import save_checkpoint
    from .training import TrainingFailure, train, write_history_csv

    space, cond, mixer = cfg.space(), cfg.conditional(), cfg.mixer()
    tcfg = cfg.train_config()
    (out / "config.txt").write_text(cfg.canonical())
    save_mixer(mixer, out / "mixer")
    try:
        result = train(tcfg, space, cond, mixer, progress=True)
    except TrainingFailure as exc:
        if exc.model is not None:
            save_checkpoint(exc.model, out / "checkpoint-last-good")
            write_history_csv(exc.history or [], out / "history.csv")
        (out / "error.json").write_text(json.dumps(
            {"error": str(exc), "last_good_iteration": exc.iteration}, indent=2))
        raise
    save_checkpoint(result.model, out / "checkpoint")
    write_history_csv(result.history, out / "history.csv")
    (out / "metrics.json").write_text(result.final.to_json() + "\n")
    rep.loss_curve_plot(result.losses, out / "loss-curve.svg")
    (out / "wallclock.json").write_text(json.dumps(
        {"seconds": result.wall_seconds,
         "clamp_events": result.clamp_events}, indent=2))
    return result


def cmd_train(args) -> int:
    from .config import ConfigError
    from .training import TrainingFailure

    try:
        cfg = _load_config(args)
        name = args.preset or "run"
        out = _run_dir(args, f"{name}-seed{cfg.get('train.seed')}")
        result = _train_one(cfg, out)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(result.final.to_json())
    print(f"run directory: {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .config import ConfigError, parse_config
    from .models import load_checkpoint
    from .training import evaluate_model

    run = Path(args.run)
    try:
        if not (run / "config.txt").exists():
            raise ConfigError(f"no config.txt under {run}")
        cfg = parse_config((run / "config.txt").read_text(),
                           source=str(run / "config.txt"))
        model = cfg.model()
        load_checkpoint(model, run / "checkpoint")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else cfg.get("train.seed")
    report = evaluate_model(model, cfg.space(), cfg.conditional(), cfg.mixer(),
                            seed, cfg.get("eval.pairs"))
    (run / "metrics-eval.json").write_text(report.to_json() + "\n")
    print(report.to_json())
    return EXIT_OK


def cmd_sweep(args) -> int:
    from . import reporting as rep
    from .config import ConfigError
    from .training import TrainingFailure, train

    try:
        cfg = _load_config(args)
        values = [v for v in args.values.split(",") if v.strip()]
        if not values:
            raise ConfigError("sweep needs a nonempty --values list")
        seeds = [int(v) for v in args.seeds.split(",") if v.strip()]
        losses = [v.strip() for v in args.losses.split(",") if v.strip()]
        axis_vals = [int(v) if args.axis == "n" else float(v) for v in values]
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = _run_dir(args, f"sweep-{args.axis}")
    rows, failures = [], 0
    for value in axis_vals:
        for loss in losses:
            for seed in seeds:
                overrides = {"loss.kind": loss, "train.seed": seed}
                if args.axis == "n":
                    overrides["space.n"] = value
                else:
                    overrides["conditional.sigma"] = str(value)
                cell = cfg.with_overrides(overrides)
                try:
                    result = train(cell.train_config(), cell.space(),
                                   cell.conditional(), cell.mixer())
                    rows.append({"loss": loss, "axis": args.axis, "value": value,
                                 "seed": seed, "mcc": result.final.mcc_mean,
                                 "r2": result.final.r2_mean})
                except TrainingFailure as exc:
                    failures += 1
                    print(f"cell failed (loss={loss} {args.axis}={value} "
                          f"seed={seed}): {exc}", file=sys.stderr)
                rep.write_sweep_csv(rows, out / "sweep.csv")
    if rows:
        rep.sweep_plot(rows, args.axis, out / "sweep.svg")
    print(f"sweep rows: {len(rows)} ({failures} failed cells) -> {out}")
    return EXIT_NUMERIC if failures and not rows else EXIT_OK


def cmd_oracle(args) -> int:
    from . import suites

    seed_kw = {} if args.seed is None else {"seed": args.seed}
    if args.suite == "lemma1":
        verdict = suites.lemma1_suite(**seed_kw)
    elif args.suite == "samplers":
        verdict = suites.samplers_suite(**seed_kw)
    elif args.suite == "gradcheck":
        verdict = suites.gradcheck_suite(**seed_kw)
    else:
        out = args.out or "runs/figure2"
        fast = {"iterations": 2_000, "batch": 256} if args.fast else {}
        verdict = suites.figure2_suite(out_dir=out, **seed_kw, **fast)
        verdict_extra = suites.figure2_suite(out_dir=out, checkerboard=True,
                                             losses=("delta-nce",),
                                             **seed_kw, **fast)
        verdict["checkerboard_variant"] = verdict_extra
    if args.out and args.suite != "figure2":
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{args.suite}.json").write_text(json.dumps(verdict, indent=2))
    elif args.suite == "figure2":
        outdir = Path(args.out or "runs/figure2")
        (outdir / "figure2.json").write_text(json.dumps(verdict, indent=2))
    _print_verdict(verdict)
    return EXIT_OK if verdict["pass"] else EXIT_CHECK


def _print_verdict(verdict: dict) -> None:
    status = "PASS" if verdict["pass"] else "FAIL"
    print(f"[{verdict['suite']}] {status}")
    for check in verdict.get("checks", []):
        flat = {k: v for k, v in check.items() if not isinstance(v, (list, dict))}
        print("  " + json.dumps(flat))


def cmd_reproduce(args) -> int:
    from . import reporting as rep
    from . import suites
    from .config import preset_config
    from .training import TrainingFailure, train

    seeds = [int(v) for v in args.seeds.split(",") if v.strip()]
    if args.preset == "figure2":
        out = args.out or "runs/figure2"
        verdict = suites.figure2_suite(out_dir=out)
        _print_verdict(verdict)
        return EXIT_OK if verdict["pass"] else EXIT_CHECK

    losses = ("delta-nce", "delta-ince", "delta-scl", "delta-nwj")
    if args.preset == "table1-full":
        base = preset_config("table1-full")
        name = "table1-full"
    else:
        base = preset_config("box-simple-beta1-nce")
        name = args.preset
        if args.preset == "table2-desk":
            base = base.with_overrides({"model.alpha_mode": "constant-only"})
    out = _run_dir(args, name)
    rows = []
    for loss in losses:
        for seed in seeds:
            cell = base.with_overrides({
                "loss.kind": loss, "train.seed": seed,
                "loss.k": 32 if loss == "delta-ince" else 0})
            try:
                result = train(cell.train_config(), cell.space(),
                               cell.conditional(), cell.mixer())
            except TrainingFailure as exc:
                print(f"{loss} seed {seed} failed: {exc}", file=sys.stderr)
                continue
            rows.append({"loss": loss, "axis": "seed", "value": float(seed),
                         "seed": seed, "mcc": result.final.mcc_mean,
                         "r2": result.final.r2_mean})
            rep.write_sweep_csv(rows, out / "results.csv")
            print(f"{loss} seed {seed}: mcc={result.final.mcc_mean:.4f} "
                  f"r2={result.final.r2_mean:.4f}")
    medians = {}
    for loss in losses:
        cell = [r["mcc"] for r in rows if r["loss"] == loss]
        if cell:
            import numpy as np
            medians[loss] = {"mcc_median": float(np.median(cell)),
                             "r2_median": float(np.median(
                                 [r["r2"] for r in rows if r["loss"] == loss]))}
    (out / "summary.json").write_text(json.dumps(medians, indent=2))
    print(json.dumps(medians, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
