"""Command-line front end: ``lvm-infomax <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .core import STRATEGIES, CandidateSet, ExperimentConfig, ExperimentLog, RngStream, TrialRecord, \
    build_candidate_set, load_housing_pool, log_append
from .fisher import fisher_angle_scan
from .harness import PRESETS, get_preset, make_simulator, run_replicated, run_state_decoding_eval, \
    sample_posterior, simulate_response, write_histogram_csv, write_metrics_csv
from .infomax import select_input
from .params import MlrParams

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(Exception):
    pass


def _progress(quiet: bool):
    if quiet:
        return None

    def show(row):
        print(f"trial={row.t} strategy={row.strategy} entropy={row.entropy:.6g}", flush=True)

    return show


def _resolve(args, default_preset: str | None = None):
    """(config, strategies, n_reps) from --config or --preset plus overrides."""
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            config = ExperimentConfig.load(path)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"invalid config {path}: {exc}") from None
        strategies, n_reps = (config.strategy,), 1
    else:
        name = args.preset or default_preset
        if name is None:
            raise ConfigError("either --preset or --config is required")
        try:
            preset = get_preset(name)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        config, strategies, n_reps = preset.config, preset.strategies, preset.n_reps
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "T", None) is not None:
        changes["T"] = args.T
    try:
        config = config.replace(**changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if getattr(args, "strategies", None):
        strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
        bad = [s for s in strategies if s not in STRATEGIES]
        if bad or not strategies:
            raise ConfigError(f"unknown strategies {bad}; choose from {', '.join(STRATEGIES)}")
    if getattr(args, "reps", None) is not None:
        if args.reps < 1:
            raise ConfigError("--reps must be >= 1")
        n_reps = args.reps
    return config, strategies, n_reps


def _write_curves_dir(out: Path, config: ExperimentConfig, curves, D: int) -> None:
    """Top-level files: rep-0 metrics per strategy, pooled histograms, curves; full runs under runs/."""
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.txt")
    first = next(iter(curves.runs.values()))[0]
    first.log.save(out / "log.csv")
    write_metrics_csv(out / "metrics.csv", [r for reps in curves.runs.values() for r in reps[0].metrics], D)
    hists = {}
    for strat, reps in curves.runs.items():
        h = None
        for r in reps:
            hr = r.histogram(infomax_only=strat != "random")
            if hr is not None:
                h = hr if h is None else {**h, "counts": h["counts"] + hr["counts"], "n": h["n"] + hr["n"]}
        hists[strat] = h
    write_histogram_csv(out / "histogram.csv", hists, first.candidates)
    curves.save(out / "curves.csv")
    for strat, reps in curves.runs.items():
        for i, r in enumerate(reps):
            r.save(out / "runs" / strat / f"rep{i:03d}")


def cmd_simulate(args) -> int:
    config, strategies, n_reps = _resolve(args)
    if config.truth() is None:
        raise ConfigError("simulate needs true_weights in the config")
    curves = run_replicated(config, n_reps=n_reps, strategies=strategies, n_jobs=args.jobs,
                            progress=_progress(args.quiet))
    _write_curves_dir(Path(args.out), config, curves, config.D)
    return EXIT_OK


def cmd_pool(args) -> int:
    config, strategies, n_reps = _resolve(args, default_preset="housing")
    src = Path(args.pool)
    if not src.is_file():
        raise ConfigError(f"pool file not found: {src}")
    try:
        if args.format == "housing":
            pool = load_housing_pool(src, n_rows=args.rows, seed=args.pool_seed)
        else:
            pool = CandidateSet.load(src, kind="pool")
    except ValueError as exc:
        raise ConfigError(f"cannot read pool {src}: {exc}") from None
    if pool.D != config.D:
        config = config.replace(D=pool.D)
    if config.T > len(pool):
        raise RuntimeError(f"pool exhausted: {config.T} queries requested from {len(pool)} rows")
    curves = run_replicated(config, n_reps=n_reps, strategies=strategies, pool=pool, n_jobs=args.jobs,
                            progress=_progress(args.quiet))
    _write_curves_dir(Path(args.out), config, curves, pool.D)
    return EXIT_OK


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError(f"malformed {what} list: {text!r}") from None
    if not vals or any(not np.isfinite(v) or v <= 0 for v in vals):
        raise ConfigError(f"malformed {what} list: {text!r}")
    return vals


def cmd_fisher_scan(args) -> int:
    sig = _parse_floats(args.sigma_sq, "sigma_sq")
    if args.config or args.preset:
        config, _, _ = _resolve(args)
        model = config.truth()
        if config.family != "mlr" or model is None:
            raise ConfigError("fisher-scan needs an MLR config with true_weights")
    else:
        model = MlrParams(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0.5, 0.5]), 0.1)
    if model.D != 2:
        raise ConfigError(f"fisher-scan needs a 2-D model, got D={model.D}")
    if args.angle_step <= 0 or not np.isclose(360.0 / args.angle_step, round(360.0 / args.angle_step)):
        raise ConfigError("--angle-step must divide 360")
    angles = np.arange(int(round(360.0 / args.angle_step))) * args.angle_step
    rows = fisher_angle_scan(model, angles, sig, args.n, RngStream(args.seed if args.seed is not None else 0))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg", "sigma_sq", "trace", "stderr"])
        for r in rows:
            w.writerow([repr(float(r["angle_deg"])), repr(float(r["sigma_sq"])), repr(float(r["trace"])),
                        repr(float(r["stderr"]))])
    return EXIT_OK


def cmd_decode(args) -> int:
    config, _, _ = _resolve(args, default_preset="iohmm3")
    if config.family != "iohmm" or config.truth() is None:
        raise ConfigError("decode needs an IO-HMM config with true_weights and true_trans")
    reps = args.reps if args.reps is not None else 1
    res = run_state_decoding_eval(config, args.train_T, args.eval_T, RngStream(config.seed), n_reps=reps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.txt")
    res.save(out / "decode.csv")
    res.save_accuracy(out / "accuracy.csv")
    for model in res.accuracy:
        print(f"model={model} accuracy={res.mean(model):.4f}", flush=True)
    return EXIT_OK


def cmd_chains_bench(args) -> int:
    config, _, _ = _resolve(args, default_preset="iohmm3")
    if config.truth() is None:
        raise ConfigError("chains-bench needs the generative truth to simulate data")
    C = args.chains
    if C < 1 or config.M % C:
        raise ConfigError(f"M={config.M} must be divisible by --chains {C}")
    stream = RngStream(config.seed)
    cands = build_candidate_set(config.candidates)
    sim = make_simulator(config.truth(), stream.child(1))
    g = stream.child(3).generator
    log = ExperimentLog(cands.D, binary=config.family != "mlr")
    for t in range(args.trials):
        x = cands.inputs[g.integers(len(cands))]
        y, sim = simulate_response(sim, x)
        log = log_append(log, TrialRecord(t + 1, x, y))
    rows = []
    base = None
    for n_chains in (1, C) if C > 1 else (1,):
        burn = config.burn_in if n_chains == 1 else args.chain_burn_in
        cfg = config.replace(n_chains=n_chains, burn_in=burn)
        times = []
        for rep in range(args.repeats):
            t0 = time.perf_counter()
            samples = sample_posterior(log, cfg, stream.child(50, n_chains, rep))
            select_input(samples, cands)
            times.append((time.perf_counter() - t0) * 1e3)
        ms = float(np.median(times))
        base = ms if base is None else base
        rows.append((n_chains, config.M // n_chains, burn, ms, base / ms))
        print(f"chains={n_chains} wall_ms_per_trial={ms:.1f} speedup={base / ms:.2f}", flush=True)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chains", "samples_per_chain", "burn_in", "wall_ms_per_trial", "speedup"])
        w.writerows(rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    presets = "\n".join(f"  {p.name:<14} {p.description}" for p in PRESETS.values())
    parser = argparse.ArgumentParser(
        prog="lvm-infomax",
        description="Infomax input selection for mixture and hidden-Markov latent variable models.",
        epilog=f"presets:\n{presets}",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, reps=True, strategies=True):
        p.add_argument("--preset", choices=sorted(PRESETS), help="named experiment preset")
        p.add_argument("--config", help="flat key = value config file (overrides --preset)")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--T", type=int, help="number of trials override")
        if strategies:
            p.add_argument("--strategies", help="comma-separated strategies: " + ", ".join(STRATEGIES))
        if reps:
            p.add_argument("--reps", type=int, help="replications override")
        p.add_argument("--quiet", action="store_true", help="suppress per-trial progress lines")

    p = sub.add_parser("simulate", help="closed-loop simulated experiment")
    common(p)
    p.add_argument("--out", default="run", help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="concurrent replications")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pool", help="pool-based active learning on a CSV dataset")
    common(p)
    p.add_argument("--pool", required=True, help="CSV file (raw predictors + target, or y,x0,... pool format)")
    p.add_argument("--format", choices=("housing", "pool"), default="housing")
    p.add_argument("--rows", type=int, default=5000, help="rows subsampled from a raw CSV")
    p.add_argument("--pool-seed", type=int, default=0)
    p.add_argument("--out", default="pool_run")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("fisher-scan", help="Fisher information trace versus input angle")
    common(p, reps=False, strategies=False)
    p.add_argument("--sigma-sq", default="0.1,0.5,1.0", help="comma-separated noise variances")
    p.add_argument("--angle-step", type=float, default=10.0)
    p.add_argument("--n", type=int, default=100_000, help="Monte-Carlo draws per grid point")
    p.add_argument("--out", default="fisher_scan.csv")
    p.set_defaults(func=cmd_fisher_scan)

    p = sub.add_parser("decode", help="latent-state decoding with infomax- vs random-trained models")
    common(p, strategies=False)
    p.add_argument("--train-T", type=int, default=400)
    p.add_argument("--eval-T", type=int, default=100)
    p.add_argument("--out", default="decode_run")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("chains-bench", help="per-trial wall clock, one chain versus C parallel chains")
    common(p, reps=False, strategies=False)
    p.add_argument("--chains", type=int, default=5)
    p.add_argument("--chain-burn-in", type=int, default=40)
    p.add_argument("--trials", type=int, default=300, help="simulated trials in the benchmark log")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", default="chains_bench.csv")
    p.set_defaults(func=cmd_chains_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
