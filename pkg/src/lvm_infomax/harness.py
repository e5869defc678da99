"""Closed-loop and pool-based experiment drivers, presets, replication and chain orchestration."""

from __future__ import annotations

import csv
import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import (
    CandidateSet,
    ExperimentConfig,
    ExperimentLog,
    RngStream,
    TrialRecord,
    as_stream,
    build_candidate_set,
    log_append,
)
from .infomax import MetricRow, aligned_rmse, posterior_entropy, select_input, selection_histogram
from .iohmm import (
    GlmPrior,
    bias_to_augmented,
    decode_states,
    glm_mismatch_posterior,
    iohmm_gibbs_run,
    iohmm_vi_run,
    iohmm_vi_sample,
    mglm_gibbs_run,
)
from .mlr import mlr_em_fit, mlr_gibbs_run, mlr_vi_run, mlr_vi_sample
from .params import IoHmmParams, MglmParams, MlrParams, ParamSampleSet

__all__ = [
    "ExperimentPreset",
    "PRESETS",
    "get_preset",
    "SimulatorState",
    "make_simulator",
    "simulate_response",
    "RunResult",
    "Curves",
    "run_closed_loop",
    "run_pool",
    "reference_fit",
    "run_replicated",
    "replication_seeds",
    "run_parallel_chains",
    "sample_posterior",
    "DecodingResult",
    "run_state_decoding_eval",
]

logger = logging.getLogger(__name__)

ProgressFn = Callable[[MetricRow], None]


# ---------------------------------------------------------------------------
# presets


@dataclass(frozen=True)
class ExperimentPreset:
    """Named experiment: the config (truth included), strategies to compare and replication count."""

    name: str
    config: ExperimentConfig
    strategies: tuple[str, ...]
    n_reps: int
    description: str = ""

    def truth(self):
        return self.config.truth()


def _iohmm3_config(**kw) -> ExperimentConfig:
    A = np.full((3, 3), 0.025) + 0.925 * np.eye(3)
    W = np.array([bias_to_augmented(5.0, 0.0), bias_to_augmented(1.0, 3.0), bias_to_augmented(1.0, -3.0)])
    base = dict(
        family="iohmm", K=3, D=1, T=1000, M=500, burn_in=200, candidates="line:-5:5:0.01",
        true_weights=W, true_trans=A, true_mix=np.full(3, 1.0 / 3.0),
        label="artifact-chosen values approximating a graphical figure",
    )
    base.update(kw)
    return ExperimentConfig(**base)


def _build_presets() -> dict[str, ExperimentPreset]:
    mlr10_w = np.zeros((2, 10))
    mlr10_w[0, 0] = 1.0
    mlr10_w[1, 1] = 1.0
    presets = [
        ExperimentPreset(
            "mlr2d",
            ExperimentConfig(family="mlr", K=2, D=2, T=200, M=500, burn_in=100, candidates="circle:10",
                             true_weights=np.array([[-1.0, 0.0], [1.0, 0.0]]), true_mix=np.array([0.6, 0.4]),
                             noise_var=0.1),
            ("random", "infomax-gibbs", "infomax-vi"), 20,
            "2-state MLR, unit-circle inputs 10 degrees apart",
        ),
        ExperimentPreset(
            "mlr10d",
            ExperimentConfig(family="mlr", K=2, D=10, T=200, M=500, burn_in=100, candidates="sphere:1000:10:0",
                             true_weights=mlr10_w, true_mix=np.array([0.6, 0.4]), noise_var=0.1),
            ("random", "infomax-gibbs", "infomax-vi"), 20,
            "2-state MLR in 10-D, 1000 inputs uniform on the unit sphere",
        ),
        ExperimentPreset(
            "iohmm3", _iohmm3_config(),
            ("random", "infomax-gibbs", "infomax-vi", "infomax-glm-mismatch"), 5,
            "3-state Bernoulli IO-HMM, scalar stimuli on [-5, 5] step 0.01; 500 draws after 200 burn-in",
        ),
        ExperimentPreset(
            "iohmm3-short", _iohmm3_config(M=400, burn_in=100),
            ("random", "infomax-gibbs"), 5,
            "iohmm3 with 500 sweeps, 100 discarded",
        ),
        ExperimentPreset(
            "iohmm3-chains", _iohmm3_config(n_chains=5, burn_in=40),
            ("random", "infomax-gibbs"), 5,
            "iohmm3 with 5 parallel chains of 100 draws after 40 burn-in",
        ),
        ExperimentPreset(
            "mglm2",
            ExperimentConfig(family="mglm", K=2, D=1, T=1000, M=500, burn_in=200, candidates="line:-5:5:0.01",
                             true_weights=np.array([[3.0, -6.0], [3.0, 6.0]]), true_mix=np.array([0.6, 0.4])),
            ("random", "infomax-gibbs"), 5,
            "2-state mixture of Bernoulli GLMs",
        ),
        ExperimentPreset(
            "housing",
            ExperimentConfig(family="mlr", K=3, D=9, T=500, M=500, burn_in=100, candidates="housing:housing.csv",
                             warmup=10),
            ("random", "infomax-gibbs"), 10,
            "3-state MLR on a 5000-row standardized housing pool (8 predictors + intercept)",
        ),
    ]
    return {p.name: p for p in presets}


PRESETS = _build_presets()


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


# ---------------------------------------------------------------------------
# simulator


@dataclass
class SimulatorState:
    """Generative truth plus the current latent state.

    Latent draws and emission noise use separate generators, so the latent
    path of an IO-HMM does not depend on which inputs were chosen.
    """

    truth: object
    z: int
    latent_rng: np.random.Generator
    noise_rng: np.random.Generator
    t: int = 0


def make_simulator(truth, rng) -> SimulatorState:
    s = as_stream(rng)
    lat = s.child(1).generator
    noise = s.child(2).generator
    z = 0
    if isinstance(truth, IoHmmParams):
        z = int(lat.choice(truth.K, p=truth.pi0))
    return SimulatorState(truth, z, lat, noise)


def _logistic(a: float) -> float:
    return float(0.5 * (1.0 + np.tanh(0.5 * a)))


def simulate_response(state: SimulatorState, x) -> tuple[float, SimulatorState]:
    """Draw the system's output at input ``x`` and advance the latent state.

    MLR: z ~ Cat(pi), y ~ N(x.w_z, sigma^2). MGLM: z ~ Cat(pi), Bernoulli
    emission. IO-HMM: Bernoulli emission from the current z, then z moves
    along row z of A.
    """
    truth = state.truth
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if isinstance(truth, MlrParams):
        z = int(state.latent_rng.choice(truth.K, p=truth.pi))
        y = float(x @ truth.weights[z] + np.sqrt(truth.sigma_sq) * state.noise_rng.standard_normal())
        return y, dataclasses.replace(state, z=z, t=state.t + 1)
    xd = np.append(x, 1.0) if truth.weights.shape[1] == x.size + 1 else x
    if isinstance(truth, MglmParams):
        z = int(state.latent_rng.choice(truth.K, p=truth.pi))
        y = float(state.noise_rng.random() < _logistic(xd @ truth.weights[z]))
        return y, dataclasses.replace(state, z=z, t=state.t + 1)
    if isinstance(truth, IoHmmParams):
        z = state.z
        y = float(state.noise_rng.random() < _logistic(xd @ truth.weights[z]))
        nxt = int(state.latent_rng.choice(truth.K, p=truth.A[z]))
        return y, dataclasses.replace(state, z=nxt, t=state.t + 1)
    raise TypeError(f"cannot simulate {type(truth).__name__}")


# ---------------------------------------------------------------------------
# inference dispatch


def _sampler(family: str):
    return {"mlr": mlr_gibbs_run, "iohmm": iohmm_gibbs_run, "mglm": mglm_gibbs_run}[family]


def sample_posterior(log, config: ExperimentConfig, rng, init=None) -> ParamSampleSet:
    """Gibbs posterior for ``config.family``, single chain or ``config.n_chains`` parallel chains."""
    if config.n_chains > 1:
        return run_parallel_chains(log, config, config.n_chains, rng, init=init)
    return _sampler(config.family)(log, config, rng, init=init, n_keep=config.M, burn_in=config.burn_in)


def run_parallel_chains(log, config: ExperimentConfig, C: int, rng, n_jobs: int | None = None,
                        init=None) -> ParamSampleSet:
    """C independent chains of M/C retained draws each, merged by chain then sweep.

    Before merging, each chain's states are relabeled to best match chain 0
    (posterior-mean weights), so pooled draws share one labeling.

    Chains run on a thread pool; the compiled samplers release the GIL.
    With ``C == 1`` the result is the single chain run on ``rng`` itself.
    """
    if C < 1:
        raise ValueError("need at least one chain")
    if config.M % C:
        raise ValueError(f"M={config.M} is not divisible by the chain count {C}")
    run = _sampler(config.family)
    stream = as_stream(rng)
    n_keep = config.M // C
    if C == 1:
        return run(log, config, stream, init=init, n_keep=n_keep, burn_in=config.burn_in)

    def one(c):
        return run(log, config, stream.child(c), init=init, n_keep=n_keep, burn_in=config.burn_in, chain=c)

    with ThreadPoolExecutor(max_workers=n_jobs or C) as ex:
        parts = list(ex.map(one, range(C)))
    # state labels are arbitrary per chain; match each chain to chain 0 before pooling
    ref = parts[0].mean_params()
    parts = [parts[0]] + [p.relabel(aligned_rmse(p.mean_params(), ref)["perm"]) for p in parts[1:]]
    merged = ParamSampleSet.concat(parts)
    merged.info["accept_rate"] = float(np.mean([p.info.get("accept_rate", np.nan) for p in parts]))
    return merged


def _vi_samples(log, config: ExperimentConfig, rng) -> ParamSampleSet:
    s = as_stream(rng)
    if config.family == "mlr":
        return mlr_vi_sample(mlr_vi_run(log, config, s.child(0)), config.M, s.child(1))
    if config.family == "iohmm":
        return iohmm_vi_sample(iohmm_vi_run(log, config, s.child(0)), config.M, s.child(1))
    raise ValueError(f"variational inference is not available for family {config.family!r}")


def _selection_samples(strategy: str, log, config: ExperimentConfig, gibbs: ParamSampleSet, rng) -> ParamSampleSet:
    if strategy == "infomax-gibbs":
        return gibbs
    if strategy == "infomax-vi":
        return _vi_samples(log, config, rng)
    if strategy == "infomax-glm-mismatch":
        if config.family == "mlr":
            raise ValueError("the single-GLM baseline needs binary outputs")
        return glm_mismatch_posterior(log, GlmPrior(config.prior_mean(), config.sigma0_sq), config.M, rng)
    raise ValueError(f"no posterior needed for strategy {strategy!r}")


# ---------------------------------------------------------------------------
# run results


def _log_for(config: ExperimentConfig, D: int) -> ExperimentLog:
    return ExperimentLog(D, binary=config.family != "mlr")


@dataclass
class RunResult:
    """One replication of one strategy.

    ``selections`` lists every chosen candidate index; ``infomax_mask``
    marks which of them came from MI maximization rather than warm-up.
    """

    config: ExperimentConfig
    strategy: str
    seed: int
    log: ExperimentLog
    metrics: list[MetricRow]
    selections: list[int]
    infomax_mask: list[bool]
    candidates: CandidateSet
    truth: object = None
    mi_tables: list | None = None

    @property
    def config_hash(self) -> str:
        return self.config.config_hash()

    def histogram(self, infomax_only: bool = True) -> dict | None:
        sel = [s for s, m in zip(self.selections, self.infomax_mask) if m or not infomax_only]
        if not sel:
            return None
        return selection_histogram(sel, self.candidates)

    def final(self) -> MetricRow | None:
        return self.metrics[-1] if self.metrics else None

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.config.replace(strategy=self.strategy, seed=self.seed).save(d / "config.txt")
        self.log.save(d / "log.csv")
        write_metrics_csv(d / "metrics.csv", self.metrics, self.candidates.D)
        write_histogram_csv(d / "histogram.csv", {self.strategy: self.histogram(infomax_only=False)},
                            self.candidates)
        return d


def metrics_header(D: int) -> list[str]:
    return (["t", "strategy", "entropy", "rmse_w", "rmse_A", "rmse_pi", "selected_idx"]
            + [f"selected_x{d}" for d in range(D)] + ["wall_ms"])


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_metrics_csv(path, rows: Sequence[MetricRow], D: int) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(metrics_header(D))
        for r in rows:
            w.writerow([_cell(v) for v in r.as_list()])


def write_histogram_csv(path, hists: dict, candidates: CandidateSet) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "idx"] + [f"x{d}" for d in range(candidates.D)] + ["count"])
        for strat, h in hists.items():
            if h is None:
                continue
            for i in np.flatnonzero(h["counts"]):
                w.writerow([strat, int(i)] + [_cell(v) for v in candidates.inputs[i]] + [int(h["counts"][i])])


# ---------------------------------------------------------------------------
# the closed loop


def _metric_row(t, strategy, samples: ParamSampleSet, truth, idx, x, wall_ms) -> MetricRow:
    ent = posterior_entropy(samples) if samples is not None and samples.M >= 2 else float("nan")
    if samples is not None and truth is not None:
        r = aligned_rmse(samples.mean_params(), truth)
    else:
        r = {"w": float("nan"), "A": float("nan"), "pi": float("nan")}
    return MetricRow(t, strategy, ent, r["w"], r["A"], r["pi"], int(idx), np.array(x, dtype=np.float64), wall_ms)


def _loop(config: ExperimentConfig, candidates: CandidateSet, truth, respond, rng, strategy: str,
          progress: ProgressFn | None, keep_mi: bool) -> RunResult:
    config = config.replace(strategy=strategy)
    stream = as_stream(rng)
    pick = stream.child(3).generator
    log = _log_for(config, candidates.D)
    rows: list[MetricRow] = []
    selections: list[int] = []
    mask: list[bool] = []
    tables: list | None = [] if keep_mi else None
    gibbs: ParamSampleSet | None = None
    for t in range(1, config.T + 1):
        t0 = time.perf_counter()
        avail = candidates.available()
        if avail.size == 0:
            raise RuntimeError(f"pool exhausted at trial {t}")
        use_mi = strategy != "random" and t > config.warmup and len(log) > 0
        if use_mi:
            sel_samples = _selection_samples(strategy, log, config, gibbs, stream.child(5, t))
            idx, table = select_input(sel_samples, candidates)
            if tables is not None:
                tables.append(table)
        else:
            idx = int(avail[pick.integers(avail.size)])
        x = candidates.inputs[idx]
        y = respond(idx, x)
        candidates = candidates.consume(idx)
        log = log_append(log, TrialRecord(t, x, y))
        selections.append(idx)
        mask.append(use_mi)
        if (t - 1) % config.refit_every == 0 or gibbs is None:
            # warm start from the previous posterior mean keeps labels stable across refits
            init = gibbs.mean_params() if gibbs is not None else None
            gibbs = sample_posterior(log, config, stream.child(4, t), init=init)
        wall = (time.perf_counter() - t0) * 1e3
        if t % config.metric_every == 0 or t == config.T:
            row = _metric_row(t, strategy, gibbs, truth, idx, x, wall)
            rows.append(row)
            if progress is not None:
                progress(row)
    return RunResult(config, strategy, config.seed, log, rows, selections, mask, candidates, truth, tables)


def run_closed_loop(config: ExperimentConfig, rng=None, strategy: str | None = None,
                    progress: ProgressFn | None = None, keep_mi: bool = False) -> RunResult:
    """Simulated closed-loop experiment for one strategy.

    Every trial (1) picks an input: uniformly at random during the first
    ``config.warmup`` trials or for ``strategy="random"``, otherwise the
    candidate maximizing MI under the strategy's posterior draws; (2) asks
    the simulated system for its response; (3) refits the Gibbs posterior,
    from which the metrics are computed for every strategy.

    Parameters
    ----------
    config : ExperimentConfig
        Must carry the generative truth (``true_weights`` and friends).
    rng : RngStream or int, optional
        Defaults to ``RngStream(config.seed)``. The simulator uses its own
        child stream, so all strategies see the same latent path for one seed.
    strategy : str, optional
        Overrides ``config.strategy``.
    """
    strategy = strategy or config.strategy
    stream = RngStream(config.seed) if rng is None else as_stream(rng)
    truth = config.truth()
    if truth is None:
        raise ValueError("closed-loop simulation needs the generative truth in the config")
    candidates = build_candidate_set(config.candidates)
    sim = [make_simulator(truth, stream.child(1))]

    def respond(idx, x):
        y, sim[0] = simulate_response(sim[0], x)
        return y

    return _loop(config, candidates, truth, respond, stream, strategy, progress, keep_mi)


def reference_fit(pool: CandidateSet, K: int, rng=None, n_init: int = 10) -> MlrParams:
    """Maximum-likelihood K-state MLR on every row of the pool (EM with restarts)."""
    res = mlr_em_fit(pool.inputs, pool.outputs, K, rng=rng, n_init=n_init)
    return res.params


def run_pool(config: ExperimentConfig, pool: CandidateSet, rng=None, strategy: str | None = None,
             reference=None, progress: ProgressFn | None = None) -> RunResult:
    """Pool-based active learning: selecting a row reveals its stored output and removes it.

    Metrics are measured against ``reference`` (by default a K-state EM fit
    on the full pool). If the config's noise variance is the default, the
    reference fit's variance is used for the Gibbs sampler.
    """
    if pool.mode != "pool":
        raise ValueError("run_pool needs a pool-mode candidate set")
    if config.T > len(pool.available()):
        raise RuntimeError(f"pool exhausted: {config.T} queries requested from {len(pool.available())} rows")
    strategy = strategy or config.strategy
    stream = RngStream(config.seed) if rng is None else as_stream(rng)
    if reference is None:
        reference = reference_fit(pool, config.K, rng=stream.child(9))
    if config.family == "mlr" and isinstance(reference, MlrParams):
        config = config.replace(noise_var=reference.sigma_sq)
    outputs = pool.outputs

    def respond(idx, x):
        return float(outputs[idx])

    return _loop(config, pool, reference, respond, stream, strategy, progress, False)


# ---------------------------------------------------------------------------
# replication


@dataclass
class Curves:
    """Per-trial mean and 95% normal-approximation CI half-width of each metric, per strategy."""

    t: np.ndarray
    mean: dict
    ci: dict
    n_reps: int
    runs: dict = field(default_factory=dict)

    METRICS = ("entropy", "rmse_w", "rmse_A", "rmse_pi")

    @property
    def degenerate(self) -> bool:
        return self.n_reps < 2

    def final(self, strategy: str, metric: str) -> tuple[float, float]:
        return float(self.mean[strategy][metric][-1]), float(self.ci[strategy][metric][-1])

    def save(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            head = ["strategy", "t", "n_reps"]
            for m in self.METRICS:
                head += [f"{m}_mean", f"{m}_ci95"]
            w.writerow(head + ["ci_degenerate"])
            for s in self.mean:
                for i, t in enumerate(self.t):
                    row = [s, int(t), self.n_reps]
                    for m in self.METRICS:
                        row += [_cell(self.mean[s][m][i]), _cell(self.ci[s][m][i])]
                    w.writerow(row + [int(self.degenerate)])


def replication_seeds(seed: int, n_reps: int) -> list[int]:
    """Distinct, reproducible per-replication seeds."""
    return [int(v) for v in np.random.SeedSequence(seed).generate_state(n_reps, dtype=np.uint32)]


def _aggregate(runs: dict[str, list[RunResult]]) -> Curves:
    first = next(iter(runs.values()))
    t = np.array([r.t for r in first[0].metrics])
    n = len(first)
    mean, ci = {}, {}
    for s, reps in runs.items():
        mean[s], ci[s] = {}, {}
        for m in Curves.METRICS:
            vals = np.array([[getattr(row, m) for row in r.metrics] for r in reps], dtype=np.float64)
            mean[s][m] = vals.mean(axis=0)
            if n > 1:
                # shift by the first replication so identical runs give exactly zero spread
                ci[s][m] = 1.96 * (vals - vals[:1]).std(axis=0, ddof=1) / np.sqrt(n)
            else:
                ci[s][m] = np.zeros(vals.shape[1])
    if n < 2:
        logger.warning("single replication: confidence intervals are degenerate (width 0)")
    return Curves(t, mean, ci, n, runs)


def run_replicated(preset: ExperimentPreset | ExperimentConfig, n_reps: int | None = None, rng=None,
                   strategies: Sequence[str] | None = None, seeds: Sequence[int] | None = None,
                   pool: CandidateSet | None = None, n_jobs: int = 1,
                   progress: ProgressFn | None = None) -> Curves:
    """Run every strategy over ``n_reps`` replications and aggregate the metric curves.

    Replication r of every strategy uses the same seed, so strategies are
    compared on identical simulator streams. ``seeds`` overrides the derived
    per-replication seeds.
    """
    if isinstance(preset, ExperimentPreset):
        config = preset.config
        n_reps = preset.n_reps if n_reps is None else n_reps
        strategies = preset.strategies if strategies is None else strategies
    else:
        config = preset
        n_reps = 1 if n_reps is None else n_reps
        strategies = (config.strategy,) if strategies is None else strategies
    if n_reps < 1:
        raise ValueError("need at least one replication")
    base = config.seed if rng is None else as_stream(rng).kernel_seed()
    seeds = list(seeds) if seeds is not None else replication_seeds(base, n_reps)
    if len(seeds) != n_reps:
        raise ValueError("one seed per replication required")
    reference = None
    if pool is not None:
        reference = reference_fit(pool, config.K, rng=RngStream(base, 9))

    def job(args):
        strat, seed = args
        cfg = config.replace(seed=seed, strategy=strat)
        if pool is not None:
            return run_pool(cfg, pool, RngStream(seed), strat, reference=reference, progress=progress)
        return run_closed_loop(cfg, RngStream(seed), strat, progress=progress)

    tasks = [(s, sd) for s in strategies for sd in seeds]
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            results = list(ex.map(job, tasks))
    else:
        results = [job(tk) for tk in tasks]
    runs = {s: [] for s in strategies}
    for (s, _), r in zip(tasks, results):
        runs[s].append(r)
    return _aggregate(runs)


# ---------------------------------------------------------------------------
# downstream decoding


@dataclass
class DecodingResult:
    """Hard-decoding accuracy per replication for each trained model and the truth decoder."""

    accuracy: dict
    posteriors: dict
    true_states: list

    def mean(self, model: str) -> float:
        return float(np.mean(self.accuracy[model]))

    def save(self, path, rep: int = 0) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            K = next(iter(self.posteriors.values()))[rep].shape[1]
            w.writerow(["model", "t", "true_state"] + [f"p_state{k + 1}" for k in range(K)])
            for model, per_rep in self.posteriors.items():
                P = per_rep[rep]
                z = self.true_states[rep]
                for t in range(P.shape[0]):
                    w.writerow([model, t + 1, int(z[t]) + 1] + [_cell(v) for v in P[t]])

    def save_accuracy(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "rep", "accuracy"])
            for model, accs in self.accuracy.items():
                for r, a in enumerate(accs):
                    w.writerow([model, r, _cell(a)])


def _aligned_posteriors(P: np.ndarray, est, truth) -> np.ndarray:
    perm = aligned_rmse(est, truth)["perm"]
    # column k of the estimate corresponds to true state perm^-1; reorder to truth labels
    out = np.empty_like(P)
    for i, p in enumerate(perm):
        out[:, i] = P[:, p]
    return out


def run_state_decoding_eval(preset: ExperimentPreset | ExperimentConfig, train_T: int = 400, eval_T: int = 100,
                            rng=None, n_reps: int = 1,
                            strategies: Sequence[str] = ("infomax-gibbs", "random")) -> DecodingResult:
    """Train on ``train_T`` closed-loop trials per strategy, then decode ``eval_T`` fresh trials.

    Each trained model decodes with its posterior-mean parameters; the
    truth decoder gives the reference upper bound. Eval inputs are drawn
    uniformly from the candidate grid.
    """
    config = preset.config if isinstance(preset, ExperimentPreset) else preset
    if config.family != "iohmm":
        raise ValueError("state decoding needs an IO-HMM preset")
    truth = config.truth()
    base = config.seed if rng is None else as_stream(rng).kernel_seed()
    acc = {s: [] for s in strategies}
    acc["truth"] = []
    posts = {k: [] for k in acc}
    zs = []
    cands = build_candidate_set(config.candidates)
    for seed in replication_seeds(base, n_reps):
        stream = RngStream(seed)
        cfg = config.replace(T=train_T, seed=seed)
        models = {}
        for s in strategies:
            res = run_closed_loop(cfg, stream.child(100), s)
            models[s] = sample_posterior(res.log, cfg, stream.child(101, strategies.index(s))).mean_params()
        # fresh evaluation trials from the truth
        ev = stream.child(200)
        sim = make_simulator(truth, ev.child(1))
        pick = ev.child(2).generator
        log = ExperimentLog(cands.D, binary=True)
        z = np.empty(eval_T, dtype=np.int64)
        for t in range(eval_T):
            x = cands.inputs[pick.integers(len(cands))]
            z[t] = sim.z
            y, sim = simulate_response(sim, x)
            log = log_append(log, TrialRecord(t + 1, x, y))
        zs.append(z)
        P_true = decode_states(log, truth)
        posts["truth"].append(P_true)
        acc["truth"].append(float(np.mean(P_true.argmax(axis=1) == z)))
        for s, m in models.items():
            P = _aligned_posteriors(decode_states(log, m), m, truth)
            posts[s].append(P)
            acc[s].append(float(np.mean(P.argmax(axis=1) == z)))
    return DecodingResult(acc, posts, zs)
