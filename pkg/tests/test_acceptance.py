"""Acceptance suite: one check per criterion, each reporting a PASS/FAIL line.

Seeds are fixed up front. Heavy criteria are marked ``slow`` but run by
default; results are echoed in the terminal summary.
"""

import itertools
import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from lvm_infomax.core import ExperimentLog, RngStream, TrialRecord, build_candidate_set, load_housing_pool, log_append
from lvm_infomax.fisher import fisher_angle_scan, fisher_identifiable, fisher_mc_trace, fisher_nonidentifiable
from lvm_infomax.harness import (
    get_preset,
    make_simulator,
    run_replicated,
    run_state_decoding_eval,
    sample_posterior,
    simulate_response,
)
from lvm_infomax.infomax import aligned_rmse, angle_region_count, bic, posterior_entropy, select_input, \
    selection_histogram
from lvm_infomax.iohmm import GlmPrior, forward_backward_lik, glm_mismatch_posterior, glm_sample_posterior, \
    sample_state_sequence
from lvm_infomax.params import MlrParams

ACCEPTANCE_RESULTS: dict[int, str] = {}

FIG2B = MlrParams(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0.5, 0.5]), 0.1)


def report(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[n] = line
    print(line, flush=True)
    assert ok, line


def _ci_separated(lo_mean, lo_ci, hi_mean, hi_ci) -> bool:
    return lo_mean + lo_ci < hi_mean - hi_ci


def _batch_se(x, n_batches=50):
    b = np.array([v.mean() for v in np.array_split(np.asarray(x), n_batches)])
    return b.std(ddof=1) / math.sqrt(n_batches)


# ---------------------------------------------------------------------------
# shared heavy runs


@pytest.fixture(scope="module")
def mlr2d_runs():
    t0 = time.perf_counter()
    curves = run_replicated(get_preset("mlr2d"), n_reps=10, strategies=("random", "infomax-gibbs"))
    return curves, time.perf_counter() - t0


@pytest.fixture(scope="module")
def iohmm_runs():
    preset = get_preset("iohmm3")
    cfg = preset.config.replace(T=500)
    t0 = time.perf_counter()
    curves = run_replicated(cfg, n_reps=5, strategies=("random", "infomax-gibbs", "infomax-glm-mismatch"))
    return curves, time.perf_counter() - t0


# ---------------------------------------------------------------------------


class TestAcceptance:
    """Criteria 1 to 12."""

    def test_c01_fisher_closed_forms(self):
        t0 = time.perf_counter()
        ident = fisher_identifiable([1, 0], FIG2B.pi, 0.1).trace
        orth = fisher_nonidentifiable([0, 1], FIG2B.pi, 0.1).trace
        worst = 0.0
        x = np.array([0.4, -1.3, 2.2])
        for K in range(1, 9):
            pi = np.full(K, 1.0 / K)
            a = fisher_identifiable(x, pi, 0.3).trace
            b = fisher_nonidentifiable(x, pi, 0.3).trace
            worst = max(worst, abs(b - a / K))
        dt = time.perf_counter() - t0
        ok = abs(ident - 10.0) < 1e-9 and abs(orth - 5.0) < 1e-9 and worst < 1e-9 and dt < 1.0
        report(1, ok, f"identifiable={ident:.12g} orthogonal={orth:.12g} max|orth-ident/K|={worst:.2e} "
                      f"runtime={dt:.3f}s")

    def test_c02_fisher_mc_curve(self):
        t0 = time.perf_counter()
        g = RngStream(0)
        t_0, se_0 = fisher_mc_trace([1, 0], FIG2B, 100_000, g.child(0))
        t_90, se_90 = fisher_mc_trace([0, 1], FIG2B, 100_000, g.child(1))
        ok_mc = abs(t_0 - 10.0) < 3 * se_0 and abs(t_90 - 5.0) < 3 * se_90 + 1e-12
        step = 5
        angles = np.arange(0, 181, step)
        widths, unimodal = {}, {}
        for i, s2 in enumerate((0.1, 0.5, 1.0)):
            rows = fisher_angle_scan(FIG2B, angles, [s2], 100_000, g.child(2, i))
            tr = np.array([r["trace"] for r in rows])
            se = np.array([r["stderr"] for r in rows])
            d = np.diff(tr)
            tol = 3 * np.hypot(se[1:], se[:-1])
            half = len(angles) // 2
            # dip shape: non-increasing to 90 deg and non-decreasing after, within MC error
            unimodal[s2] = bool(np.all(d[:half] <= tol[:half]) and np.all(d[half:] >= -tol[half:]))
            widths[s2] = int(np.sum(tr < 0.75 * tr.max())) * step
        widening = widths[0.1] < widths[0.5] < widths[1.0]
        dt = time.perf_counter() - t0
        ok = ok_mc and all(unimodal.values()) and widening and dt < 30
        report(2, ok, f"trace(0)={t_0:.4f}+-{se_0:.4f} (|d|={abs(t_0 - 10) / se_0:.2f} se) "
                      f"trace(90)={t_90:.4f}+-{se_90:.4f} dip-shaped={unimodal} "
                      f"sub75%-window-deg={widths} widening={widening} runtime={dt:.1f}s")

    def test_c03_forward_backward_oracle(self):
        t0 = time.perf_counter()
        g = np.random.default_rng(3)
        s = RngStream(3)
        n_draws = 5000
        worst_an, worst_z = 0.0, -np.inf
        for inst in range(100):
            T, K = int(g.integers(1, 9)), int(g.integers(1, 4))
            pi0 = g.dirichlet(np.ones(K))
            A = g.dirichlet(np.ones(K), size=K)
            L = g.uniform(0.05, 1.0, size=(T, K))
            paths = list(itertools.product(range(K), repeat=T))
            w = np.array([pi0[z[0]] * L[0, z[0]] * np.prod([A[z[t - 1], z[t]] * L[t, z[t]] for t in range(1, T)])
                          for z in paths])
            probs = w / w.sum()
            marg = np.zeros((T, K))
            for z, p in zip(paths, probs):
                marg[np.arange(T), z] += p
            m = forward_backward_lik(pi0, A, L=L)
            worst_an = max(worst_an, abs(m.loglik - math.log(w.sum())), float(np.max(np.abs(m.posteriors - marg))))
            index = {p: i for i, p in enumerate(paths)}
            counts = np.zeros(len(paths))
            for d in range(n_draws):
                counts[index[tuple(sample_state_sequence(pi0, A, L, m, s.child(inst, d)))]] += 1
            # paths with expected count < 5 are pooled into one bucket
            exp = n_draws * probs
            big = exp >= 5
            obs_b = np.append(counts[big], counts[~big].sum())
            exp_b = np.append(exp[big], exp[~big].sum())
            keep = exp_b > 0
            obs_b, exp_b = obs_b[keep], exp_b[keep]
            df = len(obs_b) - 1
            if df > 0:
                chi2 = np.sum((obs_b - exp_b) ** 2 / exp_b)
                worst_z = max(worst_z, (chi2 - df) / math.sqrt(2 * df))
        dt = time.perf_counter() - t0
        ok = worst_an < 1e-8 and worst_z < 4.0 and dt < 120
        report(3, ok, f"max analytic error={worst_an:.2e} worst chi2 z-score={worst_z:.2f} (limit 4) "
                      f"runtime={dt:.1f}s")

    def test_c04_laplace_mh(self):
        t0 = time.perf_counter()
        g = np.random.default_rng(4)
        X = g.standard_normal((40, 2))
        yg = X @ [1.0, -0.5] + g.standard_normal(40)
        prior = GlmPrior(np.zeros(2), 10.0)
        s = RngStream(4)
        w = np.zeros(2)
        n_acc = 0
        for i in range(10_000):
            r = glm_sample_posterior(X, yg, prior, w, s.child(0, i), likelihood="gaussian")
            n_acc += r.accepted
            w = r.w
        x = g.uniform(-2, 2, 50)
        y = (g.random(50) < 1 / (1 + np.exp(-1.5 * x))).astype(float)
        draws = glm_mismatch_posterior((x[:, None], y), GlmPrior(np.zeros(1), 10.0), 10_000, s.child(1),
                                       burn_in=200).weights[:, 0, 0]
        grid = np.linspace(-6, 12, 36_001)
        eta = grid[:, None] * x[None, :]
        lp = -0.5 * grid**2 / 10.0 + np.sum(y * eta - np.logaddexp(0, eta), axis=1)
        p = np.exp(lp - lp.max())
        grid_mean = float(np.sum(grid * p) / p.sum())
        se = _batch_se(draws)
        dt = time.perf_counter() - t0
        ok = n_acc == 10_000 and abs(draws.mean() - grid_mean) < 3 * se and dt < 120
        report(4, ok, f"gaussian acceptance={n_acc}/10000 mcmc mean={draws.mean():.5f} grid mean={grid_mean:.5f} "
                      f"mc se={se:.5f} runtime={dt:.1f}s")

    @pytest.mark.slow
    def test_c05_mlr_ordering(self, mlr2d_runs):
        curves, dt2 = mlr2d_runs
        t0 = time.perf_counter()
        e_g, ci_eg = curves.final("infomax-gibbs", "entropy")
        e_r, ci_er = curves.final("random", "entropy")
        r_g, _ = curves.final("infomax-gibbs", "rmse_w")
        r_r, _ = curves.final("random", "rmse_w")
        ok2 = e_g < e_r and r_g < r_r and _ci_separated(e_g, ci_eg, e_r, ci_er)
        c10 = run_replicated(get_preset("mlr10d"), n_reps=5, strategies=("random", "infomax-gibbs", "infomax-vi"))
        dt = dt2 + time.perf_counter() - t0
        f = {s: (c10.final(s, "entropy")[0], c10.final(s, "rmse_w")[0]) for s in c10.mean}
        ok10 = (f["infomax-gibbs"][0] < f["random"][0] and f["infomax-gibbs"][1] < f["random"][1]
                and f["infomax-gibbs"][1] <= f["infomax-vi"][1])
        ok = ok2 and ok10 and dt < 1800
        report(5, ok, f"2-D t=200 entropy gibbs={e_g:.3f}+-{ci_eg:.3f} random={e_r:.3f}+-{ci_er:.3f} "
                      f"rmse gibbs={r_g:.4f} random={r_r:.4f} | 10-D (entropy, rmse) "
                      + " ".join(f"{s}=({v[0]:.2f}, {v[1]:.4f})" for s, v in f.items())
                      + f" | runtime={dt / 60:.1f}min")

    @pytest.mark.slow
    def test_c06_selection_histogram(self, mlr2d_runs):
        curves, _ = mlr2d_runs
        counts, n = None, 0
        for r in curves.runs["infomax-gibbs"]:
            h = r.histogram(infomax_only=True)
            counts = h["counts"] if counts is None else counts + h["counts"]
            n += h["n"]
        first = curves.runs["infomax-gibbs"][0]
        hist = {**selection_histogram([0], first.candidates), "counts": counts, "n": n}
        k = angle_region_count(hist, [90.0, 270.0], 10.0)
        share = 6.0 / 36.0
        p = stats.binomtest(k, n, share, alternative="less").pvalue
        report(6, bool(k / n < share and p < 0.05),
               f"90/270 +-10 deg selections {k}/{n} = {k / n:.4f} vs uniform {share:.4f}, one-sided p={p:.3g}")

    @pytest.mark.slow
    def test_c07_iohmm_ordering(self, iohmm_runs):
        curves, dt = iohmm_runs
        fin = {s: {m: curves.final(s, m) for m in ("entropy", "rmse_w", "rmse_A")} for s in curves.mean}
        g, r, mm = fin["infomax-gibbs"], fin["random"], fin["infomax-glm-mismatch"]
        ok = (g["entropy"][0] < mm["entropy"][0] < r["entropy"][0]
              and _ci_separated(g["entropy"][0], g["entropy"][1], r["entropy"][0], r["entropy"][1])
              and g["rmse_A"][0] < r["rmse_A"][0] and g["rmse_w"][0] < r["rmse_w"][0] and dt < 7200)
        report(7, ok, "t=500 " + " ".join(
            f"{s}: H={v['entropy'][0]:.2f}+-{v['entropy'][1]:.2f} rmseW={v['rmse_w'][0]:.3f} "
            f"rmseA={v['rmse_A'][0]:.4f};" for s, v in fin.items()) + f" runtime={dt / 60:.1f}min")

    @pytest.mark.slow
    def test_c08_input_avoidance(self, iohmm_runs):
        curves, _ = iohmm_runs
        above, n = 0, 0
        for r in curves.runs["infomax-gibbs"]:
            h = r.histogram(infomax_only=True)
            above += round(h["frac_above"] * h["n"])
            n += h["n"]
        ci = stats.binomtest(above, n).proportion_ci(0.95)
        frac = above / n
        report(8, bool(frac < 0.10 and not (ci.low <= 0.40 <= ci.high)),
               f"|x|>3 share {above}/{n} = {frac:.4f}, 95% CI [{ci.low:.4f}, {ci.high:.4f}] vs 0.40 uniform")

    @pytest.mark.slow
    def test_c09_parallel_chains(self):
        single = get_preset("iohmm3").config
        multi = get_preset("iohmm3-chains").config
        truth = single.truth()
        stream = RngStream(9)
        cands = build_candidate_set(single.candidates)
        sim = make_simulator(truth, stream.child(1))
        pick = stream.child(2).generator
        log = ExperimentLog(1, binary=True)
        for t in range(300):
            x = cands.inputs[pick.integers(len(cands))]
            y, sim = simulate_response(sim, x)
            log = log_append(log, TrialRecord(t + 1, x, y))
        res, times = {}, {}
        for name, cfg in (("1x500", single), ("5x100", multi)):
            ent, rm, ts = [], [], []
            for rep in range(12):
                t0 = time.perf_counter()
                s = sample_posterior(log, cfg, stream.child(3, cfg.n_chains, rep))
                select_input(s, cands)
                ts.append(time.perf_counter() - t0)
                ent.append(posterior_entropy(s))
                rm.append(aligned_rmse(s.mean_params(), truth)["w"])
            res[name] = (np.array(ent), np.array(rm))
            times[name] = float(np.median(ts))
        parts, ok = [], True
        for k, label in enumerate(("entropy", "rmse_w")):
            a, b = res["1x500"][k], res["5x100"][k]
            se = math.hypot(a.std(ddof=1) / math.sqrt(len(a)), b.std(ddof=1) / math.sqrt(len(b)))
            diff = abs(a.mean() - b.mean())
            ok &= diff < 2 * se
            parts.append(f"{label}: 1x500={a.mean():.3f} 5x100={b.mean():.3f} |d|={diff:.3f} 2se={2 * se:.3f}")
        speed = times["1x500"] / times["5x100"]
        report(9, bool(ok), "; ".join(parts) + f"; per-trial speedup {speed:.2f}x on {os.cpu_count()} core(s) "
                                               "(informational)")

    @pytest.mark.slow
    def test_c10_housing_pool(self):
        path = os.environ.get("LVM_INFOMAX_HOUSING_CSV")
        if not path or not os.path.isfile(path):
            report(10, False, "housing CSV unavailable (set LVM_INFOMAX_HOUSING_CSV); criterion not evaluated")
        t0 = time.perf_counter()
        pool = load_housing_pool(path)
        b1 = bic((pool.inputs, pool.outputs), "mlr", 1, RngStream(10, 1))
        b3 = bic((pool.inputs, pool.outputs), "mlr", 3, RngStream(10, 3))
        preset = get_preset("housing")
        curves = run_replicated(preset.config.replace(D=pool.D), n_reps=10,
                                strategies=("random", "infomax-gibbs"), pool=pool)
        dt = time.perf_counter() - t0
        rg, rr = curves.final("infomax-gibbs", "rmse_w")[0], curves.final("random", "rmse_w")[0]
        eg, er = curves.final("infomax-gibbs", "entropy"), curves.final("random", "entropy")
        ok = b3.bic < b1.bic and rg < rr and _ci_separated(eg[0], eg[1], er[0], er[1]) and dt < 7200
        report(10, ok, f"BIC1={b1.bic:.1f} BIC3={b3.bic:.1f} rmse gibbs={rg:.4f} random={rr:.4f} "
                       f"entropy gibbs={eg[0]:.2f}+-{eg[1]:.2f} random={er[0]:.2f}+-{er[1]:.2f} runtime={dt / 60:.1f}min")

    @pytest.mark.slow
    def test_c11_state_decoding(self):
        res = run_state_decoding_eval(get_preset("iohmm3"), train_T=400, eval_T=100, rng=RngStream(11), n_reps=5)
        a_i, a_r, a_t = res.mean("infomax-gibbs"), res.mean("random"), res.mean("truth")
        report(11, a_i > a_r and a_i <= a_t and a_r <= a_t,
               f"accuracy infomax={a_i:.4f} random={a_r:.4f} truth={a_t:.4f}")

    @pytest.mark.slow
    def test_c12_mglm(self):
        curves = run_replicated(get_preset("mglm2"), n_reps=5, strategies=("random", "infomax-gibbs"))
        eg, er = curves.final("infomax-gibbs", "entropy")[0], curves.final("random", "entropy")[0]
        rg, rr = curves.final("infomax-gibbs", "rmse_w")[0], curves.final("random", "rmse_w")[0]
        report(12, eg < er and rg < rr, f"t=1000 entropy infomax={eg:.3f} random={er:.3f} "
                                        f"rmse infomax={rg:.4f} random={rr:.4f}")
