import math

import numpy as np
import pytest
from scipy import stats

from lvm_infomax.core import CandidateSet, ExperimentConfig, ExperimentLog, RngStream, TrialRecord, \
    build_candidate_set, log_append
from lvm_infomax.harness import (
    PRESETS,
    Curves,
    get_preset,
    make_simulator,
    reference_fit,
    replication_seeds,
    run_closed_loop,
    run_parallel_chains,
    run_pool,
    run_replicated,
    run_state_decoding_eval,
    sample_posterior,
    simulate_response,
)
from lvm_infomax.infomax import aligned_rmse
from lvm_infomax.params import IoHmmParams, MglmParams, MlrParams


def _small_mlr(**kw):
    base = dict(family="mlr", K=2, D=2, T=30, M=60, burn_in=20, candidates="circle:10",
                true_weights=np.array([[-1.0, 0.0], [1.0, 0.0]]), true_mix=np.array([0.6, 0.4]), seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def _small_iohmm(**kw):
    cfg = get_preset("iohmm3").config.replace(T=25, M=40, burn_in=10, candidates="line:-5:5:0.5", seed=4)
    return cfg.replace(**kw)


class TestPresets:
    def test_known_presets(self):
        for name in ("mlr2d", "mlr10d", "iohmm3", "iohmm3-short", "iohmm3-chains", "mglm2", "housing"):
            assert get_preset(name).name == name
        with pytest.raises(ValueError):
            get_preset("nope")

    def test_round_trip_through_text(self):
        for p in PRESETS.values():
            assert ExperimentConfig.from_text(p.config.to_text()).config_hash() == p.config.config_hash()

    def test_iohmm_preset_values(self):
        t = get_preset("iohmm3").truth()
        np.testing.assert_allclose(np.diag(t.A), 0.95)
        np.testing.assert_allclose(t.A.sum(axis=1), 1.0)
        chains = get_preset("iohmm3-chains").config
        assert chains.n_chains == 5 and chains.burn_in == 40 and chains.M // chains.n_chains == 100

    def test_mglm_preset(self):
        t = get_preset("mglm2").truth()
        np.testing.assert_array_equal(t.weights, [[3.0, -6.0], [3.0, 6.0]])
        np.testing.assert_array_equal(t.pi, [0.6, 0.4])


class TestSimulator:
    def test_identity_transitions_freeze_state(self):
        t = IoHmmParams(np.zeros((3, 2)), np.eye(3), np.full(3, 1 / 3))
        s = make_simulator(t, RngStream(0))
        z0 = s.z
        for _ in range(1000):
            _, s = simulate_response(s, np.array([1.0]))
            assert s.z == z0

    def test_fair_coin(self):
        t = MglmParams(np.zeros((1, 2)), np.array([1.0]))
        s = make_simulator(t, RngStream(1))
        ys = []
        for _ in range(10_000):
            y, s = simulate_response(s, np.array([0.3]))
            ys.append(y)
        assert abs(np.mean(ys) - 0.5) < 4 * math.sqrt(0.25 / 10_000)

    def test_mlr_degenerate_mix(self):
        t = MlrParams(np.array([[2.0, 0.0], [-2.0, 0.0]]), np.array([1.0, 0.0]), 0.25)
        s = make_simulator(t, RngStream(2))
        r = []
        for _ in range(20_000):
            y, s = simulate_response(s, np.array([1.0, 0.0]))
            r.append(y - 2.0)
        r = np.array(r)
        n = len(r)
        assert abs(r.mean()) < 4 * math.sqrt(0.25 / n)
        assert abs(r.var() - 0.25) < 4 * 0.25 * math.sqrt(2 / n)
        assert abs(stats.skew(r)) < 4 * math.sqrt(6 / n)
        assert abs(stats.kurtosis(r)) < 4 * math.sqrt(24 / n)

    def test_latent_path_independent_of_inputs(self):
        t = get_preset("iohmm3").truth()
        a = make_simulator(t, RngStream(5))
        b = make_simulator(t, RngStream(5))
        g = np.random.default_rng(0)
        for _ in range(300):
            assert a.z == b.z
            _, a = simulate_response(a, np.array([g.uniform(-5, 5)]))
            _, b = simulate_response(b, np.array([-4.0]))


class TestClosedLoop:
    def test_zero_trials(self):
        r = run_closed_loop(_small_mlr(T=0))
        assert len(r.log) == 0 and r.metrics == [] and r.final() is None

    def test_deterministic(self):
        a = run_closed_loop(_small_mlr(), strategy="infomax-gibbs")
        b = run_closed_loop(_small_mlr(), strategy="infomax-gibbs")
        assert a.log == b.log
        assert a.selections == b.selections
        np.testing.assert_array_equal([m.entropy for m in a.metrics], [m.entropy for m in b.metrics])

    def test_warmup_and_metrics(self):
        r = run_closed_loop(_small_mlr(T=20, metric_every=5), strategy="infomax-gibbs")
        assert r.infomax_mask == [False] * 10 + [True] * 10
        assert [m.t for m in r.metrics] == [5, 10, 15, 20]
        assert all(np.isfinite(m.entropy) and np.isfinite(m.rmse_w) for m in r.metrics)

    def test_random_histogram_uniform(self):
        r = run_closed_loop(_small_mlr(T=200, M=20, burn_in=2), strategy="random")
        h = r.histogram(infomax_only=False)
        assert h["n"] == 200 and len(h["counts"]) == 36
        chi2, p = stats.chisquare(h["counts"])
        assert p > 1e-3
        assert r.histogram(infomax_only=True) is None

    def test_paired_latent_paths(self):
        # identical simulator streams: the IO-HMM latent sequence does not depend on the strategy
        cfg = _small_iohmm()
        out = {}
        for s in ("random", "infomax-gibbs"):
            r = run_closed_loop(cfg, strategy=s)
            out[s] = r
        ta = make_simulator(cfg.truth(), RngStream(cfg.seed).child(1))
        zs = []
        for x in out["random"].log.X:
            zs.append(ta.z)
            _, ta = simulate_response(ta, x)
        tb = make_simulator(cfg.truth(), RngStream(cfg.seed).child(1))
        zb = []
        for x in out["infomax-gibbs"].log.X:
            zb.append(tb.z)
            _, tb = simulate_response(tb, x)
        assert zs == zb

    @pytest.mark.parametrize("strategy", ["infomax-vi", "infomax-glm-mismatch"])
    def test_iohmm_strategies_run(self, strategy):
        r = run_closed_loop(_small_iohmm(T=15), strategy=strategy)
        assert len(r.log) == 15 and np.isfinite(r.final().rmse_A)

    def test_mglm_runs(self):
        cfg = get_preset("mglm2").config.replace(T=15, M=30, burn_in=5, candidates="line:-5:5:1")
        r = run_closed_loop(cfg, strategy="infomax-gibbs")
        assert len(r.log) == 15 and np.isnan(r.final().rmse_A)

    def test_glm_mismatch_needs_binary(self):
        with pytest.raises(ValueError):
            run_closed_loop(_small_mlr(T=12, warmup=1), strategy="infomax-glm-mismatch")

    def test_needs_truth(self):
        with pytest.raises(ValueError):
            run_closed_loop(ExperimentConfig(T=3))

    def test_save_layout(self, tmp_path):
        r = run_closed_loop(_small_mlr(T=12), strategy="infomax-gibbs")
        d = r.save(tmp_path / "run")
        assert sorted(p.name for p in d.iterdir()) == ["config.txt", "histogram.csv", "log.csv", "metrics.csv"]
        head = (d / "metrics.csv").read_text().splitlines()[0]
        assert head == "t,strategy,entropy,rmse_w,rmse_A,rmse_pi,selected_idx,selected_x0,selected_x1,wall_ms"
        assert len((d / "metrics.csv").read_text().splitlines()) == 13


class TestPool:
    def _pool(self, n=40, seed=0):
        g = np.random.default_rng(seed)
        X = g.standard_normal((n, 2))
        z = g.random(n) < 0.5
        y = np.where(z, X @ [1.5, 0.0], X @ [-1.5, 0.5]) + 0.1 * g.standard_normal(n)
        return CandidateSet(X, outputs=y, mode="pool")

    def test_consumes_every_row_once(self):
        pool = self._pool()
        cfg = _small_mlr(T=40, M=20, burn_in=5, true_weights=None, true_mix=None)
        r = run_pool(cfg, pool, RngStream(0), "random")
        assert sorted(r.selections) == list(range(40))
        assert r.candidates.available().size == 0

    def test_counts_add_up(self):
        pool = self._pool(60)
        cfg = _small_mlr(T=15, M=20, burn_in=5, true_weights=None, true_mix=None)
        r = run_pool(cfg, pool, RngStream(1), "infomax-gibbs")
        assert len(set(r.selections)) == 15
        assert r.candidates.available().size + 15 == 60
        np.testing.assert_array_equal(r.log.y, pool.outputs[r.selections])

    def test_exhausted(self):
        cfg = _small_mlr(T=41, true_weights=None, true_mix=None)
        with pytest.raises(RuntimeError, match="pool exhausted"):
            run_pool(cfg, self._pool(), RngStream(0), "random")

    def test_reference_self_rmse(self):
        pool = self._pool(400)
        ref = reference_fit(pool, 2, RngStream(0), n_init=3)
        assert aligned_rmse(ref, ref)["w"] == 0.0


class TestReplication:
    def test_seeds(self):
        s = replication_seeds(7, 5)
        assert len(set(s)) == 5 and s == replication_seeds(7, 5)

    def test_single_rep_degenerate(self):
        c = run_replicated(_small_mlr(T=12), n_reps=1, strategies=("random",))
        assert c.degenerate
        np.testing.assert_array_equal(c.ci["random"]["entropy"], 0.0)

    def test_identical_seeds_zero_variance(self):
        c = run_replicated(_small_mlr(T=12), n_reps=3, strategies=("random",), seeds=[5, 5, 5])
        np.testing.assert_array_equal(c.ci["random"]["rmse_w"], 0.0)

    def test_curve_shape_and_ci(self, tmp_path):
        c = run_replicated(_small_mlr(T=12), n_reps=3, strategies=("random", "infomax-gibbs"))
        assert len(c.t) == 12
        vals = np.array([[m.entropy for m in r.metrics] for r in c.runs["random"]])
        np.testing.assert_allclose(c.mean["random"]["entropy"], vals.mean(axis=0))
        np.testing.assert_allclose(c.ci["random"]["entropy"], 1.96 * vals.std(axis=0, ddof=1) / math.sqrt(3))
        c.save(tmp_path / "curves.csv")
        lines = (tmp_path / "curves.csv").read_text().splitlines()
        assert len(lines) == 1 + 2 * 12
        assert {ln.split(",")[0] for ln in lines[1:]} == {"random", "infomax-gibbs"}

    def test_order_invariant(self):
        a = run_replicated(_small_mlr(T=10), n_reps=3, strategies=("random",), seeds=[1, 2, 3])
        b = run_replicated(_small_mlr(T=10), n_reps=3, strategies=("random",), seeds=[3, 1, 2])
        np.testing.assert_allclose(a.mean["random"]["rmse_w"], b.mean["random"]["rmse_w"], rtol=1e-12)

    def test_bad_reps(self):
        with pytest.raises(ValueError):
            run_replicated(_small_mlr(), n_reps=0)


class TestChains:
    def _log(self, T=150):
        cfg = get_preset("iohmm3").config
        sim = make_simulator(cfg.truth(), RngStream(8))
        g = np.random.default_rng(8)
        log = ExperimentLog(1, binary=True)
        for t in range(T):
            x = np.array([g.uniform(-5, 5)])
            y, sim = simulate_response(sim, x)
            log = log_append(log, TrialRecord(t + 1, x, y))
        return log

    def test_single_chain_identity(self):
        log = self._log(60)
        cfg = _small_iohmm()
        a = run_parallel_chains(log, cfg, 1, RngStream(3))
        b = sample_posterior(log, cfg, RngStream(3))
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_not_divisible(self):
        with pytest.raises(ValueError):
            run_parallel_chains(self._log(20), _small_iohmm(M=42), 5, RngStream(0))

    def test_provenance_and_equivalence(self):
        log = self._log()
        cfg = get_preset("iohmm3").config
        multi = run_parallel_chains(log, cfg.replace(burn_in=40), 5, RngStream(1))
        assert multi.M == 500
        np.testing.assert_array_equal(np.bincount(multi.chain), [100] * 5)
        np.testing.assert_array_equal(multi.chain, np.repeat(np.arange(5), 100))
        single = sample_posterior(log, cfg, RngStream(2))
        # compare label-invariant summaries: sorted self-transition probabilities and slopes
        def summ(s):
            return np.sort(np.diagonal(s.trans, axis1=1, axis2=2), axis=1), np.sort(s.weights[:, :, 0], axis=1)
        for a, b in zip(summ(multi), summ(single)):
            se = np.sqrt(a.var(axis=0) / 50 + b.var(axis=0) / 50)  # conservative effective sizes
            assert np.all(np.abs(a.mean(axis=0) - b.mean(axis=0)) < 4 * se)


class TestDecoding:
    def test_single_state_accuracy_one(self):
        cfg = ExperimentConfig(family="iohmm", K=1, D=1, T=20, M=20, burn_in=5, candidates="line:-2:2:0.5",
                               true_weights=np.array([[1.0, 0.0]]), true_trans=np.array([[1.0]]),
                               true_mix=np.array([1.0]), seed=1)
        res = run_state_decoding_eval(cfg, train_T=20, eval_T=10, rng=RngStream(0))
        for m in ("infomax-gibbs", "random", "truth"):
            assert res.mean(m) == 1.0

    def test_outputs(self, tmp_path):
        cfg = _small_iohmm()
        res = run_state_decoding_eval(cfg, train_T=20, eval_T=15, rng=RngStream(2), n_reps=2)
        assert set(res.accuracy) == {"infomax-gibbs", "random", "truth"}
        assert all(len(v) == 2 for v in res.accuracy.values())
        for P in res.posteriors["random"]:
            np.testing.assert_allclose(P.sum(axis=1), 1.0)
        res.save(tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == "model,t,true_state,p_state1,p_state2,p_state3"
        assert len(lines) == 1 + 3 * 15

    def test_needs_iohmm(self):
        with pytest.raises(ValueError):
            run_state_decoding_eval(_small_mlr())
