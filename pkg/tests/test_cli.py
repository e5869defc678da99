import csv
import subprocess
import sys

import numpy as np
import pytest

from lvm_infomax.cli import main
from lvm_infomax.core import CandidateSet, ExperimentConfig
from lvm_infomax.harness import PRESETS


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def small_config(tmp_path):
    cfg = ExperimentConfig(family="mlr", K=2, D=2, T=12, M=40, burn_in=10, candidates="circle:30",
                           true_weights=np.array([[-1.0, 0.0], [1.0, 0.0]]), true_mix=np.array([0.6, 0.4]))
    path = tmp_path / "cfg.txt"
    cfg.save(path)
    return path


class TestHelp:
    def test_lists_presets(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["--help"])
        assert e.value.code == 0
        out = capsys.readouterr().out
        for name in PRESETS:
            assert name in out

    def test_console_entry_point(self):
        r = subprocess.run([sys.executable, "-m", "lvm_infomax.cli", "--help"], capture_output=True, text=True)
        assert r.returncode == 0 and "fisher-scan" in r.stdout

    def test_needs_subcommand(self):
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == 2


class TestSimulate:
    def test_outputs(self, small_config, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["simulate", "--config", str(small_config), "--strategies", "random,infomax-gibbs",
                     "--reps", "2", "--seed", "7", "--out", str(out)])
        assert code == 0
        for name in ("config.txt", "log.csv", "metrics.csv", "histogram.csv", "curves.csv"):
            assert (out / name).is_file()
        metrics = _rows(out / "metrics.csv")
        assert {r["strategy"] for r in metrics} == {"random", "infomax-gibbs"}
        assert sum(r["strategy"] == "random" for r in metrics) == 12
        curves = _rows(out / "curves.csv")
        assert [r["strategy"] for r in curves] == ["random"] * 12 + ["infomax-gibbs"] * 12
        assert (out / "runs" / "infomax-gibbs" / "rep001" / "metrics.csv").is_file()
        lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("trial=")]
        assert len(lines) == 48
        assert lines[0].startswith("trial=1 strategy=random entropy=")
        assert ExperimentConfig.load(out / "config.txt").seed == 7

    def test_deterministic(self, small_config, tmp_path):
        for d in ("a", "b"):
            assert main(["simulate", "--config", str(small_config), "--quiet", "--seed", "3",
                         "--out", str(tmp_path / d)]) == 0
        a = _rows(tmp_path / "a" / "metrics.csv")
        b = _rows(tmp_path / "b" / "metrics.csv")
        strip = lambda rows: [{k: v for k, v in r.items() if k != "wall_ms"} for r in rows]
        assert strip(a) == strip(b)

    def test_preset_override(self, tmp_path):
        code = main(["simulate", "--preset", "mlr2d", "--T", "11", "--reps", "1", "--strategies", "random",
                     "--quiet", "--out", str(tmp_path / "p")])
        assert code == 0
        assert len(_rows(tmp_path / "p" / "metrics.csv")) == 11

    def test_missing_config(self, tmp_path, capsys):
        assert main(["simulate", "--config", str(tmp_path / "nope.txt")]) == 2
        assert "not found" in capsys.readouterr().err

    def test_bad_config(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("family = wolf\n")
        assert main(["simulate", "--config", str(p)]) == 2

    def test_bad_strategy(self, small_config):
        assert main(["simulate", "--config", str(small_config), "--strategies", "greedy"]) == 2

    def test_unknown_preset(self):
        with pytest.raises(SystemExit) as e:
            main(["simulate", "--preset", "nope"])
        assert e.value.code == 2


class TestFisherScan:
    def test_default_grid(self, tmp_path):
        out = tmp_path / "f.csv"
        assert main(["fisher-scan", "--n", "2000", "--out", str(out)]) == 0
        rows = _rows(out)
        assert len(rows) == 108
        assert list(rows[0]) == ["angle_deg", "sigma_sq", "trace", "stderr"]
        assert sorted({float(r["sigma_sq"]) for r in rows}) == [0.1, 0.5, 1.0]

    def test_endpoints(self, tmp_path):
        out = tmp_path / "f.csv"
        assert main(["fisher-scan", "--sigma-sq", "0.1", "--angle-step", "90", "--n", "100000",
                     "--out", str(out)]) == 0
        rows = {float(r["angle_deg"]): (float(r["trace"]), float(r["stderr"])) for r in _rows(out)}
        assert abs(rows[90.0][0] - 5.0) < 3 * rows[90.0][1] + 1e-9
        assert abs(rows[0.0][0] - 10.0) < 0.25

    def test_malformed_sigma(self, tmp_path):
        assert main(["fisher-scan", "--sigma-sq", "0.1,abc", "--out", str(tmp_path / "f.csv")]) == 2
        assert main(["fisher-scan", "--sigma-sq", "0.1,-1", "--out", str(tmp_path / "f.csv")]) == 2

    def test_non_2d_model(self, tmp_path):
        assert main(["fisher-scan", "--preset", "mlr10d", "--out", str(tmp_path / "f.csv")]) == 2

    def test_seeded(self, tmp_path):
        for n in ("a", "b"):
            main(["fisher-scan", "--n", "500", "--seed", "4", "--out", str(tmp_path / f"{n}.csv")])
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


class TestPool:
    def _pool_file(self, path, n=30):
        g = np.random.default_rng(0)
        X = g.standard_normal((n, 2))
        y = X @ [1.0, -1.0] + 0.1 * g.standard_normal(n)
        CandidateSet(X, outputs=y, mode="pool").save(path)
        return path

    def test_exhausted(self, small_config, tmp_path, capsys):
        pool = self._pool_file(tmp_path / "pool.csv")
        code = main(["pool", "--config", str(small_config), "--pool", str(pool), "--format", "pool", "--T", "31",
                     "--quiet", "--out", str(tmp_path / "o")])
        assert code == 3
        assert "pool exhausted" in capsys.readouterr().err

    def test_runs(self, small_config, tmp_path):
        pool = self._pool_file(tmp_path / "pool.csv")
        code = main(["pool", "--config", str(small_config), "--pool", str(pool), "--format", "pool", "--T", "10",
                     "--strategies", "random", "--quiet", "--out", str(tmp_path / "o")])
        assert code == 0
        log = _rows(tmp_path / "o" / "log.csv")
        assert len(log) == 10

    def test_missing_pool(self, tmp_path):
        assert main(["pool", "--pool", str(tmp_path / "none.csv")]) == 2


class TestDecodeAndChains:
    def test_decode_single_state(self, tmp_path, capsys):
        cfg = ExperimentConfig(family="iohmm", K=1, D=1, T=10, M=20, burn_in=5, candidates="line:-2:2:0.5",
                               true_weights=np.array([[1.0, 0.0]]), true_trans=np.array([[1.0]]),
                               true_mix=np.array([1.0]))
        cfg.save(tmp_path / "c.txt")
        code = main(["decode", "--config", str(tmp_path / "c.txt"), "--train-T", "12", "--eval-T", "8",
                     "--out", str(tmp_path / "d")])
        assert code == 0
        acc = _rows(tmp_path / "d" / "accuracy.csv")
        assert {r["model"] for r in acc} == {"infomax-gibbs", "random", "truth"}
        assert all(float(r["accuracy"]) == 1.0 for r in acc)
        assert "model=truth accuracy=1.0000" in capsys.readouterr().out

    def test_decode_needs_iohmm(self, small_config, tmp_path):
        assert main(["decode", "--config", str(small_config), "--out", str(tmp_path / "d")]) == 2

    def test_chains_bench(self, tmp_path):
        cfg = ExperimentConfig(family="iohmm", K=2, D=1, M=20, burn_in=10, candidates="line:-2:2:0.5",
                               true_weights=np.array([[2.0, 0.0], [-2.0, 0.0]]),
                               true_trans=np.array([[0.9, 0.1], [0.1, 0.9]]), true_mix=np.array([0.5, 0.5]))
        cfg.save(tmp_path / "c.txt")
        out = tmp_path / "bench.csv"
        code = main(["chains-bench", "--config", str(tmp_path / "c.txt"), "--chains", "2", "--chain-burn-in", "5",
                     "--trials", "30", "--repeats", "1", "--out", str(out)])
        assert code == 0
        rows = _rows(out)
        assert [int(r["chains"]) for r in rows] == [1, 2]
        assert [int(r["samples_per_chain"]) for r in rows] == [20, 10]
        assert float(rows[0]["speedup"]) == 1.0

    def test_chains_not_divisible(self, tmp_path):
        assert main(["chains-bench", "--preset", "iohmm3", "--chains", "3", "--out", str(tmp_path / "b.csv")]) == 2
