"""Command-line interface."""
import csv
import subprocess
import sys

import pytest

from cogmab import analysis
from cogmab.cli import UsageError, main, parse_mu
from cogmab.harness import default_mu

SIM = ["simulate", "--policy", "rho-rand", "--users", "4", "--channels", "9",
       "--mu", "0.1,0.2,...,0.9", "--slots", "500", "--reps", "20", "--seed", "7"]


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestParseMu:
    def test_expansion(self):
        assert parse_mu("0.1,0.2,...,0.9") == default_mu(9)

    def test_plain(self):
        assert parse_mu("0.3, 0.6") == [0.3, 0.6]

    @pytest.mark.parametrize("text", ["0.1,...,0.9", "0.1,0.1,...,0.9", "a,b"])
    def test_bad(self, text):
        with pytest.raises(UsageError):
            parse_mu(text)


class TestSimulate:
    def test_csv_schema_and_reproducibility(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(SIM + ["--out", str(a)]) == 0
        assert main(SIM + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        raw = a.read_bytes()
        assert b"\r" not in raw
        assert raw.splitlines()[0] == b"slot,metric,mean,stderr,policy,U,C,seed"
        rows = read_rows(a)
        metrics = {r["metric"] for r in rows}
        assert {"regret", "collisions"} <= metrics
        last = [r for r in rows if r["slot"] == "500" and r["metric"] == "regret"][0]
        assert (last["policy"], last["U"], last["C"], last["seed"]) == ("rho-rand", "4", "9", "7")

    def test_too_many_users(self, capsys):
        assert main(["simulate", "--users", "10", "--channels", "9"]) == 1
        assert "U <= C" in capsys.readouterr().err

    def test_bad_flag(self):
        with pytest.raises(SystemExit) as info:
            main(["simulate", "--policy", "greedy"])
        assert info.value.code == 2

    def test_channel_mismatch(self):
        assert main(["simulate", "--channels", "3", "--mu", "0.2,0.4"]) == 1

    def test_config_file_precedence(self, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# demo\nusers = 2\nmu = 0.2,0.5,0.9\nslots = 60\nreps = 3\nseed = 5\n")
        assert main(["simulate", "--config", str(cfg), "--seed", "11"]) == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines()))
        assert {r["seed"] for r in rows} == {"11"}
        assert {r["U"] for r in rows} == {"2"} and {r["C"] for r in rows} == {"3"}

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("colour = red\n")
        assert main(["simulate", "--config", str(cfg)]) == 1

    def test_module_entry_point(self):
        out = subprocess.run([sys.executable, "-m", "cogmab", "oracle", "--users", "2",
                              "--channels", "2"], capture_output=True, text=True)
        assert out.returncode == 0 and "E[Upsilon] = 2.0" in out.stdout


class TestBounds:
    def test_rows(self, tmp_path):
        out, terms = tmp_path / "b.csv", tmp_path / "t.csv"
        assert main(["bounds", "--users", "4", "--slots", "2500", "--out", str(out),
                     "--terms", str(terms)]) == 0
        rows = {r["kind"]: float(r["value"]) for r in read_rows(out)}
        assert rows["lower_distributed"] == analysis.asymptotic_lower_bound(default_mu(9), 4,
                                                                            "distributed")
        assert rows["compositions_bound"] == 136
        assert rows["optimal_reward"] == 7500
        assert "lower_single" not in rows
        assert {r["kind"] for r in read_rows(terms)} >= {"uworst_time", "collisions"}

    def test_single_regime_needs_one_user(self):
        assert main(["bounds", "--users", "4", "--regime", "single"]) == 1


class TestOracle:
    def test_two_by_two(self, capsys):
        assert main(["oracle", "--users", "2", "--channels", "2", "--mc-reps", "2000"]) == 0
        out = capsys.readouterr().out
        assert "E[Upsilon] = 2.0" in out and "binom(2U-1,U)-1 = 2" in out and "monte carlo" in out

    def test_three_by_three(self, capsys):
        assert main(["oracle", "--users", "3", "--channels", "3"]) == 0
        out = capsys.readouterr().out
        value = float(out.split("E[Upsilon] = ")[1].split()[0])
        assert value <= 9 and "binom(2U-1,U)-1 = 9" in out

    def test_diverges(self, capsys):
        assert main(["oracle", "--users", "3", "--channels", "2"]) == 0
        assert "diverges" in capsys.readouterr().out


class TestFigure:
    def test_unknown_id(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["figure", "spectrum"])
        assert info.value.code == 2
        assert "fairness" in capsys.readouterr().err

    def test_statcomp(self, tmp_path):
        assert main(["figure", "statcomp", "--out-dir", str(tmp_path), "--reps", "50"]) == 0
        rows = read_rows(tmp_path / "statcomp.csv")
        at_end = {r["series"]: float(r["mean"]) for r in rows if r["x"] == "2500"}
        assert at_end["rho_rand_opt"] < at_end["rho_rand_mean"]

    def test_collisions_series(self, tmp_path):
        assert main(["figure", "collisions", "--out-dir", str(tmp_path), "--reps", "20"]) == 0
        rows = read_rows(tmp_path / "collisions.csv")
        series = {r["series"] for r in rows}
        assert {"mu_unknown", "mu_known", "U*E[Upsilon(U,U)]"} <= series
        line = [float(r["mean"]) for r in rows if r["series"] == "U*E[Upsilon(U,U)]"]
        assert line[0] == pytest.approx(4 * 80 / 9)

    def test_fairness_reproducible_and_script(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for d in (a, b):
            assert main(["figure", "fairness", "--out-dir", str(d), "--reps", "200", "--seed", "3"]) == 0
        assert (a / "fairness.csv").read_bytes() == (b / "fairness.csv").read_bytes()
        rows = [r for r in read_rows(a / "fairness.csv") if r["series"] == "frequency_final_best"]
        assert [r["x"] for r in rows] == ["1", "2", "3", "4"]
        script = (a / "plot_fairness.py").read_text()
        assert "fairness.csv" in script and "cogmab" not in script.split("\n", 1)[1]
        compile(script, "plot_fairness.py", "exec")
