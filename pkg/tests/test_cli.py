"""CLI front end: subcommands, exit codes, file outputs, and figures."""

import json

import pytest

from cvis.cli import main
from cvis.experiment import read_rows

CONFIG = """
benchmark = example1
estimators = cvis, mfis
delta = 1.0
sigma_eps = 1.0
allocation = explicit
sus_n_per_level = 200
demc_chains = 6
demc_steps = 40
mc_integrate_per_level = 200
n_trials = 3
base_seed = 77
"""


@pytest.fixture()
def config_path(tmp_path):
    p = tmp_path / "bench.cfg"
    p.write_text(CONFIG)
    return p


class TestOracle:
    def test_writes_json_payload(self, config_path, tmp_path, capsys):
        out = tmp_path / "oracle.json"
        code = main([
            "oracle", "--config", str(config_path),
            "--samples", "20000", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads(out.read_text())
        assert payload["benchmark"] == "example1"
        assert payload["n"] == 20000
        assert 0.0 < payload["pf"] < 1.0
        assert 0.0 < payload["pfl"] < 1.0
        assert payload["p_hl"] <= min(payload["pf"], payload["pfl"])
        # stdout mirrors the file
        assert json.loads(capsys.readouterr().out) == payload

    def test_seed_flag_changes_the_reference_stream(self, config_path, capsys):
        main(["oracle", "--config", str(config_path), "--samples", "20000"])
        first = json.loads(capsys.readouterr().out)
        main([
            "oracle", "--config", str(config_path),
            "--samples", "20000", "--seed", "1234",
        ])
        second = json.loads(capsys.readouterr().out)
        assert first["seed"] == 77 and second["seed"] == 1234
        assert first["pf"] != second["pf"]


class TestRun:
    def test_writes_rows_and_resumes(self, config_path, tmp_path, capsys):
        out = tmp_path / "trials.csv"
        assert main(["run", "--config", str(config_path), "--out", str(out)]) == 0
        rows = read_rows(out)
        assert len(rows) == 6  # 3 trials x 2 estimators
        first_bytes = out.read_bytes()

        # a rerun finds every trial present and appends nothing
        assert main(["run", "--config", str(config_path), "--out", str(out)]) == 0
        assert out.read_bytes() == first_bytes
        assert "(0 new rows)" in capsys.readouterr().out

        # --trials extends the same table in place
        code = main([
            "run", "--config", str(config_path),
            "--out", str(out), "--trials", "5",
        ])
        assert code == 0
        extended = read_rows(out)
        assert len(extended) == 10
        assert [r.trial_id for r in extended[:6]] == [r.trial_id for r in rows]

    def test_thread_count_is_cosmetic(self, config_path, tmp_path):
        serial = tmp_path / "serial.csv"
        pooled = tmp_path / "pooled.csv"
        main(["run", "--config", str(config_path), "--out", str(serial)])
        main([
            "run", "--config", str(config_path),
            "--out", str(pooled), "--threads", "3",
        ])
        assert serial.read_bytes() == pooled.read_bytes()


class TestStats:
    @pytest.fixture()
    def trial_csv(self, config_path, tmp_path):
        out = tmp_path / "trials.csv"
        main(["run", "--config", str(config_path), "--out", str(out)])
        return out

    def test_summary_and_figures(self, trial_csv, tmp_path, capsys):
        summary = tmp_path / "summary.csv"
        code = main([
            "stats", str(trial_csv), "--truth", "4.318e-3", "--out", str(summary),
        ])
        assert code == 0
        lines = summary.read_text().strip().splitlines()
        assert lines[0].startswith("estimator,n_rows,mean_pf")
        assert len(lines) == 3  # header + one row per estimator
        assert (tmp_path / "pf_distribution.png").is_file()
        assert (tmp_path / "error_summary.png").is_file()
        printed = capsys.readouterr().out
        assert "cvis" in printed and "mfis" in printed

    def test_no_figures_flag(self, trial_csv, tmp_path):
        code = main([
            "stats", str(trial_csv), "--truth", "4.318e-3", "--no-figures",
            "--out", str(tmp_path / "s.csv"),
        ])
        assert code == 0
        assert not list(tmp_path.glob("*.png"))

    def test_default_output_name(self, trial_csv):
        assert main(["stats", str(trial_csv), "--truth", "4.318e-3",
                     "--no-figures"]) == 0
        assert trial_csv.with_name("trials_summary.csv").is_file()


class TestExitCodes:
    def test_bad_config_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("benchmark = example9\nestimators = cvis\n"
                       "n_trials = 1\nbase_seed = 1\n")
        code = main(["oracle", "--config", str(bad), "--samples", "1000"])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_stats_on_foreign_csv_exits_2(self, tmp_path, capsys):
        alien = tmp_path / "alien.csv"
        alien.write_text("a,b\n1,2\n")
        code = main(["stats", str(alien), "--truth", "4e-3"])
        assert code == 2
        assert "config error" in capsys.readouterr().err

    def test_numerical_failure_exits_3(self, config_path, tmp_path, capsys):
        code = main(["oracle", "--config", str(config_path), "--samples", "0"])
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err
