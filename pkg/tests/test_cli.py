import json
import math
import shutil
import subprocess
import sys

import pytest

from pqvi.cli import main
from pqvi.config import DEFAULTS, load_config, parse_config, shipped_configs
from pqvi.errors import ConfigError
from pqvi.experiments import refine_study, run_experiment

VI_INF = """
[run]
kind = solve-vi
[grid]
m = 15
[time]
T = 0.5
N = 16
[obstacle.psi]
kind = inf
[data.z0]
kind = sine
"""


class TestConfig:
    def test_flattening_and_types(self):
        cfg = parse_config("[grid]\nm = 9\n[run]\ns_values = 0.4, 0.2\nstrict_complementarity = yes\n")
        assert cfg["grid.m"] == 9
        assert cfg["run.s_values"] == (0.4, 0.2)
        assert cfg["run.strict_complementarity"] is True
        assert cfg["time.N"] == DEFAULTS["time.N"]

    @pytest.mark.parametrize(
        "text",
        [
            "[grid]\nmesh = 3\n",
            "[grid]\nm = three\n",
            "[run]\nkind = dance\n",
            "[run]\ntol_fp = 0\n",
            "not an ini file",
            "[obstacle]\nkind = spline\n",
        ],
    )
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_inline_comments(self):
        cfg = parse_config("[obstacle]\nkind = superposition   ; or constant\n")
        assert cfg["obstacle.kind"] == "superposition"

    def test_replace(self):
        cfg = parse_config("")
        assert cfg.replace(time__N=8)["time.N"] == 8
        with pytest.raises(ConfigError):
            cfg.replace(time__steps=8)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.ini")

    def test_shipped_configs_parse(self):
        names = shipped_configs()
        assert len(names) >= 10
        for path in names.values():
            load_config(path)


class TestRun:
    def test_unconstrained_summary(self, tmp_path):
        status, summary = run_experiment(parse_config(VI_INF), tmp_path)
        assert status == 0
        assert summary["metrics"]["feasible"] is True
        assert summary["metrics"]["active_fraction"] == 0
        on_disk = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        assert list(on_disk) == sorted(on_disk)
        assert (tmp_path / "solution.csv").read_text().startswith("t,x,value\n")

    def test_oracle_compare(self, tmp_path):
        status, summary = run_experiment(load_config(shipped_configs()["oracle-compare"]), tmp_path)
        assert status == 0
        assert summary["metrics"]["max_discrepancy"] <= 1e-8

    def test_taylor_default_csv(self, tmp_path):
        status, _ = run_experiment(load_config(shipped_configs()["taylor-default"]), tmp_path)
        assert status == 0
        rows = (tmp_path / "taylor.csv").read_text().splitlines()
        header = rows[0].split(",")
        col = header.index("remainder")
        rem = [float(r.split(",")[col]) for r in rows[1:]]
        assert all(b < a for a, b in zip(rem, rem[1:]))


class TestRefine:
    def test_heat_first_order(self):
        table = refine_study(load_config(shipped_configs()["refine-heat"]))
        ratios = [r["gap_ratio"] for r in table[2:]]
        assert all(0.4 <= q <= 0.6 for q in ratios)

    def test_vi_gaps_decrease(self):
        table = refine_study(load_config(shipped_configs()["refine-vi"]))
        gaps = [r["gap_L2H"] for r in table[1:]]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))

    def test_zero_data(self):
        cfg = parse_config("[run]\nkind = refine-study\nfactors = 1, 2, 4\n[time]\nN = 4\n[grid]\nm = 7\n[obstacle.psi]\nkind = constant\namp = 1\n")
        table = refine_study(cfg)
        assert all(r["gap_L2H"] == 0 for r in table[1:])
        assert math.isnan(table[0]["gap_L2H"])

    def test_bad_factors(self):
        with pytest.raises(ConfigError):
            refine_study(parse_config("[run]\nfactors = 2, 3\n"))


class TestCli:
    def test_run_ok(self, tmp_path, capsys):
        cfg = tmp_path / "vi.ini"
        cfg.write_text(VI_INF)
        assert main(["run", str(cfg), "--out", str(tmp_path / "o"), "--seed", "7"]) == 0
        summary = json.loads((tmp_path / "o" / "summary.json").read_text())
        assert summary["seed"] == 7
        assert "pass" in capsys.readouterr().out

    def test_parse_error_exit_2(self, tmp_path):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[grid]\nbogus = 1\n")
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert main(["run", str(tmp_path / "missing.ini")]) == 2
        assert main(["frobnicate"]) == 2

    def test_solver_failure_exit_1(self, tmp_path):
        cfg = tmp_path / "infeasible.ini"
        cfg.write_text("[run]\nkind = solve-vi\n[grid]\nm = 7\n[time]\nN = 4\n[obstacle.psi]\nkind = constant\namp = 0\n[data.z0]\nkind = constant\namp = 1\n")
        out = tmp_path / "o"
        assert main(["run", str(cfg), "--out", str(out)]) == 1
        rec = json.loads((out / "error.json").read_text())
        assert rec["error"] == "InvalidDataError"
        assert rec["status"] == "error"

    def test_jobs_match_serial(self, tmp_path):
        path = str(shipped_configs()["refine-heat"])
        assert main(["run", path, "--out", str(tmp_path / "a")]) == 0
        assert main(["run", path, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
        assert (tmp_path / "a" / "refine.csv").read_bytes() == (tmp_path / "b" / "refine.csv").read_bytes()

    def test_check_subset(self, capsys):
        assert main(["check", "--only", "11"]) == 0
        out = capsys.readouterr().out
        assert "[PASS] 11" in out

    def test_console_script(self, tmp_path):
        cfg = tmp_path / "vi.ini"
        cfg.write_text(VI_INF)
        exe = shutil.which("pqvi")
        cmd = [exe] if exe else [sys.executable, "-m", "pqvi.cli"]
        proc = subprocess.run(
            cmd + ["run", str(cfg), "--out", str(tmp_path / "o")],
            capture_output=True,
            text=True,
            check=False,
        )
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "o" / "solution.csv").exists()
