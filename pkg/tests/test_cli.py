import csv
import json
import os
import subprocess
import sys

import pytest

from mhof import config
from mhof import trace as tr
from mhof.cli import main
from mhof.errors import ConfigError

MHOF_RUN = {
    "problem": {"kind": "quadratic", "d": 1, "p": 4, "seed": 0},
    "optimizer": {"kind": "adam", "lr": 0.05, "inner_steps": 5},
    "schemes": [{"scheme": "mhof", "mu0": 1.0, "B": 60, "controller": {"rho": 0.9, "eta": 0.5}}],
    "seeds": [0],
}

COMPARE = {
    "problem": {"kind": "quadratic", "d": 2, "p": 4, "seed": 0},
    "optimizer": {"kind": "adam", "lr": 0.05},
    "schemes": [
        {"scheme": "mhof", "B": 40, "grid": {"rho": [0.9, 0.99], "mu0": [0.1, 10.0]}},
        {"scheme": "fixed", "B": 40, "grid": {"mu0_each": [1, 1001, 100001]}},
    ],
    "seeds": [0, 1],
}


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv("MHOF_SEED", raising=False)


class TestConfig:
    def test_expansion(self):
        cfg = config.parse(COMPARE)
        assert len(cfg.grids["mhof"]) == 4
        assert len(cfg.grids["fixed"]) == 9
        assert cfg.grids["fixed"][1].mu0 == (1.0, 1001.0)
        assert cfg.n_runs() == 26

    @pytest.mark.parametrize("mutate, field", [
        (lambda c: c.update(typo=1), "typo"),
        (lambda c: c["problem"].update(dd=2), "problem.dd"),
        (lambda c: c["schemes"][0]["controller"].update(rh0=0.5), "schemes[0].controller.rh0"),
        (lambda c: c["schemes"][0].update(mu0=0), "schemes[0].mu0"),
        (lambda c: c["schemes"][0].update(mu0=[1.0, 0.0]), "schemes[0].mu0"),
        (lambda c: c["schemes"][0]["controller"].update(rho=1.5), "schemes[0].controller.rho"),
        (lambda c: c["optimizer"].update(inner_steps=0), "optimizer.inner_steps"),
        (lambda c: c.update(seeds=[]), "seeds"),
    ])
    def test_errors_name_field(self, mutate, field):
        raw = json.loads(json.dumps(MHOF_RUN))
        mutate(raw)
        with pytest.raises(ConfigError) as exc:
            config.parse(raw)
        assert exc.value.field == field

    def test_seed_override(self):
        assert config.parse(COMPARE, "7").seeds == [7]
        with pytest.raises(ConfigError):
            config.parse(COMPARE, "x")


class TestRun:
    def test_smoke(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", str(write(tmp_path, MHOF_RUN)), "-o", str(out)]) == 0
        for name in ("trace.jsonl", "dynamics.svg", "dynamics.csv", "phase.svg", "phase.csv"):
            assert (out / name).exists()
        line = capsys.readouterr().out.strip()
        assert line.startswith("selected_epoch=") and "final_ehv=" in line and "shrinks=" in line

    def test_byte_identical(self, tmp_path):
        cfg = write(tmp_path, MHOF_RUN)
        main(["run", str(cfg), "-o", str(tmp_path / "a")])
        main(["run", str(cfg), "-o", str(tmp_path / "b")])
        assert (tmp_path / "a/trace.jsonl").read_bytes() == (tmp_path / "b/trace.jsonl").read_bytes()

    def test_zero_mu0(self, tmp_path, capsys):
        raw = json.loads(json.dumps(MHOF_RUN))
        raw["schemes"][0]["mu0"] = [0.0]
        assert main(["run", str(write(tmp_path, raw))]) == 2
        err = capsys.readouterr().err.strip()
        assert err.startswith("error: config:") and "schemes[0].mu0" in err

    def test_grid_rejected(self, tmp_path):
        assert main(["run", str(write(tmp_path, COMPARE))]) == 2

    def test_numeric_abort(self, tmp_path):
        raw = json.loads(json.dumps(MHOF_RUN))
        raw["optimizer"] = {"kind": "sgd", "lr": 1000.0}
        raw["schemes"] = [{"scheme": "fixed", "mu0": 1.0, "B": 50}]
        out = tmp_path / "o"
        assert main(["run", str(write(tmp_path, raw)), "-o", str(out)]) == 3
        t = tr.load(out / "trace.jsonl")
        assert t.meta["failed_epoch"] == len(t)

    def test_missing_file(self, tmp_path):
        assert main(["run", str(tmp_path / "nope.json")]) == 2

    def test_seed_env(self, tmp_path, monkeypatch):
        cfg = write(tmp_path, MHOF_RUN)
        monkeypatch.setenv("MHOF_SEED", "5")
        main(["run", str(cfg), "-o", str(tmp_path / "a")])
        assert tr.load(tmp_path / "a/trace.jsonl").meta["seed"] == 5


class TestCompare:
    def test_tables_and_parallel_identity(self, tmp_path):
        cfg = write(tmp_path, COMPARE)
        assert main(["compare", str(cfg), "-o", str(tmp_path / "j1"), "-j", "1"]) == 0
        assert main(["compare", str(cfg), "-o", str(tmp_path / "j8"), "-j", "8"]) == 0
        for name in ("comparison.csv", "dispersion.csv"):
            assert (tmp_path / "j1" / name).read_bytes() == (tmp_path / "j8" / name).read_bytes()
        table = rows(tmp_path / "j1/comparison.csv")
        assert len(table) == 26
        assert sum(r["scheme"] == "fixed" and r["seed"] == "0" for r in table) == 9
        traces = sorted(p.name for p in (tmp_path / "j1/traces").iterdir())
        assert traces[0] == "fixed_c000_s0.jsonl" and len(traces) == 26

    def test_failed_cell_isolated(self, tmp_path):
        raw = {
            "problem": {"kind": "quadratic", "d": 1, "p": 4, "seed": 0},
            "optimizer": {"kind": "sgd", "lr": 0.1},
            "schemes": [{"scheme": "fixed", "B": 30, "grid": {"mu0": [1.0, 1e9, 2.0]}}],
        }
        assert main(["compare", str(write(tmp_path, raw)), "-o", str(tmp_path / "o")]) == 0
        table = rows(tmp_path / "o/comparison.csv")
        assert [r["status"] for r in table] == ["ok", "failed", "ok"]
        assert table[1]["error"]


class TestReport:
    @pytest.fixture
    def fresh(self, tmp_path):
        main(["run", str(write(tmp_path, MHOF_RUN)), "-o", str(tmp_path / "r")])
        return tmp_path / "r/trace.jsonl"

    def test_fresh_passes(self, fresh, capsys):
        assert main(["report", str(fresh)]) == 0
        lines = [ln for ln in capsys.readouterr().out.splitlines() if not ln.startswith("==")]
        assert lines and all(ln.startswith("PASS") for ln in lines)

    def test_corrupted_setpoint(self, fresh, tmp_path, capsys):
        lines = fresh.read_text().splitlines()
        rec = json.loads(lines[20])
        rec["b"] = [rec["b"][0] + 5.0]
        lines[20] = json.dumps(rec)
        bad = tmp_path / "bad.jsonl"
        bad.write_text("\n".join(lines) + "\n")
        before = fresh.read_bytes()
        assert main(["report", str(bad)]) == 1
        out = capsys.readouterr().out
        assert "FAIL bad.jsonl setpoint-monotonicity" in out
        assert fresh.read_bytes() == before

    def test_directory(self, tmp_path, capsys):
        cfg = write(tmp_path, COMPARE)
        main(["compare", str(cfg), "-o", str(tmp_path / "c")])
        capsys.readouterr()
        assert main(["report", str(tmp_path / "c/traces"), "-o", str(tmp_path / "rep")]) == 0
        out = capsys.readouterr().out
        assert out.count("== ") == 26

    def test_parse_error(self, tmp_path):
        bad = tmp_path / "x.jsonl"
        bad.write_text("{}\n{oops\n")
        assert main(["report", str(bad)]) == 2

    def test_missing(self, tmp_path):
        assert main(["report", str(tmp_path / "none")]) == 2


def test_module_entry_point(tmp_path):
    env = dict(os.environ, MHOF_SEED="")
    out = subprocess.run([sys.executable, "-m", "mhof", "run", str(write(tmp_path, MHOF_RUN)),
                          "-o", str(tmp_path / "m")], capture_output=True, text=True, env=env)
    assert out.returncode == 0, out.stderr
