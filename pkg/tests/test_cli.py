from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from discrete_fermions import cli, io
from discrete_fermions.closedform import three_point_family, two_point_critical


@pytest.fixture(autouse=True)
def _output_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "runs"))
    return tmp_path / "runs"


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestCritical:
    def test_three_points(self, capsys, _output_root):
        code, out, _ = run(capsys, "critical", "--m", "3", "--restarts", "50", "--seed", "7")
        assert code == 0
        assert "best action = 0.33333333333" in out
        base = _output_root / "critical"
        for name in ("results.csv", "log.jsonl", "config.json", "best.json", "causal.csv", "bloch.csv"):
            assert (base / name).exists(), name
        schema, rows = io.read_table(base / "results.csv")
        assert schema == "results v1" and len(rows) == 50

    def test_single_point(self, capsys, tmp_path):
        code, out, _ = run(capsys, "critical", "--m", "1", "--out", str(tmp_path / "one"))
        assert code == 0
        assert "trivial" in out and "action = 0" in out
        assert json.loads((tmp_path / "one" / "config.json").read_text())["m"] == 1

    def test_config_reproduces_bit_identically(self, capsys, tmp_path):
        first = tmp_path / "a"
        assert run(capsys, "critical", "--m", "2", "--restarts", "3", "--seed", "5", "--out", str(first))[0] == 0
        second = tmp_path / "b"
        code, _, _ = run(capsys, "critical", "--config", str(first / "config.json"), "--out", str(second))
        assert code == 0
        for name in ("results.csv", "best.json", "log.jsonl"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_flag_overrides_config(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"m": 2, "restarts": 2, "seed": 1, "schedule": {"L0": 500.0}}))
        out = tmp_path / "o"
        assert run(capsys, "critical", "--config", str(cfg), "--restarts", "1", "--out", str(out))[0] == 0
        stored = json.loads((out / "config.json").read_text())
        assert stored["restarts"] == 1 and stored["seed"] == 1
        assert stored["schedule"]["L0"] == 500.0 and stored["schedule"]["tau0"] == 1e-6
        assert stored["format_version"] == cli.FORMAT_VERSION

    def test_one_particle(self, capsys, tmp_path):
        code, out, _ = run(capsys, "critical", "--m", "3", "--f", "1", "--mu", "0",
                           "--restarts", "2", "--out", str(tmp_path / "o"))
        assert code == 0 and "best action = 0.111111111" in out

    @pytest.mark.parametrize("argv", [
        ["critical", "--m", "0"],
        ["critical", "--m", "3", "--mu", "0.3"],
        ["critical", "--m", "2", "--restarts", "0"],
        ["critical", "--m", "2", "--bogus"],
        ["critical", "--m", "two"],
    ])
    def test_invalid_config_exits_1(self, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            code = cli.main(argv)
            raise SystemExit(code)
        assert exc.value.code == 1

    def test_unreadable_config(self, capsys, tmp_path):
        assert run(capsys, "critical", "--config", str(tmp_path / "nope.json"))[0] == 1


class TestConstrained:
    def test_kappa_min(self, capsys, _output_root):
        code, out, _ = run(capsys, "constrained", "--m", "2", "--f", "2", "--kappa-min")
        assert code == 0
        assert "kappa_min(m=2, f=2) = 2" in out
        summary = json.loads((_output_root / "constrained" / "kappa-min.json").read_text())
        assert summary["constraint_value"] == pytest.approx(2.0, abs=1e-3)

    def test_analyze_spacelike(self, capsys, _output_root):
        code, out, _ = run(capsys, "constrained", "--m", "3", "--f", "2", "--kappa", "0.9", "--analyze")
        assert code == 0
        assert "off-diagonal causal labels S" in out
        assert (_output_root / "constrained" / "causal-0.csv").exists()

    @pytest.mark.slow
    def test_sweep_dominance(self, capsys, _output_root):
        code, _, _ = run(capsys, "constrained", "--m", "3", "--f", "2", "--sweep", "0.67:1.2:12", "--pf")
        assert code == 0
        schema, rows = io.read_table(_output_root / "constrained" / "sweep.csv")
        assert schema == "sweep v1" and len(rows) == 12
        assert all(r["dominance"] == "true" for r in rows)

    def test_parse_sweep(self):
        np.testing.assert_allclose(cli.parse_sweep("0:1:5"), [0, 0.25, 0.5, 0.75, 1])
        with pytest.raises(cli.UsageError):
            cli.parse_sweep("0:1")

    def test_requires_a_task(self, capsys):
        assert run(capsys, "constrained", "--m", "2", "--f", "2")[0] == 1

    def test_search_flags_are_stored(self, capsys, tmp_path):
        out = tmp_path / "o"
        code, _, _ = run(capsys, "constrained", "--m", "2", "--f", "1", "--kappa", "0.5",
                         "--restarts", "2", "--neighbors", "16", "--out", str(out))
        assert code == 0
        search = json.loads((out / "config.json").read_text())["search"]
        assert search["restarts"] == 2 and search["neighbors"] == 16


class TestOracle:
    def test_five_point(self, capsys):
        code, out, _ = run(capsys, "oracle", "five-point-optimum")
        assert code == 0
        assert "0.407741155" in out and "0.107014593" in out

    def test_three_point_branch_report(self, capsys):
        code, out, _ = run(capsys, "oracle", "three-point-constrained", "--kappa", "0.8395")
        assert code == 0
        assert out.count("0.814814814815") >= 2

    def test_two_point(self, capsys, _output_root):
        code, out, _ = run(capsys, "oracle", "two-point-critical")
        assert code == 0 and "action = 1" in out
        assert (_output_root / "oracle" / "two-point-critical.json").exists()

    def test_unknown_family(self, capsys):
        code, _, err = run(capsys, "oracle", "nonsense")
        assert code == 1
        assert "five-point-optimum" in err

    def test_bad_parameter(self, capsys):
        assert run(capsys, "oracle", "two-point-constrained", "--kappa", "1.9")[0] == 1

    @pytest.mark.parametrize("name", list(cli.ORACLES))
    def test_every_family_runs(self, capsys, name):
        assert run(capsys, "oracle", name)[0] == 0


class TestAnalyze:
    def _file(self, tmp_path, psi):
        return str(io.write_fermion_matrix(tmp_path / "psi.json", psi))

    def test_two_point(self, capsys, tmp_path):
        code, out, _ = run(capsys, "analyze", self._file(tmp_path, two_point_critical()), "--out", str(tmp_path / "o"))
        assert code == 0
        assert "constraint sum |A|^2 = 2" in out and "S_0.5 = 1" in out
        assert "T B" in out
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert report["causal"] == [["T", "B"], ["B", "T"]]

    def test_three_point_timelike(self, capsys, tmp_path):
        code, _, _ = run(capsys, "analyze", self._file(tmp_path, three_point_family(0.0)), "--out", str(tmp_path / "o"))
        assert code == 0
        report = json.loads((tmp_path / "o" / "report.json").read_text())
        assert {c for row in report["causal"] for c in row} == {"T"}

    def test_corrupted_normalization(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        data = io.fermion_matrix_to_dict(two_point_critical())
        data["entries"][-1][0] = 1.1
        path.write_text(json.dumps(data))
        code, _, err = run(capsys, "analyze", str(path))
        assert code == 2
        assert "Gram entry" in err

    def test_malformed_file(self, capsys, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("[]")
        assert run(capsys, "analyze", str(path))[0] == 2

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "analyze", str(tmp_path / "missing.json"))[0] == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "discrete_fermions.cli", "oracle", "two-point-critical",
                           "--out", str(tmp_path)], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "action = 1" in proc.stdout


def test_default_output_dir(monkeypatch, tmp_path):
    monkeypatch.delenv(cli.OUTPUT_ENV)
    monkeypatch.chdir(tmp_path)
    expected = tmp_path / "discrete-fermions-output" / "critical"
    assert cli.output_dir(None, "critical").resolve() == expected.resolve()
