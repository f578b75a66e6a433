import json
import subprocess
import sys

import pytest

from clipvi.cli import DEFAULT_SWEEP_CELLS, linear_operator_norm, main
from clipvi.harness import read_results_csv

BASE = """
p = 2
m = 2
iterations = 50
seeds = 2
sigma_entry = 0.2
checkpoints = 20
method = projection_two_sample: harmonic(a=1, offset=2)
"""


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(BASE)
    return path


class TestRun:
    def test_run_writes_results(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", "--config", str(cfg_file), "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert "[projection_two_sample]" in captured
        assert "results written to" in captured
        data = read_results_csv(out / "results.csv")
        assert data["k"][0] == 0 and data["k"][-1] == 50
        assert (out / "results.json").exists()

    def test_set_override_matches_edited_file(self, tmp_path):
        plain = tmp_path / "a.cfg"
        plain.write_text(BASE.replace("sigma_entry = 0.2", "sigma_entry = 0.7"))
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        base_file = tmp_path / "b.cfg"
        base_file.write_text(BASE)
        assert main(["run", "--config", str(plain), "--out", str(out_a)]) == 0
        assert main(["run", "--config", str(base_file), "--out", str(out_b), "--set", "sigma_entry=0.7"]) == 0
        assert (out_a / "results.csv").read_bytes() == (out_b / "results.csv").read_bytes()

    def test_raw_traces_flag(self, cfg_file, tmp_path):
        out = tmp_path / "raw"
        assert main(["run", "--config", str(cfg_file), "--out", str(out), "--raw-traces"]) == 0
        assert len(list(out.glob("raw_results_*_run*.csv"))) == 2

    def test_master_seed_changes_output(self, cfg_file, tmp_path):
        out_a, out_b = tmp_path / "s0", tmp_path / "s1"
        main(["run", "--config", str(cfg_file), "--out", str(out_a), "--seed", "0"])
        main(["run", "--config", str(cfg_file), "--out", str(out_b), "--seed", "1"])
        assert (out_a / "results.csv").read_bytes() != (out_b / "results.csv").read_bytes()


class TestVerify:
    def test_benchmark_passes(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "v"
        code = main([
            "verify", "--config", str(cfg_file), "--samples", "2000", "--out", str(out),
        ])
        assert code == 0
        captured = capsys.readouterr().out
        assert "using constants" in captured  # p = 2 exact operator norm is auto-derived
        assert captured.count(" pass ") == 4
        report = json.loads((out / "verification.json").read_text())
        assert report["passed"] is True

    def test_monotone_counterexample_fails(self, tmp_path, capsys):
        cfg = tmp_path / "neg.cfg"
        cfg.write_text(BASE + "operator = neg_identity\n")
        assert main(["verify", "--config", str(cfg), "--samples", "300"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_explicit_constants_respected(self, tmp_path, capsys):
        cfg = tmp_path / "c.cfg"
        cfg.write_text(BASE + "L0 = 2.0\nL1 = 0.0\n")
        assert main(["verify", "--config", str(cfg), "--samples", "2000"]) == 0
        assert "using constants" not in capsys.readouterr().out

    def test_exact_norm_helper(self):
        # the p = 2 block-rotation matrix has all singular values sqrt(2)
        import numpy as np

        np.testing.assert_allclose(linear_operator_norm(6), np.sqrt(2.0), rtol=1e-12)


class TestFit:
    def test_fit_after_run(self, cfg_file, tmp_path, capsys):
        out = tmp_path / "out"
        main(["run", "--config", str(cfg_file), "--out", str(out)])
        capsys.readouterr()
        assert main(["fit", "--config", str(cfg_file), "--out", str(out)]) == 0
        captured = capsys.readouterr().out
        assert "slope_last=" in captured and "updated slopes in" in captured
        sidecar = json.loads((out / "results.json").read_text())
        assert "projection_two_sample" in sidecar["slopes"]

    def test_fit_missing_csv(self, cfg_file, tmp_path):
        assert main(["fit", "--config", str(cfg_file), "--out", str(tmp_path / "none")]) == 1


class TestSweep:
    def test_sweep_cells_and_manifest(self, tmp_path, capsys):
        cfg = tmp_path / "sweep.cfg"
        cfg.write_text(BASE.replace("harmonic(a=1, offset=2)", "experiment(c0=10, q=0.6)"))
        out = tmp_path / "sweep"
        code = main([
            "sweep", "--config", str(cfg), "--out", str(out),
            "--cell", "2,0.5,0.6", "--cell", "4,0.8,0.75",
        ])
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert [c["p"] for c in manifest["cells"]] == [2.0, 4.0]
        for cell in manifest["cells"]:
            assert (out / cell["csv"]).exists()
            assert (out / cell["json"]).exists()
        # schedule q is retuned to the cell's q
        cell_cfg = json.loads((out / manifest["cells"][1]["json"]).read_text())["config"]
        assert "q=0.75" in cell_cfg["methods"][0]

    def test_default_cells_cover_four_regimes(self):
        assert len(DEFAULT_SWEEP_CELLS) == 4

    def test_bad_cell_exits_two(self, cfg_file, capsys):
        assert main(["sweep", "--config", str(cfg_file), "--cell", "1,2"]) == 2
        assert "error:" in capsys.readouterr().err


class TestErrorPaths:
    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2
        err = capsys.readouterr().err
        assert "cannot read config file" in err and "--help" in err

    def test_bad_set_pair(self, cfg_file, capsys):
        assert main(["run", "--config", str(cfg_file), "--set", "sigma"]) == 2
        assert "--set expects KEY=VALUE" in capsys.readouterr().err

    def test_unknown_config_key_via_set(self, cfg_file, tmp_path, capsys):
        code = main(["run", "--config", str(cfg_file), "--out", str(tmp_path / "x"), "--set", "bogus=1"])
        assert code == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_field_named_in_value_error(self, cfg_file, tmp_path, capsys):
        code = main(["run", "--config", str(cfg_file), "--out", str(tmp_path / "x"), "--set", "m=5"])
        assert code == 2
        assert "m" in capsys.readouterr().err

    def test_unknown_flag_raises_system_exit(self, cfg_file):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--config", str(cfg_file), "--fast"])
        assert exc.value.code == 2

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(BASE)
    out = tmp_path / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "clipvi.cli", "run", "--config", str(cfg), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "results.csv").exists()
