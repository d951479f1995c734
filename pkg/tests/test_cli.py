"""CLI commands, configuration errors, exit codes, output files."""

import os
import subprocess
import sys

import numpy as np
import pytest

from apeuler import cli, csvio


def run_cli(args):
    """Invoke the CLI in-process, capturing stdout/stderr."""
    import contextlib
    import io
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main(args)
    return code, out.getvalue(), err.getvalue()


GRESHO_CFG = """
[case]
name = gresho
M = 1e-3

[mesh]
n_el = 6
degree = 2

[solver]
scheme = ark3
dt = 2e-3
t_final = 0.008

[output]
snapshot_times = 0.008
"""


class TestTableauCommand:
    def test_ark3_report(self):
        code, out, _ = run_cli(["tableau", "--name", "ark3", "--report"])
        assert code == 0
        assert "type=II" in out
        assert "sa=true" in out
        assert "r_inf=" in out
        r_inf = float([ln for ln in out.splitlines() if ln.startswith("r_inf=")][0][6:])
        assert abs(r_inf) < 1e-12

    def test_ark4_report(self):
        code, out, _ = run_cli(["tableau", "--name", "ark4_ars"])
        assert code == 0
        assert "type=ARS" in out
        assert "sa=true" in out

    def test_ssp3_explicit(self):
        code, out, _ = run_cli(["tableau", "--name", "ssp3_explicit"])
        assert code == 0
        assert "type=explicit" in out

    def test_unknown_name(self):
        code, _, err = run_cli(["tableau", "--name", "nosuch"])
        assert code == 1
        assert "unknown" in err


class TestRunCommand:
    def test_run_writes_outputs(self, tmp_path):
        cfg = tmp_path / "gresho.cfg"
        cfg.write_text(GRESHO_CFG)
        out_dir = tmp_path / "out"
        code, out, err = run_cli(["run", "--config", str(cfg), "--out", str(out_dir)])
        assert code == 0, err
        ts = csvio.read_csv(out_dir / "timeseries.csv")
        assert ts["ke_ratio"][0] == 1.0
        assert len(ts["step"]) == 5
        snaps = sorted(out_dir.glob("field_*.csv"))
        assert snaps
        fields = csvio.read_csv(snaps[0])
        for col in ("x", "y", "rho", "u", "v", "p", "mach_local"):
            assert col in fields
        assert fields["_meta"]["t"] == pytest.approx(0.008)

    def test_deterministic_reruns(self, tmp_path):
        cfg = tmp_path / "gresho.cfg"
        cfg.write_text(GRESHO_CFG)
        outs = []
        for d in ("a", "b"):
            out_dir = tmp_path / d
            code, _, _ = run_cli(["run", "--config", str(cfg), "--out", str(out_dir)])
            assert code == 0
            outs.append((out_dir / "timeseries.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_full_precision_formatting(self, tmp_path):
        cfg = tmp_path / "gresho.cfg"
        cfg.write_text(GRESHO_CFG)
        out_dir = tmp_path / "out"
        run_cli(["run", "--config", str(cfg), "--out", str(out_dir)])
        second_line = (out_dir / "timeseries.csv").read_text().splitlines()[1]
        time_field = second_line.split(",")[1]
        mantissa = time_field.split("e")[0].replace("-", "").replace(".", "")
        assert len(mantissa) == 17   # 17 significant digits

    def test_malformed_config_exits_1(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[case\nname = gresho\n")
        code, _, err = run_cli(["run", "--config", str(cfg)])
        assert code == 1
        assert "config error" in err

    def test_bad_value_exits_1(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[case]\nname = gresho\nM = not_a_number\n")
        code, _, err = run_cli(["run", "--config", str(cfg)])
        assert code == 1

    def test_unknown_case_exits_1(self, tmp_path):
        code, _, err = run_cli(["run", "--case", "nonexistent"])
        assert code == 1
        assert "unknown case" in err

    def test_blowup_exits_2(self, tmp_path):
        # explicit pulses run with a 100x time step must hit the detector
        cfg = tmp_path / "boom.cfg"
        cfg.write_text("""
[case]
name = pulses

[mesh]
n_el = 20
degree = 2

[solver]
scheme = ssp3_explicit
dt = 1.63
t_final = 16.3
""")
        out_dir = tmp_path / "out"
        code, _, err = run_cli(["run", "--config", str(cfg), "--out", str(out_dir)])
        assert code == 2
        assert "abort" in err


class TestSeriesCommands:
    def test_convergence_single_entry_is_usage_error(self):
        code, _, err = run_cli(["convergence", "--case", "vortex", "--n-els", "8"])
        assert code == 1
        assert "usage error" in err

    def test_scaling_single_entry_is_usage_error(self):
        code, _, err = run_cli(["scaling", "--case", "vortex", "--machs", "1e-2"])
        assert code == 1

    def test_tiny_convergence_series(self, tmp_path):
        cfg = tmp_path / "vortex.cfg"
        cfg.write_text("[case]\nname = vortex\nM = 1e-3\n"
                       "[solver]\nscheme = ark3\nt_final = 1.0\n")
        out_dir = tmp_path / "conv"
        code, out, err = run_cli(["convergence", "--config", str(cfg),
                                  "--out", str(out_dir), "--n-els", "4,8"])
        assert code == 0, err
        conv = csvio.read_csv(out_dir / "convergence.csv")
        assert list(conv["N_el"]) == [4.0, 8.0]
        assert np.isnan(conv["rate_u"][0]) and np.isfinite(conv["rate_u"][1])

    def test_tiny_scaling_series(self, tmp_path):
        cfg = tmp_path / "vortex.cfg"
        cfg.write_text("[case]\nname = vortex\n[mesh]\nn_el = 8\n"
                       "[solver]\nscheme = ark3\n")
        out_dir = tmp_path / "scal"
        code, out, err = run_cli(["scaling", "--config", str(cfg), "--out", str(out_dir),
                                  "--machs", "1e-1,1e-2", "--t-final", "0.5"])
        assert code == 0, err
        scal = csvio.read_csv(out_dir / "scaling.csv")
        assert scal["rate_div_u"][1] == pytest.approx(1.0, abs=0.2)
        assert scal["rate_grad_rho"][1] == pytest.approx(2.0, abs=0.25)


class TestConsoleEntryPoint:
    def test_module_invocation(self):
        proc = subprocess.run([sys.executable, "-m", "apeuler.cli", "tableau",
                               "--name", "ark3"],
                              capture_output=True, text=True, timeout=120)
        assert proc.returncode == 0
        assert "type=II" in proc.stdout

    def test_env_log_level(self):
        env = dict(os.environ, APEULER_LOG="error")
        proc = subprocess.run([sys.executable, "-m", "apeuler.cli", "tableau",
                               "--name", "ark4_ars"],
                              capture_output=True, text=True, env=env, timeout=120)
        assert proc.returncode == 0
