import subprocess
import sys

from tmmse.cli import main
from tmmse.harness import read_rows


def test_run_with_config_and_overrides(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("num_aps = 3\nnum_ues = 2\nantennas_per_ap = 1\npilot_length = 1\ndrops = 5\n")
    out = tmp_path / "out.csv"
    code = main(["run", "--config", str(cfg), "--out", str(out), "--drops", "1", "--trials", "8",
                 "--training-samples", "10", "--scheme", "uni_tmmse,cent_tmmse", "--seed", "3", "--workers", "1"])
    assert code == 0
    rows = read_rows(out)
    assert len(rows) == 2 * 2
    assert (tmp_path / "out.meta.json").exists()
    assert "wrote" in capsys.readouterr().out


def test_run_without_output_prints_summary(capsys):
    code = main(["run", "--drops", "1", "--trials", "5", "--training-samples", "5", "--workers", "1",
                 "--sweep", "L=2", "--scheme", "local_mmse"])
    assert code == 0
    assert "local_mmse" in capsys.readouterr().out


def test_reproduce_writes_plot_data(tmp_path):
    out = tmp_path / "fig4.csv"
    code = main(["reproduce", "fig4", "--out", str(out), "--drops", "1", "--trials", "4",
                 "--training-samples", "4", "--sweep", "N=1", "--workers", "1"])
    assert code == 0
    assert (tmp_path / "fig4.plot.csv").read_text().count("uni_tmmse_sorted") == 1


def test_bad_arguments_exit_nonzero(tmp_path, capsys):
    assert main(["run", "--scheme", "nonsense", "--workers", "1"]) == 2
    assert "error" in capsys.readouterr().err


def test_selftest_subcommand():
    proc = subprocess.run([sys.executable, "-m", "tmmse", "selftest"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("PASS") == 4
