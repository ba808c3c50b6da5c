import csv
import io
import subprocess
import sys

import pytest

from ensemble_repeater import analytic as an
from ensemble_repeater.cli import RunConfig, UsageError, fmt_csv, main, parse_kv_text
from ensemble_repeater.params import RepeaterParams


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_rates_csv_round_trips(capsys):
    code, out, err = run(capsys, "--format", "csv", "rates")
    assert code == 0 and err == ""
    values = {row["quantity"]: float(row["value"]) for row in table(out)}
    bd = an.rate_breakdown(RepeaterParams())
    assert values["T_tot_product_s"] == bd.T_tot_product  # exact round trip
    assert values["P0"] == bd.P0
    assert values["F_final"] == bd.F_final


def test_rates_human_output(capsys):
    code, out, _ = run(capsys, "rates")
    assert code == 0
    assert "T_tot_closed_s" in out and "18.975" in out


def test_rates_without_fidelity_warns(capsys):
    code, out, err = run(capsys, "--set", "n=3", "--format", "csv", "rates")
    assert code == 0
    assert "F_final" not in out
    assert "warning" in err and "n=3" in err


def test_config_file_with_comments(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# working point\nalpha2 = 0.3   # readout\n\nL_km=800\ninclude_source_prep = yes\n")
    code, out, _ = run(capsys, "--config", str(cfg), "--set", "eta_d=0.8", "--format", "csv", "rates")
    assert code == 0
    got = {row["quantity"]: float(row["value"]) for row in table(out)}
    p = RepeaterParams(alpha2=0.3, L_total=800.0, eta_d=0.8, include_source_prep=True)
    assert got["T_tot_product_s"] == an.total_time_product(p)


@pytest.mark.parametrize("argv", [
    ("--set", "bogus=1", "rates"),
    ("--set", "eta_d=0", "rates"),
    ("--set", "alpha2=abc", "rates"),
    ("--set", "n", "rates"),
    ("sweep", "--step", "0"),
    ("--config", "/nonexistent/file.cfg", "rates"),
    ("--set", "n=3", "optimize", "--fmin", "0.5"),
])
def test_invalid_input_exit_1(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 1
    assert out == "" and err.startswith("error:")


def test_eta_d_zero_names_field(capsys):
    _, _, err = run(capsys, "--set", "eta_d=0", "rates")
    assert "eta_d" in err


def test_sweep(capsys):
    code, out, _ = run(capsys, "--format", "csv", "sweep", "--lmin", "400", "--lmax", "1200", "--step", "200")
    assert code == 0
    rows = table(out)
    assert len(rows) == 10
    direct = {float(r["distance_km"]): float(r["time_s"]) for r in rows if r["protocol"] == "direct"}
    assert direct[1000.0] == pytest.approx(1e10, rel=1e-12)
    assert {r["links"] for r in rows if r["protocol"] == "partial-readout"} == {"16"}


def test_verify_passes_on_default_grid(capsys):
    code, out, _ = run(capsys, "--format", "csv", "verify")
    assert code == 0
    rows = table(out)
    assert len(rows) == 9
    assert all(r["status"] == "pass" for r in rows)
    assert max(float(r["max_dev_weights"]) for r in rows) <= 1e-9


def test_verify_custom_grid_and_mismatch(tmp_path, capsys):
    grid = tmp_path / "grid.txt"
    grid.write_text("alpha2 = 0.3, 0.4\neta = 0.6\n")
    code, out, _ = run(capsys, "--format", "csv", "verify", "--grid", str(grid))
    assert code == 0 and len(table(out)) == 2
    code, out, _ = run(capsys, "--format", "csv", "verify", "--grid", str(grid), "--perturb", "1e-6")
    assert code == 2
    assert all(r["status"] == "FAIL" for r in table(out))


def test_simulate_is_reproducible(tmp_path, capsys):
    args = ["--format", "csv", "simulate", "--trials", "200", "--seed", "3", "--nmin", "0", "--nmax", "2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["--out", str(a)] + args) == 0
    assert main(["--out", str(b)] + args) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = table(a.read_text())
    assert [r["n"] for r in rows] == ["0", "1", "2"]
    for r in rows:
        assert float(r["ratio"]) == pytest.approx(1.0, abs=0.3)


def test_simulate_single_trial_stderr_na(capsys):
    code, out, _ = run(capsys, "--format", "csv", "simulate", "--trials", "1", "--nmin", "0", "--nmax", "0")
    assert code == 0
    assert table(out)[0]["stderr_s"] == "NA"


def test_optimize(capsys):
    code, out, _ = run(capsys, "--format", "csv", "optimize", "--fmin", "0.885")
    assert code == 0
    got = {r["quantity"]: float(r["value"]) for r in table(out)}
    assert got["F_final"] >= 0.885
    assert got["alpha2_opt"] == pytest.approx(0.1322, abs=1e-4)


def test_optimize_infeasible(capsys):
    code, _, err = run(capsys, "optimize", "--fmin", "0.9999")
    assert code == 1 and "infeasible" in err


def test_parse_kv_text():
    assert parse_kv_text("a = 1 # x\n# only comment\nb=2") == {"a": "1", "b": "2"}
    with pytest.raises(UsageError, match="line 1"):
        parse_kv_text("no equals sign")
    with pytest.raises(UsageError, match="unknown key"):
        parse_kv_text("c = 1", allowed={"a"})
    with pytest.raises(UsageError):
        RunConfig({"x": "1"})


def test_fmt_csv():
    assert fmt_csv(None) == "NA"
    assert fmt_csv(0.1) == "0.1"
    assert float(fmt_csv(1 / 3)) == 1 / 3
    assert fmt_csv(True) == "true"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "ensemble_repeater", "--format", "csv", "rates"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.startswith("quantity,value\n")
