import json
import subprocess
import sys

import pytest

from gkdvlab import cli
from gkdvlab.errors import BlowupDetected


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


SMALL = {"scenario": "soliton", "grid": {"L": 60.0, "M": 256},
         "solver": {"dt": 5e-3, "t_end": 0.5, "snapshot_stride": 1}}


def test_simulate_and_emit(tmp_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == 0
    assert (out / "manifest.json").exists()
    assert cli.main(["emit-plot-data", "--manifest", str(out), "--quantity", "lambda_path",
                     "--out", str(tmp_path)]) == 0
    assert (tmp_path / "lambda_path.csv").read_text().startswith("t,lambda")
    assert "scenario soliton" in capsys.readouterr().out


def test_emit_plot_data_unknown_quantity(tmp_path):
    out = tmp_path / "run"
    cli.main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(out)])
    assert cli.main(["emit-plot-data", "--manifest", str(out), "--quantity", "nope"]) == 1
    assert cli.main(["emit-plot-data", "--manifest", str(tmp_path / "missing"), "--quantity", "x"]) == 1


@pytest.mark.parametrize("cfg", [{"scenario": "soliton", "grid": {"M": 255}},
                                 {"scenario": "soliton", "extra": 1},
                                 {"grid": {"M": 256}}])
def test_invalid_config_exits_1(tmp_path, cfg):
    assert cli.main(["simulate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_unreadable_config_exits_1(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert cli.main(["simulate", "--config", str(bad)]) == 1
    assert cli.main(["simulate", "--config", str(tmp_path / "absent.json")]) == 1


def test_usage_errors_exit_1(capsys):
    for argv in ([], ["frobnicate"], ["verify", "--level", "medium"], ["emit-plot-data"]):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == 1
    capsys.readouterr()


def test_runtime_failure_exits_2(tmp_path, monkeypatch):
    import gkdvlab.experiments as ex

    def explode(u0, cfg, t0=0.0):
        raise BlowupDetected("boom", time=0.1)

    monkeypatch.setattr(ex, "evolve", explode)
    out = tmp_path / "run"
    assert cli.main(["simulate", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == 2
    assert json.loads((out / "manifest.json").read_text())["status"] == "failed"


def test_scenario_subcommand_overrides_config(tmp_path):
    cfg = {"scenario": "soliton", "grid": {"L": 100.0, "M": 256}, "ensemble": {"n_samples": 3, "n_pairs": 3}}
    out = tmp_path / "norms"
    assert cli.main(["norms", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    assert json.loads((out / "manifest.json").read_text())["scenario"] == "airy_ensemble"


def test_soliton_check(tmp_path, capsys):
    assert cli.main(["soliton-check", "--L", "60", "--M", "2048", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "soliton_check.json").read_text())
    assert rep["name"]
    assert cli.main(["soliton-check", "--M", "3"]) == 1
    capsys.readouterr()


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "gkdvlab", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for sub in ("simulate", "norms", "scatter", "sweep", "soliton-check", "verify", "emit-plot-data"):
        assert sub in r.stdout
