import csv
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from gimbal_adrc import cli
from gimbal_adrc.config import OUT_ROOT_ENV, load_config, parse_config
from gimbal_adrc.errors import ConfigError
from gimbal_adrc.nn import Mlp

from conftest import CONFIG_DIR

GOLDEN = Path(__file__).parent / "golden" / "metrics_small.csv"

SMALL = {
    "name": "small",
    "scenario": {"duration": 1.5},
    "reference": {"az": {"kind": "sine", "amplitude": 5.0, "frequency": 1.0},
                  "el": {"kind": "step", "amplitude": 3.0, "t0": 0.2}},
    "disturbance": {"seed": 2, "magnitude": 1.0},
    "training": {"duration": 2.0, "lm": {"max_iter": 3}},
    "output": {"settle_skip": 0.5},
}


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_missing_config_exits_2(tmp_path, capsys):
    assert cli.main(["run", str(tmp_path / "nope.yaml")]) == 2
    assert "config not found" in capsys.readouterr().err


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"scenario": {"duraton": 1.0}})
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"colour": "red"})
    with pytest.raises(ConfigError, match="expected a number"):
        parse_config({"scenario": {"duration": "long"}})


def test_degrees_converted():
    config = parse_config({"reference": {"az": {"kind": "sine", "amplitude": 5.0, "frequency": 2.0,
                                                "phase": 90.0}},
                           "plant": {"for_limit_el": [-30.0, 30.0]}})
    ref = config.scenario.reference_az
    assert ref.amplitude == math.radians(5.0) and ref.phase == math.radians(90.0)
    assert ref.frequency == 2.0
    assert config.scenario.params.for_limit_el == (math.radians(-30.0), math.radians(30.0))


def test_sweep_beyond_for_names_the_bound():
    with pytest.raises(ConfigError, match="elevation .* exceeds FOR limit 20.000 deg"):
        parse_config({"training": {"sweep_el": {"amplitude": 2.0, "amplitude_end": 30.0}}})


def test_shipped_configs_load():
    for path in sorted(CONFIG_DIR.glob("*.yaml")):
        config = load_config(path)
        assert config.scenario.n_steps > 0
    distorted = load_config(CONFIG_DIR / "sine_distorted.yaml")
    assert distorted.swap[0] == 3.0
    assert distorted.scenario.params.inertia_az[0, 1] == 0.02
    assert distorted.network.train_from == CONFIG_DIR / "sine_nominal.yaml"


def test_nn_run_without_network_exits_2(tmp_path, capsys):
    path = _write(tmp_path, dict(SMALL, controller={"network": {"path": "missing.gmlp"}}))
    assert cli.main(["run", str(path), "--controller", "nn-adrc", "--out", str(tmp_path / "o")]) == 2
    assert "network file not found" in capsys.readouterr().err
    path = _write(tmp_path, SMALL)
    assert cli.main(["run", str(path), "--controller", "nn-adrc"]) == 2


def test_run_writes_outputs_and_baseline(tmp_path):
    path = _write(tmp_path, SMALL)
    out = tmp_path / "adrc"
    assert cli.main(["run", str(path), "--out", str(out)]) == 0
    for name in ("run.csv", "metrics.csv", "plot_tracking.csv", "plot_tracking.gp"):
        assert (out / name).is_file()
    with open(out / "run.csv") as fh:
        header = fh.readline().strip().split(",")
        assert len(fh.readlines()) == 1500
    assert header[:3] == ["t", "ref_az", "ref_el"]
    ctm = tmp_path / "ctm"
    assert cli.main(["run", str(path), "--controller", "ctm-adrc", "--out", str(ctm),
                     "--baseline", str(out)]) == 0
    base = {r["axis"]: float(r["mte_deg"]) for r in _rows(out / "metrics.csv")}
    for row in _rows(ctm / "metrics.csv"):
        assert row["baseline"] == "adrc"
        expected = 100 * (base[row["axis"]] - float(row["mte_deg"])) / base[row["axis"]]
        assert float(row["pct_decrease"]) == pytest.approx(expected, rel=1e-8)


def test_metrics_match_golden(tmp_path):
    path = _write(tmp_path, SMALL)
    for tag in ("adrc", "ctm-adrc"):
        assert cli.main(["run", str(path), "--controller", tag, "--out", str(tmp_path / tag)]) == 0
    got = [r for tag in ("adrc", "ctm-adrc") for r in _rows(tmp_path / tag / "metrics.csv")]
    want = _rows(GOLDEN)
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert (g["variant"], g["axis"]) == (w["variant"], w["axis"])
        assert float(g["mte_deg"]) == pytest.approx(float(w["mte_deg"]), rel=1e-9)


def test_train_rerun_is_byte_identical(tmp_path):
    path = _write(tmp_path, SMALL)
    a, b = tmp_path / "a.gmlp", tmp_path / "b.gmlp"
    assert cli.main(["train", str(path), "--out", str(a)]) == 0
    assert cli.main(["train", str(path), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert Mlp.load(a).sizes == (6, 20, 20, 2)
    assert (tmp_path / "a.gmlp.loss.csv").read_text() == (tmp_path / "b.gmlp.loss.csv").read_text()


def test_compare_undisturbed_variants_agree(tmp_path):
    data = {k: v for k, v in SMALL.items() if k != "disturbance"}
    data["controller"] = {"network": {"path": "net.gmlp"}}
    path = _write(tmp_path, data)
    out = tmp_path / "cmp"
    assert cli.main(["compare", str(path), "--out", str(out)]) == 0
    assert (out / "net.gmlp").is_file()
    mte = {(r["variant"], r["axis"]): float(r["mte_deg"]) for r in _rows(out / "metrics.csv")}
    for tag in ("ctm-adrc", "nn-adrc"):
        for axis in ("az", "el"):
            assert abs(mte[(tag, axis)] - mte[("adrc", axis)]) < 1e-6


@pytest.mark.filterwarnings("ignore:overflow")
def test_numeric_blowup_exits_3(tmp_path, capsys):
    path = _write(tmp_path, dict(SMALL, disturbance={"seed": 2, "magnitude": 1e9}))
    assert cli.main(["run", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "numeric failure" in capsys.readouterr().err


def test_output_path_is_a_file_exits_4(tmp_path):
    path = _write(tmp_path, SMALL)
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert cli.main(["run", str(path), "--out", str(blocker / "sub")]) == 4


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ROOT_ENV, str(tmp_path / "root"))
    config = load_config(_write(tmp_path, SMALL))
    assert config.out_dir == tmp_path / "root" / "small"
    assert cli.main(["run", str(tmp_path / "cfg.yaml")]) == 0
    assert (tmp_path / "root" / "small" / "metrics.csv").is_file()
    explicit_null = parse_config(dict(SMALL, output={"dir": None}))
    assert explicit_null.out_dir == tmp_path / "root" / "small"


def test_parser_rejects_unknown_controller():
    with pytest.raises(SystemExit):
        cli.main(["run", "x.yaml", "--controller", "pid"])


def test_plot_data_columns(tmp_path):
    path = _write(tmp_path, SMALL)
    out = tmp_path / "o"
    cli.main(["run", str(path), "--out", str(out)])
    rows = np.loadtxt(out / "plot_tracking.csv", delimiter=",", skiprows=1)
    run = np.loadtxt(out / "run.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows[:, 3], np.degrees(run[:, 5]), rtol=1e-9)
    np.testing.assert_allclose(rows[:, 5], np.degrees(run[:, 1] - run[:, 5]), rtol=1e-9, atol=1e-12)
