"""Config parsing, CSV layout, and end-to-end command tests."""

import numpy as np
import pytest

from emlab.cli import ConfigError, emit_csv, main, parse_config, read_csv
from emlab.harness import TimeSeries


def test_parse_defaults():
    cfg = parse_config(["nonlinear", "--out", "run.csv"])
    assert cfg.subcommand == "nonlinear"
    assert cfg.n == 16 and cfg.s == 4
    assert cfg.amplitude == pytest.approx(1e-2)
    assert cfg.dt == pytest.approx(2.5e-3)
    assert cfg.t_end == pytest.approx(20.0)
    assert cfg.weights == (0.1, 0.01, 0.005)
    assert cfg.box_scale == 1.0 and cfg.dealias


def test_flag_overrides_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment line\nn = 32\namplitude = 5e-3\n")
    cfg = parse_config(
        ["nonlinear", "--out", "x.csv", "--n", "8", "--config", str(f)]
    )
    assert cfg.n == 8  # flag wins
    assert cfg.amplitude == pytest.approx(5e-3)  # file survives elsewhere


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="frobnicate"):
        parse_config(["roots", "--out", "x.csv", "--frobnicate", "1"])
    f = tmp_path / "bad.cfg"
    f.write_text("mystery = 3\n")
    with pytest.raises(ConfigError, match="mystery"):
        parse_config(["roots", "--out", "x.csv", "--config", str(f)])


def test_value_validation():
    with pytest.raises(ConfigError, match="power of two"):
        parse_config(["nonlinear", "--out", "x.csv", "--n", "12"])
    with pytest.raises(ConfigError, match="n"):
        parse_config(["nonlinear", "--out", "x.csv", "--n", "4"])
    with pytest.raises(ConfigError):
        parse_config(["nonlinear", "--out", "x.csv", "--dt", "-0.1"])
    with pytest.raises(ConfigError, match="K3 < K2 < K1"):
        parse_config(["nonlinear", "--out", "x.csv", "--k1", "0.5", "--k3", "0.4"])
    with pytest.raises(ConfigError, match="subcommand"):
        parse_config(["polish", "--out", "x.csv"])
    with pytest.raises(ConfigError, match="out"):
        parse_config(["roots"])


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    t = np.sort(rng.uniform(0.0, 50.0, size=17))
    series = [
        TimeSeries("alpha", t, np.abs(rng.normal(size=17))),
        TimeSeries("beta", t, 10.0 ** rng.uniform(-18, 3, size=17)),
    ]
    path = tmp_path / "out.csv"
    emit_csv(series, str(path))
    back = read_csv(str(path))
    assert set(back) == {"alpha", "beta"}
    for s in series:
        np.testing.assert_array_equal(back[s.label].times, s.times)
        np.testing.assert_array_equal(back[s.label].values, s.values)


def test_csv_layout(tmp_path):
    path = tmp_path / "out.csv"
    t = np.array([0.0, 1.0])
    emit_csv(
        [TimeSeries("b", t, np.array([1.0, 2.0])),
         TimeSeries("a", t, np.array([3.0, 4.0]))],
        str(path),
    )
    lines = path.read_text().splitlines()
    assert lines[0] == "t,channel,value"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["a", "a", "b", "b"]
    assert path.read_text().endswith("\n")
    empty = tmp_path / "empty.csv"
    emit_csv([], str(empty))
    assert empty.read_text() == "t,channel,value\n"


def test_main_roots(tmp_path, capsys):
    out = tmp_path / "roots.csv"
    rc = main(["roots", "--out", str(out), "--count", "50"])
    captured = capsys.readouterr().out
    assert rc == 0
    assert out.exists()
    assert (tmp_path / "roots.csv.config.json").exists()
    assert "PASS" in captured and "FAIL" not in captured
    data = read_csv(str(out))
    assert "sigma" in data and data["sigma"].times.size == 50


def test_main_config_error_exit_code(tmp_path, capsys):
    assert main(["roots", "--out", str(tmp_path / "x.csv"), "--n", "7"]) == 2
    assert "error:" in capsys.readouterr().err
    assert main(["fit", "--out", str(tmp_path / "y.csv")]) == 2


def test_main_fit_roundtrip(tmp_path, capsys):
    src = tmp_path / "series.csv"
    t = np.geomspace(1.0, 2000.0, 150)
    emit_csv([TimeSeries("decay", t, 4.0 * (1.0 + t) ** -1.25)], str(src))
    out = tmp_path / "fit.csv"
    rc = main([
        "fit", "--out", str(out), "--csv", str(src), "--channel", "decay",
        "--window-lo", "50", "--window-hi", "1000",
    ])
    assert rc == 0
    assert "decay" in capsys.readouterr().out
    fit_rows = read_csv(str(out))
    assert "decay_slope" in fit_rows
    assert fit_rows["decay_slope"].values[0] == pytest.approx(-1.25, abs=2e-3)


def test_main_fit_unknown_channel(tmp_path, capsys):
    src = tmp_path / "series.csv"
    t = np.geomspace(1.0, 100.0, 30)
    emit_csv([TimeSeries("decay", t, 1.0 / t)], str(src))
    rc = main(["fit", "--out", str(tmp_path / "f.csv"), "--csv", str(src),
               "--channel", "nope"])
    assert rc == 1
    assert "nope" in capsys.readouterr().err


def test_main_green_verify(tmp_path, capsys):
    out = tmp_path / "green.csv"
    rc = main(["green-verify", "--out", str(out), "--count", "25"])
    assert rc == 0
    text = capsys.readouterr().out
    assert "PASS" in text and "FAIL" not in text
    assert "disagree" in text.lower()


def test_cli_outputs_are_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["roots", "--out", str(out), "--count", "64"]) == 0
    assert a.read_bytes() == b.read_bytes()
