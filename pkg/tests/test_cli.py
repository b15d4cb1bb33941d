import csv
import io
import json
import math

import pytest

from rotqkd.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_STATISTICS, main

IDEAL_SOURCE = {"mean_photon_mu": 1.0, "g2": 0.0, "eta_det": 1.0, "dark_rate": 0.0}


def run(tmp_path, command, config, *extra, name="out"):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / name
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


SMALL_SWEEP = {"qber_sweep": {"n_rounds": 20_000}}
IDEAL_SWEEP = {"qber_sweep": {"n_rounds": 40_000, "source": IDEAL_SOURCE, "noise": {"depolarizing_p": 0.0}}}


def test_sweep_default_angles(tmp_path):
    code, out = run(tmp_path, "qber-sweep", SMALL_SWEEP, name="sweep.csv")
    assert code == EXIT_OK
    table = rows(out)
    assert len(table) == 12
    assert list(table[0]) == ["theta_deg", "encoding", "qber", "std_err", "theory_polarization", "key_fraction"]
    for r in table:
        assert float(r["theory_polarization"]) == pytest.approx(0.5 * math.sin(math.radians(float(r["theta_deg"]))) ** 2)


def test_sweep_ideal_parameters(tmp_path):
    code, out = run(tmp_path, "qber-sweep", IDEAL_SWEEP, name="sweep.csv")
    assert code == EXIT_OK
    for r in rows(out):
        q, se = float(r["qber"]), float(r["std_err"])
        if r["encoding"] == "hybrid":
            assert q == 0
        elif r["theta_deg"] == "90.0":
            assert abs(q - 0.5) <= 3 * se


def test_sweep_deterministic_and_thread_independent(tmp_path):
    _, a = run(tmp_path, "qber-sweep", SMALL_SWEEP, "--seed", "5", name="a.csv")
    _, b = run(tmp_path, "qber-sweep", SMALL_SWEEP, "--seed", "5", "--threads", "3", name="b.csv")
    _, c = run(tmp_path, "qber-sweep", SMALL_SWEEP, "--seed", "6", name="c.csv")
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_tomography_outputs(tmp_path):
    cfg = {"tomography": {"theta_deg": [0, 45, 90], "shots_per_setting": 20_000, "noise": {"depolarizing_p": 0.0}}}
    code, out = run(tmp_path, "tomography", cfg, name="tomo.csv")
    assert code == EXIT_OK
    table = rows(out)
    assert len(table) == 3 * 8
    for r in table:
        if r["encoding"] == "polarization" and r["state"] == "H":
            expected = math.cos(math.radians(float(r["theta_deg"]))) ** 2
            assert float(r["fidelity"]) == pytest.approx(expected, abs=0.02)
        if r["encoding"] == "hybrid":
            assert float(r["fidelity"]) > 0.99
    doc = json.loads(out.with_suffix(".json").read_text())
    assert len(doc["density_matrices"]) == 24
    assert len(doc["density_matrices"][0]["real"]) == 4
    assert len(doc["predicted_qber"]) == 6
    first = out.read_bytes()
    run(tmp_path, "tomography", cfg, name="tomo.csv")
    assert out.read_bytes() == first


def test_keygen_canonical(tmp_path):
    code, out = run(tmp_path, "keygen", {"keygen": {"n_rounds": 2_000_000}}, "--threads", "2", name="key.json")
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    q = rep["qber"]
    assert abs(q["qber"] - 0.0404) < 3 * q["std_error"] + 1e-3
    assert rep["abort"] is False
    assert rep["secret_key_fraction"] == pytest.approx(0.5118, abs=0.05)
    assert rep["classical_channel_frames"] == 6


def test_keygen_full_depolarization(tmp_path):
    cfg = {"keygen": {"n_rounds": 300_000, "noise": {"depolarizing_p": 1.0}}}
    code, out = run(tmp_path, "keygen", cfg, name="key.json")
    rep = json.loads(out.read_text())
    assert code == EXIT_OK
    assert abs(rep["qber"]["qber"] - 0.5) < 3 * rep["qber"]["std_error"]
    assert rep["abort"] is True and rep["secret_key_fraction"] == 0


def test_keygen_std_error_scaling(tmp_path):
    base = {"source": IDEAL_SOURCE, "noise": {"depolarizing_p": 0.2}, "sample_fraction": 1.0}
    _, a = run(tmp_path, "keygen", {"keygen": {**base, "n_rounds": 50_000}}, name="a.json")
    _, b = run(tmp_path, "keygen", {"keygen": {**base, "n_rounds": 200_000}}, name="b.json")
    sa = json.loads(a.read_text())["qber"]["std_error"]
    sb = json.loads(b.read_text())["qber"]["std_error"]
    # quadrupling the rounds halves the binomial error
    assert sb / sa == pytest.approx(0.5, rel=0.05)


def test_hbt_ideal_and_reproducible(tmp_path):
    cfg = {"hbt": {"n_pulses": 5_000_000, "source": {"mean_photon_mu": 0.1, "g2": 0.0}}}
    code, a = run(tmp_path, "hbt", cfg, name="a.json")
    _, b = run(tmp_path, "hbt", cfg, "--threads", "4", name="b.json")
    assert code == EXIT_OK
    assert json.loads(a.read_text())["g2_estimate"] < 0.005
    assert a.read_bytes() == b.read_bytes()


def test_hbt_insufficient_statistics(tmp_path, capsys):
    code, out = run(tmp_path, "hbt", {"hbt": {"n_pulses": 1000}}, name="h.json")
    assert code == EXIT_STATISTICS
    assert not out.exists()
    assert "required pulses" in capsys.readouterr().err


@pytest.mark.parametrize(
    "config",
    [
        {"qber_sweep": {"bogus": 1}},
        {"nonsense": {}},
        {"qber_sweep": {"theta_deg": []}},
        {"keygen": {"encoding": "twisted"}},
        {"keygen": {"source": {"eta_det": 2}}},
        {"keygen": {"n_rounds": 0}},
        {"tomography": {"states": ["Q"]}},
        {"hbt": {"n_pulses": "many"}},
    ],
)
def test_config_errors_leave_no_files(tmp_path, config):
    command = {"qber_sweep": "qber-sweep", "keygen": "keygen", "tomography": "tomography", "hbt": "hbt"}.get(
        next(iter(config)), "keygen"
    )
    code, out = run(tmp_path, command, config, name="result.out")
    assert code == EXIT_CONFIG
    assert sorted(p.name for p in tmp_path.iterdir()) == ["cfg.json"]


def test_bad_json_and_flags(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["keygen", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["keygen", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    assert main(["keygen", "--seed", "-1"]) == EXIT_CONFIG
    assert main(["keygen", "--threads", "0"]) == EXIT_CONFIG
    assert main(["teleport"]) == EXIT_CONFIG


def test_runtime_error(tmp_path):
    cfg = {"qber_sweep": {"n_rounds": 1, "source": {"mean_photon_mu": 0.0, "dark_rate": 0.0}}}
    code, out = run(tmp_path, "qber-sweep", cfg, name="s.csv")
    assert code == EXIT_RUNTIME
    assert not out.exists()


def test_stdout_when_no_out(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"keygen": {"n_rounds": 20_000}}))
    assert main(["keygen", "--config", str(cfg)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["raw_rounds"] == 20_000
