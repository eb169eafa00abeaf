"""Command-line contract: exit codes, file formats, determinism."""

import json
import os

import numpy as np
import pytest

from kakinuma.cli import main
from kakinuma.config import load_config
from kakinuma.errors import ConfigError

BASE = """\
[params]
rho1 = 0.5
h1 = 1.0
delta = 0.1

[spec]
N = {N}
case = H1

[grid]
M = 32

[initial]
zeta_cos = 1:0.01
phi_sin = 1:0.01

[run]
T = 0.2
dt = 0.01
stride = 5
"""


def _write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_simulate_writes_trajectory(tmp_path):
    cfg = _write(tmp_path, BASE.format(N=0))
    out = str(tmp_path / "out")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    lines = open(os.path.join(out, "trajectory.csv")).read().splitlines()
    assert lines[0].startswith("# manifest: ")
    assert lines[1] == "t,H_K,mass,min_margin,E_m,max_abs_zeta"
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert lines[0].split()[-1] == man["config_hash"]
    assert man["halted"] is False
    # rest-state run: constant zero columns
    cfg0 = BASE.format(N=0).replace("zeta_cos = 1:0.01", "").replace(
        "phi_sin = 1:0.01", "")
    path0 = _write(tmp_path, cfg0, "rest.ini")
    out0 = str(tmp_path / "rest")
    assert main(["simulate", "--config", path0, "--out", out0]) == 0
    rows = [l.split(",") for l in open(os.path.join(out0, "trajectory.csv")).read().splitlines()[2:]]
    assert all(float(r[1]) == 0.0 and float(r[5]) == 0.0 for r in rows)


def test_simulate_deterministic_bytes(tmp_path):
    cfg = _write(tmp_path, BASE.format(N=1))
    out1, out2 = str(tmp_path / "a"), str(tmp_path / "b")
    assert main(["simulate", "--config", cfg, "--out", out1]) == 0
    assert main(["simulate", "--config", cfg, "--out", out2]) == 0
    b1 = open(os.path.join(out1, "trajectory.csv"), "rb").read()
    b2 = open(os.path.join(out2, "trajectory.csv"), "rb").read()
    assert b1 == b2
    m1 = open(os.path.join(out1, "manifest.json"), "rb").read()
    m2 = open(os.path.join(out2, "manifest.json"), "rb").read()
    assert m1 == m2


def test_simulate_oscillation_period(tmp_path):
    """A zeta-only small mode is a standing wave: |zeta| dips to zero every
    half period of the model's dispersion relation."""
    from kakinuma.consistency import dispersion_symbols
    from kakinuma.params import ExpansionSpec, validate_params

    text = BASE.format(N=1).replace("zeta_cos = 1:0.01", "zeta_cos = 1:1e-6").replace(
        "phi_sin = 1:0.01", "").replace(
        "T = 0.2", "T = 8.0").replace("dt = 0.01", "dt = 0.004")
    cfg = _write(tmp_path, text)
    out = str(tmp_path / "osc")
    assert main(["simulate", "--config", cfg, "--out", out]) == 0
    rows = [l.split(",") for l in open(os.path.join(out, "trajectory.csv")).read().splitlines()[2:]]
    t = np.array([float(r[0]) for r in rows])
    amp = np.array([float(r[5]) for r in rows])  # max|zeta| column
    # locate the dip minima and sharpen them by the V-shape intersection
    dips = []
    i = 1
    while i < len(amp) - 1:
        if amp[i] < 2e-7 and amp[i] <= amp[i - 1] and amp[i] <= amp[i + 1]:
            tl, al = t[i - 1], amp[i - 1]
            tr, ar = t[i + 1], amp[i + 1]
            dips.append((tl * ar + tr * al) / (al + ar))
            i += 2
        else:
            i += 1
    assert len(dips) >= 2, "need at least two quarter-phase dips"
    _, w2m = dispersion_symbols(1.0, validate_params(0.5, 1.0, 0.1),
                                ExpansionSpec.flat_bottom(1))
    period = 2 * np.pi / np.sqrt(w2m)
    half = np.diff(dips).mean()
    assert 2 * half == pytest.approx(period, rel=1e-3)


def test_instability_halt_exit_code(tmp_path):
    text = BASE.format(N=0).replace("phi_sin = 1:0.01", "phi_cos = 1:2.5")
    cfg = _write(tmp_path, text)
    out = str(tmp_path / "halt")
    assert main(["simulate", "--config", cfg, "--out", out]) == 2
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert man["halted"] is True
    assert man["min_margin"] < 0.0


def test_config_errors_exit_one(tmp_path):
    missing = str(tmp_path / "nope.ini")
    assert main(["simulate", "--config", missing]) == 1
    bad = _write(tmp_path, "[params]\nrho1 = 0.5\n", "bad.ini")
    assert main(["simulate", "--config", bad]) == 1
    nonnum = _write(tmp_path, BASE.format(N=0).replace("0.01", "abc"), "nn.ini")
    assert main(["simulate", "--config", nonnum]) == 1


def test_consistency_sweep_outputs(tmp_path):
    text = BASE.format(N=1).replace(
        "delta = 0.1",
        "delta = 0.1\ndelta_sweep = 0.2,0.15,0.1,0.07,0.05")
    cfg = _write(tmp_path, text)
    out = str(tmp_path / "cons")
    assert main(["consistency", "--config", cfg, "--out", out]) == 0
    doc = json.load(open(os.path.join(out, "slopes.json")))
    assert doc["fits"]["err_r1"]["slope"] == pytest.approx(6.0, abs=0.4)
    assert doc["fits"]["expected_order"] == 6
    header = open(os.path.join(out, "consistency.csv")).read().splitlines()[1]
    assert header == "delta,h1delta,h2delta,err_r1,err_r2,err_r0"


def test_consistency_empty_sweep_is_error(tmp_path):
    # a sweep must be resolvable: break the default by an empty override
    text = BASE.format(N=1).replace("delta = 0.1", "delta = 0.1\ndelta_sweep =  ")
    cfg = _write(tmp_path, text)
    # empty override falls back to the default sweep; force the error by a
    # malformed token instead
    text2 = text.replace("delta_sweep =  ", "delta_sweep = ,,bogus")
    cfg2 = _write(tmp_path, text2, "bad_sweep.ini")
    assert main(["consistency", "--config", cfg2, "--out", str(tmp_path / "x")]) == 1


def test_threads_do_not_change_bytes(tmp_path):
    text = BASE.format(N=0).replace(
        "delta = 0.1", "delta = 0.1\ndelta_sweep = 0.2,0.1,0.05,0.025")
    cfg = _write(tmp_path, text)
    out1, out2 = str(tmp_path / "t1"), str(tmp_path / "t4")
    assert main(["consistency", "--config", cfg, "--out", out1, "--threads", "1"]) == 0
    assert main(["consistency", "--config", cfg, "--out", out2, "--threads", "4"]) == 0
    a = open(os.path.join(out1, "consistency.csv"), "rb").read()
    b = open(os.path.join(out2, "consistency.csv"), "rb").read()
    assert a == b


def test_dispersion_outputs(tmp_path):
    cfg = _write(tmp_path, BASE.format(N=1))
    out = str(tmp_path / "disp")
    assert main(["dispersion", "--config", cfg, "--out", out]) == 0
    doc = json.load(open(os.path.join(out, "slopes.json")))
    assert doc["fits"]["err_omega2"]["slope"] == pytest.approx(6.0, abs=0.3)


def test_prepare_init_outputs(tmp_path):
    cfg = _write(tmp_path, BASE.format(N=1))
    out = str(tmp_path / "init")
    assert main(["prepare-init", "--config", cfg, "--out", out]) == 0
    man = json.load(open(os.path.join(out, "manifest.json")))
    assert set(man["outputs"]) == {"phi1_0.csv", "phi1_1.csv", "phi2_0.csv", "phi2_1.csv"}
    assert max(man["compat_residuals"]) <= 1e-9
    # zero data gives zero stacks and residuals
    cfg0 = _write(tmp_path, BASE.format(N=0).replace("zeta_cos = 1:0.01", "")
                  .replace("phi_sin = 1:0.01", ""), "zero.ini")
    out0 = str(tmp_path / "init0")
    assert main(["prepare-init", "--config", cfg0, "--out", out0]) == 0
    man0 = json.load(open(os.path.join(out0, "manifest.json")))
    assert max(man0["compat_residuals"]) == 0.0


def test_prepare_init_cavitating_state(tmp_path):
    text = BASE.format(N=0).replace("zeta_cos = 1:0.01", "zeta_cos = 1:1.2")
    cfg = _write(tmp_path, text)
    rc = main(["prepare-init", "--config", cfg, "--out", str(tmp_path / "cav")])
    assert rc == 3  # cavitation is a solver-level failure, not a config error


def test_prepare_init_n0_closed_form(tmp_path):
    cfg = _write(tmp_path, BASE.format(N=0).replace("zeta_cos = 1:0.01", ""))
    out = str(tmp_path / "cf")
    assert main(["prepare-init", "--config", cfg, "--out", out]) == 0
    from kakinuma.grid import field_from_csv

    with open(os.path.join(out, "phi1_0.csv")) as fh:
        fh.readline()  # manifest line
        f1 = field_from_csv(fh)
    # flat N=0: phi1 = -phi/h1 = -0.01 sin(x)
    expect = -0.01 * np.sin(f1.grid.nodes)
    assert np.abs(f1.values - expect).max() <= 1e-10


def test_stability_report(tmp_path):
    cfg = _write(tmp_path, BASE.format(N=0).replace("zeta_cos = 1:0.01", "")
                 .replace("phi_sin = 1:0.01", ""))
    out = str(tmp_path / "stab")
    assert main(["stability-report", "--config", cfg, "--out", out]) == 0
    doc = json.load(open(os.path.join(out, "stability.json")))
    assert doc["min_margin"] == 1.0
    assert doc["a"]["min"] == doc["a"]["max"] == 1.0
    assert doc["min_H1"] == doc["min_H2"] == 1.0


def test_hamiltonian_sweep_cli(tmp_path):
    text = BASE.format(N=0).replace(
        "delta = 0.1", "delta = 0.1\ndelta_sweep = 0.2,0.14,0.1,0.05").replace(
        "zeta_cos = 1:0.01", "zeta_cos = 1:0.1").replace(
        "phi_sin = 1:0.01", "phi_cos = 1:1.0")
    cfg = _write(tmp_path, text)
    out = str(tmp_path / "ham")
    assert main(["hamiltonian", "--config", cfg, "--out", out]) == 0
    doc = json.load(open(os.path.join(out, "slopes.json")))
    assert doc["fits"]["err_H"]["slope"] == pytest.approx(2.0, abs=0.4)


def test_config_hash_stability(tmp_path):
    cfg = _write(tmp_path, BASE.format(N=0))
    c1 = load_config(cfg)
    c2 = load_config(cfg)
    assert c1.content_hash() == c2.content_hash()
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.ini"))
