import csv
import json
import math

import jsonschema
import numpy as np
import pytest

import spingas.compare as compare
from spingas.cli import RESULT_SCHEMA, main
from spingas.model import HBAR_SI
from spingas.quadrature import QuadratureError

SZZ = [[1, 0, 0, 0], [0, -1, 0, 0], [0, 0, -1, 0], [0, 0, 0, 1]]
PLUS = [[0.5, 0.5], [0.5, 0.5]]


def base_config(kind="square_well", u=0.1, nu=0.01, theta=100.0):
    return {
        "model": {"dim_s": 2, "dim_g": 2, "f": SZZ, "mu": [0.5, 0.5]},
        "potential": {"kind": kind, "u": u},
        "gas": {"nu": nu, "theta": theta},
    }


def run(tmp_path, command, cfg, *flags, name="out"):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = main([command, "--config", str(path), "--output", str(out), *flags])
    doc_path = out / (command.replace("-", "_") + ".json")
    doc = json.loads(doc_path.read_text()) if doc_path.exists() else None
    return code, doc, out


def read_csv(path):
    rows = [r for r in csv.reader(open(path)) if not r[0].startswith("#")]
    return rows[0], [[float(x) if x and x[0] not in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" else x for x in r] for r in rows[1:]]


def test_rates_square_well(tmp_path):
    code, doc, _ = run(tmp_path, "rates", base_config())
    assert code == 0
    jsonschema.validate(doc, RESULT_SCHEMA)
    assert doc["result"]["cm"]["c2"] == pytest.approx(5.01326e-5, rel=1e-6)
    assert doc["result"]["ldl"]["correction_factor"] == pytest.approx(0.994375)
    assert doc["result"]["collision_rate"] == pytest.approx(0.50133, rel=1e-5)


def test_rates_gaussian_and_zero_strength(tmp_path):
    code, doc, _ = run(tmp_path, "rates", base_config("gaussian", theta=1.0))
    assert code == 0
    assert doc["result"]["ldl"]["gamma"] == pytest.approx(1.39997e-3, rel=1e-5)
    code, doc, _ = run(tmp_path, "rates", base_config("gaussian", u=0.0), name="zero")
    assert code == 0
    r = doc["result"]
    assert r["ldl"]["gamma"] == 0 and r["cm"]["c1"] == 0 and r["cm"]["c2"] == 0
    assert r["ratio"] is None


def test_evolve_dephasing(tmp_path):
    cfg = base_config()
    cfg["evolve"] = {"rho0": PLUS, "t_grid": [0, 100, 1000, 5000], "generator": "ldl"}
    code, doc, out = run(tmp_path, "evolve", cfg)
    assert code == 0
    # each of the two nonzero channels carries Gamma * mu_j = Gamma / 2
    gamma = 2 * doc["result"]["rates"][0]
    header, rows = read_csv(out / "trajectory.csv")
    col = header.index("rho_01_re")
    for row in rows:
        assert row[col] == pytest.approx(0.5 * math.exp(-2 * gamma * row[0]), abs=1e-7)


def test_evolve_zero_grid_echoes_state(tmp_path):
    cfg = base_config()
    rho0 = [[0.7, [0.1, -0.2]], [[0.1, 0.2], 0.3]]
    cfg["evolve"] = {"rho0": rho0, "t_grid": [0]}
    code, doc, out = run(tmp_path, "evolve", cfg)
    assert code == 0
    _, rows = read_csv(out / "trajectory.csv")
    assert rows == [[0.0, 0.7, 0.0, 0.1, -0.2, 0.1, 0.2, 0.3, 0.0]]


def test_evolve_cm_versus_ldl_at_high_temperature(tmp_path):
    cfg = base_config(theta=1000.0)
    cfg["model"]["h_s"] = [[0.1, 0.05], [0.05, -0.1]]
    cfg["evolve"] = {"rho0": PLUS, "t_grid": [0, 500, 2000, 10000], "method": "rk_adaptive"}
    _, ldl, out_l = run(tmp_path, "evolve", cfg, "--generator", "ldl", name="ldl")
    _, cm, out_c = run(tmp_path, "evolve", cfg, "--generator", "cm", name="cm")
    assert ldl["overrides"] == {"generator": "ldl"}
    _, a = read_csv(out_l / "trajectory.csv")
    _, b = read_csv(out_c / "trajectory.csv")
    for ra, rb in zip(a, b):
        ma = np.array(ra[1::2]) + 1j * np.array(ra[2::2])
        mb = np.array(rb[1::2]) + 1j * np.array(rb[2::2])
        diff = (ma - mb).reshape(2, 2)
        assert 0.5 * np.abs(np.linalg.eigvalsh(diff)).sum() <= 1e-2


def sim_config(trajectories=400, t_end=200.0):
    cfg = base_config(u=0.05)
    cfg["simulate"] = {"rho0": PLUS, "trajectories": trajectories, "seed": 99, "t_end": t_end,
                       "sample_times": [0, t_end / 2, t_end]}
    return cfg


def test_simulate_outputs_and_determinism(tmp_path):
    cfg = sim_config()
    code, doc, out1 = run(tmp_path, "simulate", cfg, "--threads", "1", name="a")
    assert code == 0
    jsonschema.validate(doc, RESULT_SCHEMA)
    _, _, out2 = run(tmp_path, "simulate", cfg, "--threads", "4", name="b")
    _, _, out3 = run(tmp_path, "simulate", cfg, "--threads", "1", name="c")
    for f in ("ensemble.csv", "simulate.json"):
        assert (out1 / f).read_bytes() == (out2 / f).read_bytes() == (out3 / f).read_bytes()
    r = doc["result"]
    assert r["collisions_expected"] == pytest.approx(0.50133 * 200, rel=1e-4)
    assert len(r["cm_reference"]["trace_distance"]) == 3


def test_simulate_overrides_change_results(tmp_path):
    cfg = sim_config()
    _, a, _ = run(tmp_path, "simulate", cfg, name="a")
    _, b, out = run(tmp_path, "simulate", cfg, "--seed", "5", "--trajectories", "50", name="b")
    assert b["overrides"] == {"seed": 5, "trajectories": 50}
    assert b["result"]["seed"] == 5 and b["result"]["trajectories"] == 50
    assert a["result"]["collisions_mean"] != b["result"]["collisions_mean"]


def test_simulate_trivial_run(tmp_path):
    cfg = sim_config(trajectories=1, t_end=0.0)
    cfg["simulate"]["sample_times"] = [0]
    code, doc, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    _, rows = read_csv(out / "ensemble.csv")
    assert rows[0][:9] == [0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0, 0.5, 0.0]
    assert doc["result"]["se_scalar"] == [None]


def test_compare_gaussian(tmp_path):
    cfg = base_config("gaussian")
    cfg["sweep"] = {"theta_grid": [1, 10, 100, 1000]}
    code, doc, out = run(tmp_path, "compare", cfg, "--threads", "2")
    assert code == 0
    header, rows = read_csv(out / "sweep.csv")
    ratios = [r[header.index("ratio")] for r in rows]
    assert ratios == pytest.approx([0.888889, 0.987654, 0.998752, 0.999875], abs=1e-6)
    assert (out / "sweep.csv").read_text().startswith("# potential=gaussian\n")
    assert [r["theta"] for r in doc["result"]["rows"]] == [1, 10, 100, 1000]


def test_compare_empty_grid(tmp_path):
    cfg = base_config()
    cfg["sweep"] = {"theta_grid": []}
    code, doc, out = run(tmp_path, "compare", cfg)
    assert code == 0
    header, rows = read_csv(out / "sweep.csv")
    assert rows == [] and "ratio" in header


def test_compare_failure_exit_code(tmp_path, monkeypatch):
    def broken(pot, gas, **kw):
        raise QuadratureError("no convergence", 0.0, 1.0)

    monkeypatch.setattr(compare, "cm_c2", broken)
    cfg = base_config()
    cfg["sweep"] = {"theta_grid": [50, 100]}
    code, doc, out = run(tmp_path, "compare", cfg)
    assert code == 3
    assert doc["result"]["failures"]["rows"] == [50, 100]
    assert doc["result"]["rows"][0]["ratio"] is None
    assert (out / "sweep.csv").exists()


def test_lamb_shift(tmp_path):
    cfg = base_config()
    cfg["model"] = {"dim_s": 2, "dim_g": 1, "f": [[0, 1], [1, 0]]}
    code, doc, _ = run(tmp_path, "lamb-shift", cfg)
    assert code == 0
    r = doc["result"]
    assert r["max_abs_difference"] <= 1e-12
    assert r["ldl"][0][1][0] == pytest.approx(4 * math.pi / 3 * 1e-3)
    cfg["lamb_shift"] = {"order": 2}
    code, doc, _ = run(tmp_path, "lamb-shift", cfg, name="o2")
    assert code == 0 and doc["result"]["order"] == 2


@pytest.mark.parametrize("mutate", [
    lambda c: c.update(extra=1),
    lambda c: c["gas"].update(pressure=1.0),
    lambda c: c["gas"].update(theta=-1.0),
    lambda c: c["model"].update(dim_s=17),
    lambda c: c["potential"].update(kind="yukawa"),
    lambda c: c["model"].update(f=[[1, 0], [0, 1]]),
    lambda c: c["model"].update(mu=[0.2, 0.2]),
    lambda c: c["potential"].update(kind="tabulated"),
    lambda c: c.update(lamb_shift={"order": 2}, potential={"kind": "gaussian", "u": 0.1}),
    lambda c: c["gas"].pop("nu"),
])
def test_config_errors_exit_2(tmp_path, mutate):
    cfg = base_config()
    mutate(cfg)
    code, doc, _ = run(tmp_path, "lamb-shift", cfg)
    assert code == 2 and doc is None


def test_missing_block_and_bad_file(tmp_path):
    code, _, _ = run(tmp_path, "evolve", base_config())
    assert code == 2
    assert main(["rates", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert main(["rates", "--config", str(tmp_path / "bad.json")]) == 2
    code, _, _ = run(tmp_path, "rates", base_config(), "--threads", "0")
    assert code == 2


def test_strict_regime(tmp_path):
    cfg = base_config(u=0.1, theta=0.5)
    code, _, _ = run(tmp_path, "rates", cfg, "--strict")
    assert code == 4
    code, _, _ = run(tmp_path, "rates", cfg)
    assert code == 0


def test_si_units_ingestion(tmp_path):
    mass, length = 6.6e-27, 1e-10
    energy = HBAR_SI**2 / (mass * length**2)
    cfg = base_config()
    cfg["units"] = {"mass": mass, "length": length}
    cfg["gas"] = {"n": 0.01 / length**3, "kT": 100.0 * energy}
    cfg["potential"] = {"kind": "square_well", "U0": 0.1 * energy}
    code, doc, _ = run(tmp_path, "rates", cfg)
    assert code == 0
    g = doc["result"]["gas"]
    assert g["nu"] == pytest.approx(0.01) and g["theta"] == pytest.approx(100.0) and g["u"] == pytest.approx(0.1)
    cfg["gas"]["nu"] = 0.01
    assert run(tmp_path, "rates", cfg, name="mixed")[0] == 2


def test_tabulated_potential_path(tmp_path):
    r = np.linspace(0, 1, 100)
    (tmp_path / "well.csv").write_text("r,V\n" + "".join(f"{float(x)!r},0.1\n" for x in r))
    cfg = base_config()
    cfg["potential"] = {"kind": "tabulated", "table": "well.csv"}
    code, doc, _ = run(tmp_path, "rates", cfg)
    assert code == 0
    assert doc["result"]["cm"]["c2"] == pytest.approx(5.01326e-5, rel=1e-5)
    assert doc["result"]["cm"]["c1"] == pytest.approx(4 * math.pi / 3 * 1e-3, rel=1e-9)
    assert doc["result"]["ldl"]["gamma_closed"] is None


def test_unknown_command_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--config", "x.json"])
    assert exc.value.code == 2


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    (tmp_path / "c.json").write_text(json.dumps(base_config()))
    proc = subprocess.run([sys.executable, "-m", "spingas", "rates", "--config", str(tmp_path / "c.json"),
                           "--output", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads((tmp_path / "rates.json").read_text())["command"] == "rates"
