import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from hivctl import ModelParams, SchemaError, TimeGrid, thresholds
from hivctl import config as cfgmod
from hivctl.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_SCHEMA, main
from hivctl.model import equilibrium_point


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


# --- configuration --------------------------------------------------------

def test_default_scenario_is_reference():
    cfg = cfgmod.from_dict({})
    assert cfg.params == ModelParams()
    assert tuple(cfg.initial) == (5, 1, 1, 2, 1)
    assert cfg.grid_for("optimize") == TimeGrid(100.0, 10000)
    assert cfg.grid_for("simulate").h == pytest.approx(0.01)


@pytest.mark.parametrize("doc", [
    {},
    {"params": {"lambda": 2.0, "N": 1500, "A1": 10}, "grid": {"tf": 5.0, "n": 50}},
    {"initial": {"x": 10, "y": 0, "v": 0, "z": 0, "w": 0}, "method": "euler",
     "sweep": {"mode": "paper", "tol": 0.0, "max_iters": 3, "relaxation": 1.0},
     "outputs": {"dir": "elsewhere", "adjoints": True}},
])
def test_config_round_trip(doc):
    cfg = cfgmod.from_dict(doc)
    text = cfgmod.dumps(cfg)
    again = cfgmod.from_dict(json.loads(text))
    assert again == cfg
    assert cfgmod.dumps(again) == text


@pytest.mark.parametrize("doc, field", [
    ({"params": {"lamda": 1.0}}, "params.lamda"),
    ({"params": {"beta": "fast"}}, "params.beta"),
    ({"grid": {"n": 2.5}}, "grid.n"),
    ({"initial": {"v": -1}}, "initial.v"),
    ({"sweep": {"mode": "newton"}}, "sweep.mode"),
    ({"method": "rk45"}, "method"),
    ({"outputs": {"adjoints": "yes"}}, "outputs.adjoints"),
    ({"extra": 1}, "extra"),
    ({"params": {"d": -0.1}}, "params"),
])
def test_schema_errors_name_the_field(doc, field):
    with pytest.raises(SchemaError) as info:
        cfgmod.from_dict(doc)
    assert info.value.field == field


def test_invalid_json_is_schema_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert main(["equilibria", "--config", str(path), "--out", str(tmp_path)]) == EXIT_SCHEMA


def test_missing_config_is_io_error(tmp_path):
    assert main(["equilibria", "--config", str(tmp_path / "absent.json")]) == EXIT_IO


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["equilibria", "--out", str(blocker / "sub")]) == EXIT_IO


# --- simulate -------------------------------------------------------------

def test_simulate_row_count(tmp_path):
    cfg = write_config(tmp_path, {"grid": {"tf": 1.0, "n": 10}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    header, rows = read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "x", "y", "v", "z", "w"]
    assert len(rows) == 11
    assert float(rows[-1][0]) == 1.0


def test_simulate_from_disease_free_point(tmp_path):
    cfg = write_config(tmp_path, {"initial": {"x": 10, "y": 0, "v": 0, "z": 0, "w": 0},
                                  "grid": {"tf": 10.0, "n": 100}})
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    _, rows = read_csv(tmp_path / "trajectory.csv")
    assert all(r[1:] == rows[0][1:] for r in rows)


def test_simulate_default_settles_on_endemic_point(tmp_path):
    assert main(["simulate", "--out", str(tmp_path)]) == EXIT_OK
    _, rows = read_csv(tmp_path / "trajectory.csv")
    assert len(rows) == 50001
    final = np.array([float(v) for v in rows[-1][1:]])
    np.testing.assert_allclose(final, equilibrium_point(ModelParams(), "E4"), rtol=1e-2)


def test_simulate_is_byte_deterministic(tmp_path):
    cfg = write_config(tmp_path, {"grid": {"tf": 30.0, "n": 3000}})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--out", str(b)]) == EXIT_OK
    assert (a / "trajectory.csv").read_bytes() == (b / "trajectory.csv").read_bytes()


def test_simulate_values_round_trip_doubles(tmp_path):
    from hivctl import integrate
    cfg = write_config(tmp_path, {"grid": {"tf": 2.0, "n": 20}})
    main(["simulate", "--config", cfg, "--out", str(tmp_path)])
    _, rows = read_csv(tmp_path / "trajectory.csv")
    traj, _ = integrate(ModelParams(), (5, 1, 1, 2, 1), TimeGrid(2.0, 20))
    np.testing.assert_array_equal(np.array(rows, dtype=float)[:, 1:], traj.states)


# --- equilibria / stability -----------------------------------------------

def run_json(tmp_path, command, doc=None):
    argv = [command, "--out", str(tmp_path)]
    if doc is not None:
        argv += ["--config", write_config(tmp_path, doc)]
    assert main(argv) == EXIT_OK
    return json.loads((tmp_path / f"{command}.json").read_text())


def test_equilibria_default(tmp_path):
    doc = run_json(tmp_path, "equilibria")
    th = doc["thresholds"]
    assert th["r0"] == pytest.approx(2.0833, abs=1e-4)
    assert th["rCtlW1"] == pytest.approx(1.2037, abs=1e-4)
    assert th["rCtlW2"] == pytest.approx(1.3313, abs=1e-4)
    e4 = {e["label"]: e for e in doc["equilibria"]}["E4"]
    assert e4["exists"] and e4["stability"] == "LocallyAsymptoticallyStable"
    assert len(e4["eigenvalues"]) == 5 and all(len(ev) == 2 for ev in e4["eigenvalues"])
    assert [e["label"] for e in doc["equilibria"]] == ["Ef", "E1", "E2", "E3", "E4"]


def test_equilibria_without_infection(tmp_path):
    doc = run_json(tmp_path, "equilibria", {"params": {"beta": 0}})
    by = {e["label"]: e for e in doc["equilibria"]}
    assert by["Ef"]["exists"] and by["Ef"]["stability"] == "LocallyAsymptoticallyStable"
    assert not any(by[k]["exists"] for k in ("E1", "E2", "E3", "E4"))


def test_equilibria_subcritical_burst(tmp_path):
    doc = run_json(tmp_path, "equilibria", {"params": {"N": 480}})
    assert doc["thresholds"]["r0"] == pytest.approx(0.5, rel=1e-12)
    for e in doc["equilibria"][1:]:
        assert e["exists"] is False and e["stability"] == "NotApplicable"


def test_equilibria_singular_parameters_reported_per_point(tmp_path):
    doc = run_json(tmp_path, "equilibria", {"params": {"c": 0}})
    assert doc["thresholds"] is None and "c" in doc["thresholds_error"]
    by = {e["label"]: e for e in doc["equilibria"]}
    assert by["Ef"]["exists"] is True
    # classifying E1 needs the CTL threshold, which divides by c
    assert by["E1"]["exists"] is None and "singular" in by["E1"]["error"]
    assert by["E2"]["exists"] is False


def test_stability_report(tmp_path):
    doc = run_json(tmp_path, "stability")
    e4 = {e["label"]: e for e in doc["equilibria"]}["E4"]
    assert len(e4["characteristic_polynomial"]) == 6
    assert e4["hurwitz_stable"] is True
    assert len(e4["closed_form_coefficients"]) == 5


# --- sweep ----------------------------------------------------------------

def run_sweep(tmp_path, axis, values):
    argv = ["sweep", "--axis", axis, "--values", ",".join(repr(float(v)) for v in values),
            "--out", str(tmp_path)]
    assert main(argv) == EXIT_OK
    header, rows = read_csv(tmp_path / "sweep.csv")
    return [dict(zip(header, r)) for r in rows]


def test_sweep_burst_size_is_linear_in_r0(tmp_path):
    rows = run_sweep(tmp_path, "N", [480, 960, 2000])
    r0 = [float(r["r0"]) for r in rows]
    assert r0[0] == pytest.approx(0.5, rel=1e-12)
    assert abs(r0[1] - 1.0) <= 1e-12
    assert r0[2] == pytest.approx(2.0833, abs=1e-4)
    assert rows[0]["E1_exists"] == "false" and rows[2]["E1_exists"] == "true"


def test_sweep_alias_axis(tmp_path):
    rows = run_sweep(tmp_path, "bigN", [480])
    assert float(rows[0]["r0"]) == pytest.approx(0.5)


def test_sweep_beta_zero(tmp_path):
    rows = run_sweep(tmp_path, "beta", [0.0])
    assert float(rows[0]["r0"]) == 0.0
    assert float(rows[0]["rCtl"]) == 0.0
    assert float(rows[0]["rW"]) == 0.0


def _min_dual(g):
    th = thresholds(replace(ModelParams(), g=g))
    return min(th.rCtlW1, th.rCtlW2) - 1.0


def _bisect(f, lo, hi, iters=200):
    flo = f(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo = mid
        else:
            hi = mid
    return lo, hi


def test_sweep_g_flips_endemic_existence_at_dual_threshold(tmp_path):
    # min(R1, R2) rises through 1 below 1.78e-4 and falls back through 1 above it
    lo1, hi1 = _bisect(_min_dual, 1e-4, 1.78e-4)
    lo2, hi2 = _bisect(_min_dual, 1.78e-4, 3.2e-4)
    values = [lo1 * (1 - 1e-9), hi1 * (1 + 1e-9), 1.78e-4, lo2 * (1 - 1e-9), hi2 * (1 + 1e-9)]
    rows = run_sweep(tmp_path, "g", values)
    assert [r["E4_exists"] for r in rows] == ["false", "true", "true", "true", "false"]
    for r in rows:
        above = min(float(r["rCtlW1"]), float(r["rCtlW2"])) > 1
        assert (r["E4_exists"] == "true") == above


def test_sweep_unknown_axis(tmp_path):
    assert main(["sweep", "--axis", "gamma", "--values", "1", "--out", str(tmp_path)]) == EXIT_SCHEMA


def test_sweep_bad_values(tmp_path):
    assert main(["sweep", "--axis", "N", "--values", "1,x", "--out", str(tmp_path)]) == EXIT_SCHEMA
    assert main(["sweep", "--axis", "N", "--values", "-5", "--out", str(tmp_path)]) == EXIT_SCHEMA


# --- optimize -------------------------------------------------------------

@pytest.fixture(scope="module")
def default_optimize(tmp_path_factory):
    out = tmp_path_factory.mktemp("opt")
    code = main(["optimize", "--out", str(out)])
    return code, out


def test_optimize_default_summary(default_optimize):
    code, out = default_optimize
    assert code == EXIT_OK
    s = json.loads((out / "optimize_summary.json").read_text())
    for key in ("objective", "iterations", "converged", "final_delta", "objective_uncontrolled"):
        assert key in s
    assert s["converged"] and s["final_delta"] <= 1e-4
    assert s["objective"] >= s["objective_uncontrolled"]
    assert s["mean_u1"] > s["mean_u2"]


def test_optimize_default_csv(default_optimize):
    _, out = default_optimize
    header, rows = read_csv(out / "optimal.csv")
    assert header == ["t", "x", "y", "v", "z", "w", "u1", "u2"]
    assert len(rows) == 10001


def test_optimize_prohibitive_costs_with_adjoints(tmp_path):
    cfg = write_config(tmp_path, {"params": {"A1": 1e12, "A2": 1e12}, "grid": {"tf": 20.0, "n": 2000},
                                  "outputs": {"adjoints": True}})
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    header, rows = read_csv(tmp_path / "optimal.csv")
    assert header[-5:] == ["l1", "l2", "l3", "l4", "l5"]
    table = np.array(rows, dtype=float)
    assert table[:, 6:8].max() <= 1e-6
    np.testing.assert_array_equal(table[-1, 8:], 0.0)


def test_optimize_non_convergence_exit_code(tmp_path):
    cfg = write_config(tmp_path, {"params": {"A1": 0.05, "A2": 0.05}, "grid": {"tf": 20.0, "n": 2000},
                                  "sweep": {"max_iters": 2}})
    assert main(["optimize", "--config", cfg, "--out", str(tmp_path)]) == EXIT_NUMERIC
    s = json.loads((tmp_path / "optimize_summary.json").read_text())
    assert s["converged"] is False and s["iterations"] == 2


def test_optimize_single_pass_mode(tmp_path):
    cfg = write_config(tmp_path, {"grid": {"tf": 20.0, "n": 2000}})
    code = main(["optimize", "--mode", "paper", "--config", cfg, "--out", str(tmp_path)])
    s = json.loads((tmp_path / "optimize_summary.json").read_text())
    assert s["mode"] == "paper" and s["method"] == "euler" and s["iterations"] == 1
    assert code == (EXIT_OK if s["converged"] else EXIT_NUMERIC)
