from __future__ import annotations

import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from schwinger_sim import dynamics
from schwinger_sim.cli import commands
from schwinger_sim.cli.config import ConfigError, load_schema, parse_config, validate_output
from schwinger_sim.cli.main import main

LATTICE = """
[lattice]
num_sites = {n}
hopping = 1.0
boundary = "{boundary}"
"""

PROTOCOL = """
[protocol]
M_initial = {M1}
M_target = {M}
durations = {durations}
dt = {dt}
record_every = {record_every}
{extra}
[protocol.field]
kind = "{kind}"
amplitude = {E}
"""

DESIGN = """
[design]
W0 = 10.0
dW = 1.0
wavelength = 500.0
atom = "Li6"
temperature = {T}
"""


def write(tmp_path: Path, text: str, name: str = "run.toml") -> Path:
    p = tmp_path / name
    p.write_text(text)
    return p


def sim_config(n=16, boundary="open", M1=1.0, M=0.5, durations="[2.0, 6.0, 6.0, 2.0, 2.0]",
               dt=0.04, record_every=10, kind="zero", E=0.0, extra="") -> str:
    return LATTICE.format(n=n, boundary=boundary) + PROTOCOL.format(
        M1=M1, M=M, durations=durations, dt=dt, record_every=record_every, kind=kind, E=E, extra=extra)


def run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def read_csv(path: Path):
    with path.open() as fh:
        return list(csv.reader(fh))


class TestBands:
    def config(self, M, grid=41):
        return LATTICE.format(n=16, boundary="periodic") + f"\n[bands]\nmass = {M}\ngrid_points = {grid}\n"

    def test_massless_bands_touch(self, tmp_path, capsys):
        code, _, _ = run(["bands", "--config", str(write(tmp_path, self.config(0.0))),
                          "--out", str(tmp_path)], capsys)
        assert code == 0
        rows = np.array(read_csv(tmp_path / "bands.csv")[1:], dtype=float)
        np.testing.assert_array_equal(rows[:, 1], -rows[:, 2])
        assert rows[0, 2] == pytest.approx(0.0, abs=1e-15)
        assert rows[-1, 2] == pytest.approx(0.0, abs=1e-15)

    def test_min_gap(self, tmp_path, capsys):
        code, out, _ = run(["bands", "--config", str(write(tmp_path, self.config(0.3))),
                            "--out", str(tmp_path)], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "bands.json").read_text())
        assert doc["min_gap"] == pytest.approx(0.6, abs=1e-12)
        validate_output(doc)
        rows = np.array(read_csv(tmp_path / "bands.csv")[1:], dtype=float)
        i = np.argmin(rows[:, 2] - rows[:, 1])
        assert abs(rows[i, 0]) == pytest.approx(math.pi / (2 * 0.5))

    def test_row_count_and_header(self, tmp_path, capsys):
        run(["bands", "--config", str(write(tmp_path, self.config(0.2, 17))), "--out", str(tmp_path)], capsys)
        rows = read_csv(tmp_path / "bands.csv")
        assert rows[0] == ["p", "E_minus", "E_plus", "E_free"]
        data = np.array(rows[1:], dtype=float)
        assert data.shape == (17, 4) and np.all(np.isfinite(data))


class TestSimulate:
    def test_null_run_summary(self, tmp_path, capsys):
        cfg = write(tmp_path, sim_config(durations="[5.0, 40.0, 0.0, 0.0, 40.0]"))
        code, out, _ = run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "summary.json").read_text())
        validate_output(doc)
        assert doc["final_pair_number"] < 1e-3
        assert doc["number_drift"] < 1e-10
        assert doc["pair_rate"] is None
        for key in ("reorthonormalizations", "wall_time", "max_orthonormality_drift"):
            assert key in doc

    def test_byte_identical(self, tmp_path, capsys):
        cfg = write(tmp_path, sim_config(kind="uniform", E=0.05))
        for d in ("a", "b"):
            assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / d)], capsys)[0] == 0
        a = (tmp_path / "a" / "trajectory.csv").read_bytes()
        assert a == (tmp_path / "b" / "trajectory.csv").read_bytes()
        assert len(a.splitlines()) > 3

    def test_csv_round_trips_floats(self, tmp_path, capsys):
        cfg = write(tmp_path, sim_config(kind="uniform", E=0.05))
        run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        rows = read_csv(tmp_path / "trajectory.csv")
        assert rows[0] == ["time", "total_number", "pair_number", "energy"]
        for cell in rows[-1]:
            assert commands.format_float(float(cell)) == cell

    def test_density_columns(self, tmp_path, capsys):
        cfg = write(tmp_path, sim_config() + '\n[output]\ndensity = true\n')
        run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        header = read_csv(tmp_path / "trajectory.csv")[0]
        assert header[4:] == [f"density_{i}" for i in range(16)]

    def test_nan_injection_writes_partial_output(self, tmp_path, capsys, monkeypatch):
        real = dynamics._apply
        calls = {"n": 0}

        def poisoned(v, phase, psi):
            calls["n"] += 1
            out = real(v, phase, psi)
            if calls["n"] >= 150:
                out = out.copy()
                out[0, 0] = np.nan
            return out

        monkeypatch.setattr(dynamics, "_apply", poisoned)
        cfg = write(tmp_path, sim_config(kind="uniform", E=0.05))
        code, _, err = run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 2
        doc = json.loads((tmp_path / "error.json").read_text())
        validate_output(doc)
        assert doc["error_type"] == "numerical" and doc["exit_code"] == 2
        rows = read_csv(tmp_path / "trajectory.csv")
        assert len(rows) - 1 == doc["records"] >= 2
        assert all(math.isfinite(float(c)) for r in rows[1:] for c in r)
        assert float(rows[-1][0]) <= doc["time"]
        assert not (tmp_path / "summary.json").exists()
        assert '"numerical"' in err

    def test_step_size_contract(self, tmp_path, capsys):
        cfg = write(tmp_path, sim_config(dt=0.4))
        code, _, _ = run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 1
        assert "dt" in json.loads((tmp_path / "error.json").read_text())["message"]

    def test_default_step_from_norm(self, tmp_path, capsys):
        text = sim_config(kind="uniform", E=0.05).replace("dt = 0.04\n", "")
        cfg = parse_config(text, "simulate")
        sch = cfg.schedule()
        assert cfg.dt_for(sch) == pytest.approx(0.05 / sch.max_norm())
        code, _, _ = run(["simulate", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)], capsys)
        assert code == 0


class TestSweep:
    def config(self, values, n=200):
        return sim_config(n=n, M1=0.2, M=0.2, durations="[0.0, 0.0, 30.0, 10.0, 0.0]", kind="uniform",
                          E=0.02, extra="field_ramp_duration = 10.0") + (
            f"\n[sweep]\naxis = \"field_amplitude\"\nvalues = {values}\n")

    @pytest.mark.slow
    def test_pair_number_monotone_in_field(self, tmp_path, capsys):
        values = "[0.01, 0.015, 0.02, 0.025, 0.03, 0.035]"
        cfg = write(tmp_path, (self.config(values)))
        code, _, _ = run(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--workers", "2"], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "sweep.json").read_text())
        validate_output(doc)
        pairs = [p["final_pair_number"] for p in doc["points"]]
        assert len(pairs) == 6
        assert all(b > a for a, b in zip(pairs, pairs[1:]))
        assert pairs[-1] > 1e-2
        assert doc["fit"] is not None
        assert doc["fit"]["target_slope"] == pytest.approx(-math.pi * 0.04)

    def test_single_point_refuses_fit(self, tmp_path, capsys):
        cfg = write(tmp_path, (self.config("[0.02]", n=24)))
        code, _, _ = run(["sweep", "--config", str(cfg), "--out", str(tmp_path)], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "sweep.json").read_text())
        assert doc["fit"] is None and doc["fit_message"].startswith("fit refused")
        assert len(read_csv(tmp_path / "sweep.csv")) == 2

    def test_ordering_and_partial(self, tmp_path, capsys):
        # the 5.0 point breaks the band-edge bound and fails on its own
        cfg = write(tmp_path, (self.config("[0.03, 5.0, 0.01, 0.02]", n=24)))
        code, _, _ = run(["sweep", "--config", str(cfg), "--out", str(tmp_path), "--workers", "3"], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "sweep.json").read_text())
        assert [p["index"] for p in doc["points"]] == [0, 1, 2, 3]
        assert [p["value"] for p in doc["points"]] == [0.03, 5.0, 0.01, 0.02]
        assert doc["status"] == "partial"
        assert doc["points"][1]["status"] == "error"
        rows = read_csv(tmp_path / "sweep.csv")
        assert rows[0] == commands._SWEEP_COLUMNS
        assert [r[0] for r in rows[1:]] == ["0", "1", "2", "3"]

    def test_parallel_equals_serial(self, tmp_path, capsys):
        cfg = write(tmp_path, (self.config("[0.01, 0.02, 0.03]", n=24)))
        run(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s"), "--workers", "1"], capsys)
        run(["sweep", "--config", str(cfg), "--out", str(tmp_path / "p"), "--workers", "3"], capsys)
        assert (tmp_path / "s" / "sweep.csv").read_bytes() == (tmp_path / "p" / "sweep.csv").read_bytes()


class TestDesign:
    def test_lithium_report(self, tmp_path, capsys):
        code, out, _ = run(["design", "--config", str(write(tmp_path, DESIGN.format(T=0.3))),
                            "--out", str(tmp_path)], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "design.json").read_text())
        s = doc["scales"]
        assert s["recoil_energy"] == pytest.approx(7.0, rel=0.30)
        assert s["hopping"] == pytest.approx(5.0, rel=0.30)
        assert s["mass_gap"] == 0.5
        assert doc["simulation_units"]["hopping"] == 1.0
        assert "M >> T" in out

    def test_hot_gas_fails_row(self, tmp_path, capsys):
        run(["design", "--config", str(write(tmp_path, DESIGN.format(T=0.8))), "--out", str(tmp_path)], capsys)
        doc = json.loads((tmp_path / "design.json").read_text())
        rows = {c["relation"]: c["status"] for c in doc["hierarchy"]["checks"]}
        assert rows["M >> T"] == "fail"

    def test_schema_round_trip(self, tmp_path, capsys):
        run(["design", "--config", str(write(tmp_path, DESIGN.format(T=0.05))), "--out", str(tmp_path)], capsys)
        doc = json.loads((tmp_path / "design.json").read_text())
        validate_output(json.loads(json.dumps(doc)))
        doc["scales"].pop("hopping")
        with pytest.raises(jsonschema.ValidationError):
            validate_output(doc)


class TestOracleCheck:
    def test_default_battery_passes(self, tmp_path, capsys):
        code, out, _ = run(["oracle-check", "--config", str(write(tmp_path, "")), "--out", str(tmp_path)], capsys)
        assert code == 0
        doc = json.loads((tmp_path / "oracle.json").read_text())
        assert doc["status"] == "ok" and all(c["passed"] for c in doc["checks"])

    def test_broken_tolerance_names_check(self, tmp_path, capsys):
        text = "[oracle]\n[oracle.tolerances]\ndynamics = 1e-20\n"
        code, out, err = run(["oracle-check", "--config", str(write(tmp_path, text)), "--out", str(tmp_path)],
                             capsys)
        assert code == 3
        failed = [c["name"] for c in json.loads(out)["checks"] if not c["passed"]]
        assert "slater_vs_exact_dynamics" in failed
        assert "slater_vs_exact_dynamics" in json.loads((tmp_path / "error.json").read_text())["message"]

    def test_seed_determinism(self, tmp_path, capsys):
        cfg = str(write(tmp_path, "seed = 5\n[oracle]\ndraws = 3\n"))
        docs = []
        for d in ("a", "b"):
            run(["oracle-check", "--config", cfg, "--out", str(tmp_path / d)], capsys)
            docs.append(json.loads((tmp_path / d / "oracle.json").read_text()))
        assert docs[0] == docs[1]
        run(["oracle-check", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "6"], capsys)
        other = json.loads((tmp_path / "c" / "oracle.json").read_text())
        assert other["seed"] == 6
        assert other["checks"] != docs[0]["checks"]


class TestValidation:
    def test_line_level_message(self, tmp_path, capsys):
        text = sim_config().replace("M_initial = 1.0", 'M_initial = "big"')
        code, _, err = run(["simulate", "--config", str(write(tmp_path, text, "bad.toml")),
                            "--out", str(tmp_path)], capsys)
        assert code == 1
        line = text.splitlines().index('M_initial = "big"') + 1
        assert f"bad.toml:{line}: protocol.M_initial" in err
        validate_output(json.loads((tmp_path / "error.json").read_text()))

    def test_field_on_periodic_rejected_before_running(self):
        with pytest.raises(ConfigError, match="open"):
            parse_config(sim_config(boundary="periodic", kind="uniform", E=0.01), "simulate")

    def test_missing_physics_parameters(self):
        text = sim_config().replace("M_target = 0.5\n", "")
        with pytest.raises(ConfigError, match="M_target"):
            parse_config(text, "simulate")

    def test_mass_order(self):
        with pytest.raises(ConfigError, match="M_initial"):
            parse_config(sim_config(M1=0.1, M=0.5), "simulate")

    def test_missing_section(self):
        with pytest.raises(ConfigError, match=r"\[bands\]"):
            parse_config(LATTICE.format(n=8, boundary="open"), "bands")

    def test_every_problem_reported(self):
        text = sim_config().replace("num_sites = 16", "num_sites = -3").replace("dt = 0.04", "dt = -1.0")
        with pytest.raises(ConfigError) as info:
            parse_config(text, "simulate")
        assert len(info.value.messages) >= 2

    def test_unreadable_file(self, tmp_path, capsys):
        code, _, err = run(["bands", "--config", str(tmp_path / "missing.toml"), "--out", str(tmp_path)], capsys)
        assert code == 1 and "cannot read" in err

    def test_mode_mismatch(self):
        with pytest.raises(ConfigError, match="mode"):
            parse_config('mode = "design"\n' + DESIGN.format(T=0.1), "bands")

    def test_schemas_are_valid(self):
        for name in ("config", "output"):
            jsonschema.Draft202012Validator.check_schema(load_schema(name))


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, DESIGN.format(T=0.05))
    proc = subprocess.run([sys.executable, "-m", "schwinger_sim", "design", "--config", str(cfg),
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "omega_osc >> J" in proc.stdout
