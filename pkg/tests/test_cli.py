import os

import numpy as np
import pytest

from openpair.cli import (ConfigError, emit_config, load_config, main,
                          parse_config_text)

BASE = """
system.omega_a = 1.0
system.omega_b = 0.9
system.phi_a = 0.7071067811865476
system.phi_b = 0.7071067811865476
bath.spectral = superohmic
bath.j0 = 0.001
bath.omega0 = 0.9
bath.z = 3
bath.occupation = thermal
bath.kbt = 0.52
task.t_max = 5
task.n_times = 26
task.methods = secular
"""


def write(tmp_path, text, name="run.config"):
    p = tmp_path / name
    p.write_text(text)
    return p


# --- parsing ------------------------------------------------------------------------

def test_parse_reports_line_numbers():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config_text("a.b = 1\nnot a key value\n")


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate key"):
        parse_config_text("a.b = 1\na.b = 2\n")


def test_bad_number_names_key_and_line(tmp_path):
    cfg = BASE.replace("bath.z = 3", "bath.z = three")
    with pytest.raises(ConfigError, match=r"bath\.z.*line"):
        load_config(write(tmp_path, cfg))


def test_missing_required_key_named(tmp_path):
    cfg = BASE.replace("bath.kbt = 0.52", "")
    with pytest.raises(ConfigError, match="bath.kbt"):
        load_config(write(tmp_path, cfg))


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="sytem.omega_a"):
        load_config(write(tmp_path, BASE + "sytem.omega_a = 1\n"))


def test_unknown_method_rejected(tmp_path):
    cfg = BASE.replace("task.methods = secular", "task.methods = secular, magic")
    with pytest.raises(ConfigError, match="magic"):
        load_config(write(tmp_path, cfg))


def test_both_frequency_styles_rejected(tmp_path):
    with pytest.raises(ConfigError, match="omega_a"):
        load_config(write(tmp_path, BASE + "system.omega_mean = 1.0\n"))


def test_decreasing_grid_rejected(tmp_path):
    with pytest.raises(ConfigError, match="strictly increasing"):
        load_config(write(tmp_path, BASE + "task.detunings = 0.1, 0.05, 0.2\n"))


def test_config_round_trip(tmp_path):
    cfg = load_config(write(tmp_path, BASE + "task.command = trajectory\n"))
    emitted = emit_config(cfg)
    cfg2 = load_config(write(tmp_path, emitted, "resolved.config"))
    assert emit_config(cfg2) == emitted
    assert cfg2.system == cfg.system
    assert cfg2.baths == cfg.baths
    assert np.array_equal(cfg2.times, cfg.times)


# --- commands ---------------------------------------------------------------------------

def test_trajectory_secular_coherence_is_zero(tmp_path):
    cfg = write(tmp_path, BASE + f"output.dir = {tmp_path/'out'}\n")
    assert main(["trajectory", "--config", str(cfg)]) == 0
    csv = (tmp_path / "out" / "trajectory.csv").read_text()
    rows = [line for line in csv.splitlines() if not line.startswith("#")]
    head = rows[0].split(",")
    icol = head.index("secular_re_fab")
    for line in rows[1:]:
        assert float(line.split(",")[icol]) == 0.0


def test_output_is_deterministic(tmp_path):
    cfg = write(tmp_path, BASE)
    main(["trajectory", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["trajectory", "--config", str(cfg), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() == \
        (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_headers_embed_config_and_version(tmp_path):
    cfg = write(tmp_path, BASE)
    main(["trajectory", "--config", str(cfg), "--out", str(tmp_path / "out")])
    text = (tmp_path / "out" / "trajectory.csv").read_text()
    assert text.startswith("# openpair 0.1.0")
    assert "# bath.kbt = 0.52" in text
    gp = (tmp_path / "out" / "trajectory.gp").read_text()
    assert "trajectory.csv" in gp


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    cfg = write(tmp_path, BASE)
    monkeypatch.setenv("OPENPAIR_OUT", str(tmp_path / "envout"))
    assert main(["trajectory", "--config", str(cfg)]) == 0
    assert (tmp_path / "envout" / "trajectory.csv").exists()


def test_poles_decoupled_modes(tmp_path):
    cfg = write(tmp_path, BASE.replace("system.phi_a = 0.7071067811865476",
                                       "system.phi_a = 0.0")
                .replace("system.phi_b = 0.7071067811865476", "system.phi_b = 0.0"))
    assert main(["poles", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 0
    rows = [line.split(",") for line in
            (tmp_path / "out" / "poles.csv").read_text().splitlines()
            if line and not line.startswith("#")][1:]
    res = sorted((float(r[0]), float(r[1])) for r in rows)
    assert res[0] == pytest.approx((0.9, 0.0))
    assert res[1] == pytest.approx((1.0, 0.0))


def test_steady_state_writes_nan_at_degeneracy(tmp_path):
    cfg = write(tmp_path, BASE.replace("task.methods = secular",
                                       "task.methods = br")
                + "task.detunings = -0.05:0.05:3\n")
    assert main(["steady-state", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    lines = [l for l in (tmp_path / "o" / "steady_state.csv").read_text().splitlines()
             if not l.startswith("#")]
    middle = lines[2].split(",")
    assert float(middle[0]) == 0.0
    assert middle[1] == "nan"


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = write(tmp_path, BASE + "task.detunings = 0.02:0.06:3\n")
    main(["sweep-detuning", "--config", str(cfg), "--out", str(tmp_path / "s1")])
    main(["sweep-detuning", "--config", str(cfg), "--out", str(tmp_path / "s2"),
          "--threads", "2"])
    assert (tmp_path / "s1" / "sweep_detuning.csv").read_bytes() == \
        (tmp_path / "s2" / "sweep_detuning.csv").read_bytes()


def test_config_error_exit_code(tmp_path):
    cfg = write(tmp_path, "garbage line without equals\n")
    assert main(["trajectory", "--config", str(cfg)]) == 2


def test_run_requires_command(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["run", "--config", str(cfg)]) == 2


def test_run_uses_config_command(tmp_path):
    cfg = write(tmp_path, BASE + f"task.command = poles\noutput.dir = {tmp_path/'rr'}\n")
    assert main(["run", "--config", str(cfg)]) == 0
    assert (tmp_path / "rr" / "poles.csv").exists()
    assert (tmp_path / "rr" / "resolved.config").exists()
