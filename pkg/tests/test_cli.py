import json

import numpy as np
import pytest

from ncfsi.cli import main, run_simulation, select_control_point
from ncfsi.config import RunConfig, default_config, parse_config
from ncfsi.errors import ConfigError
from ncfsi.fem import P1B, P2, P2V, Field
from ncfsi.output import TIP_HEADER, format_snapshot, parse_snapshot, read_snapshot, read_tip_csv


def test_empty_config_gives_benchmark_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    cfg = parse_config(path)
    g, m = cfg.geometry, cfg.material
    assert (g.L, g.H, g.cx, g.cy) == (2.5, 0.41, 0.2, 0.2)
    assert m.Ubar == 2.0 and m.rho_f == 1e3 and m.c1 == 1e6
    assert m.nu_f == pytest.approx(1e-3)
    assert cfg.dt == 0.005 and cfg.mesh_vertices == 2199


def test_config_values_and_comments(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment line\nc1 = 2e6   # stiffer flag\n\nnu_f = 2e-3\nmode = classical\nmu_r = 0.3\nramp = yes\nt_ramp = 0.5\n")
    cfg = parse_config(path)
    assert cfg.material.c1 == 2e6
    assert cfg.material.mu == pytest.approx(2.0)
    assert cfg.classical and cfg.material.mu_r == 0.0  # classical mode forces it
    assert cfg.ramp and cfg.t_ramp == 0.5


def test_negative_dt_rejected(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("dt = -1\n")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.key == "dt"


def test_unknown_key_named(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("dt = 0.01\nmuu_r = 0.5\n")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert "muu_r" in str(info.value)
    assert info.value.line == 2


def test_parse_error_has_line_number(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("dt = 0.01\n\nthis line has no equals sign\n")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.line == 3
    assert "line 3" in str(info.value)


def test_bad_value_names_field(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("c1 = stiff\n")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.key == "c1" and info.value.line == 1


def test_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/run.cfg")


def test_tmax_below_dt_rejected():
    with pytest.raises(ConfigError):
        RunConfig(t_max=0.001)


def test_control_point_selection(coarse_bench, geometry):
    assert select_control_point(coarse_bench, geometry.cy) == pytest.approx(geometry.control_point, abs=1e-12)


def _short(tmp_path, name, **kw):
    over = {"t_max": "0.05", "mesh_vertices": "600", "output": str(tmp_path / name), "mode": "classical"}
    over.update({k: str(v) for k, v in kw.items()})
    return default_config(over)


def test_tip_csv_rows(tmp_path, coarse_bench):
    cfg = _short(tmp_path, "a")
    assert run_simulation(cfg, mesh=coarse_bench) == 0
    lines = (tmp_path / "a" / "tip.csv").read_text().splitlines()
    assert lines[0] == TIP_HEADER
    assert len(lines) == 1 + 11
    data = read_tip_csv(tmp_path / "a" / "tip.csv")
    np.testing.assert_allclose(data[:, 0], np.arange(11) * 0.005, atol=1e-15)
    assert np.all(data[0, 1:] == 0)
    for row in lines[2:]:
        for tok in row.split(",")[1:]:
            mant = tok.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
            assert len(mant) <= 17
    record = json.loads((tmp_path / "a" / "run.json").read_text())
    assert record["status"] == "ok" and record["steps_completed"] == 10
    assert record["control_point_A"] == pytest.approx([0.6, 0.2])
    assert record["mesh"]["vertices"] == coarse_bench.n_vertices
    assert "wall_time_s" in record


def test_identical_runs_are_byte_identical(tmp_path, coarse_bench):
    a = _short(tmp_path, "a", mode="cosserat", snapshot_every=5)
    b = _short(tmp_path, "b", mode="cosserat", snapshot_every=5)
    run_simulation(a, mesh=coarse_bench)
    run_simulation(b, mesh=coarse_bench)
    for name in ("tip.csv", "snapshot_000005.txt", "snapshot_000010.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_snapshot_round_trip(tmp_path, coarse_bench):
    cfg = _short(tmp_path, "s", snapshot_every=10, mode="cosserat")
    run_simulation(cfg, mesh=coarse_bench)
    path = tmp_path / "s" / "snapshot_000010.txt"
    text = path.read_text()
    for head in ("FIELD u 2", "FIELD omega 1", "FIELD p 1", "FIELD d 2"):
        assert head in text.splitlines()
    mesh, fields, t, step = read_snapshot(path)
    assert step == 10 and t == pytest.approx(0.05)
    assert format_snapshot(mesh, fields, t, step) == text
    assert np.abs(fields["u"].values).max() > 0


def test_snapshot_rejects_garbage(coarse_bench):
    text = format_snapshot(coarse_bench, {"omega": Field.zeros(P2, coarse_bench)}, 0.0, 0)
    with pytest.raises(ValueError):
        parse_snapshot(text + "FIELD bogus 1\n0\n")


def test_failure_keeps_partial_output(tmp_path, coarse_bench):
    # an absurd time step folds the flag through itself: the run must fail with a step index
    cfg = _short(tmp_path, "f", dt=2.0, t_max=20.0)
    from ncfsi.errors import MeshInversion, SolverFailure

    with pytest.raises((MeshInversion, SolverFailure)) as info:
        run_simulation(cfg, mesh=coarse_bench)
    assert info.value.step is not None
    record = json.loads((tmp_path / "f" / "run.json").read_text())
    assert record["status"] == "failed"
    assert (tmp_path / "f" / "tip.csv").read_text().startswith(TIP_HEADER)


def test_main_flags(tmp_path, capsys):
    out = tmp_path / "m"
    code = main(["--tmax", "0.01", "--classical", "--output", str(out), "--set", "mesh_vertices=600", "--set", "c1=2e6"])
    assert code == 0
    record = json.loads((out / "run.json").read_text())
    assert record["config"]["mode"] == "classical"
    assert record["config"]["material"]["c1"] == 2e6
    assert len((out / "tip.csv").read_text().splitlines()) == 1 + 3


def test_main_config_error(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("muu_r = 1\n")
    assert main(["--config", str(path)]) == 2
    assert "muu_r" in capsys.readouterr().err


def test_bad_material_value_is_config_error(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("rho_s = -5\n")
    with pytest.raises(ConfigError):
        parse_config(path)
