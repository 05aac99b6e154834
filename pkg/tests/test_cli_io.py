import json
import struct

import numpy as np
import pytest

from nematicflow import __version__
from nematicflow import runner as R
from nematicflow.cli import main
from nematicflow.config import ConfigError, config_hash, parse_config
from nematicflow.diagnostics import TIMESERIES_COLUMNS, BlowupAccumulator, MonitorSample, accumulate
from nematicflow.evolution import State
from nematicflow.grid import Grid, director, scalar, vector
from nematicflow.storage import (HEADER_SIZE, SnapshotError, VersionMismatch, checkpoint,
                                 read_snapshot, read_timeseries, restore, write_snapshot,
                                 write_timeseries)

MIN = {"grid": {"shape": [16]}, "initial": {"scenario": "equilibrium"}}


def cfg(**over):
    doc = json.loads(json.dumps(MIN))
    doc.update(over)
    return doc


# --- config ---------------------------------------------------------------

def test_minimal_config_defaults():
    c = parse_config(json.dumps(MIN))
    assert c.law.a == 1.0 and c.law.gamma == 1.4
    assert c.step.cfl == 0.5 and c.step.mode == "grid"
    assert c.delta == 0.0
    assert c.family == "CauchyPeriodicProxy" and c.bc == "periodic"
    g = parse_config(cfg(step={"mode": "galerkin"}))
    assert g.delta == 1e-3


def test_config_margin_warning():
    c = parse_config(cfg(viscosity={"mu": 1.0, "lam": 1.0}))
    assert c.metadata["blowup_margin_ok"] is False
    assert c.metadata["warnings"]


def test_config_rejects_inadmissible_viscosity():
    with pytest.raises(ConfigError) as ei:
        parse_config(cfg(viscosity={"mu": 0.0}))
    assert ei.value.path == "viscosity" and "mu > 0" in str(ei.value)


def test_config_mixed_axis_names_axis():
    doc = cfg(grid={"shape": [8, 8], "boundary": ["periodic", ["periodic", "wall"]]})
    with pytest.raises(ConfigError) as ei:
        parse_config(doc)
    assert ei.value.path == "grid.boundary[1]"
    assert "axis 1" in str(ei.value)


def test_config_schema_error_has_path():
    with pytest.raises(ConfigError) as ei:
        parse_config(cfg(step={"cfl": "fast"}))
    assert ei.value.path == "step.cfl"
    with pytest.raises(ConfigError) as ei:
        parse_config(cfg(initial={"scenario": "nope"}))
    assert ei.value.path == "initial.scenario"
    with pytest.raises(ConfigError):
        parse_config("{not json")


def test_config_family_consistency():
    with pytest.raises(ConfigError) as ei:
        parse_config(cfg(boundary_family="DirichletNeumann"))
    assert ei.value.path == "boundary_family"
    c = parse_config(cfg(grid={"shape": [8, 8], "boundary": "wall"},
                         boundary_family="NavierSlipNeumann"))
    assert "domain_note" in c.metadata


def test_config_t_end_positive():
    with pytest.raises(ConfigError) as ei:
        parse_config(cfg(t_end=0))
    assert ei.value.path == "t_end"


def test_config_hash_ignores_output_dir():
    a = parse_config(cfg(output_dir="a"))
    b = parse_config(cfg(output_dir="b"))
    c = parse_config(cfg(t_end=2.0))
    assert a.config_hash == b.config_hash != c.config_hash
    assert len(a.config_hash) == 16 and a.config_hash == config_hash(a.raw)


# --- storage --------------------------------------------------------------

def _state(g, rng, coeffs=None):
    d = director(g, rng.normal(size=(3,) + g.shape)).normalized()
    return State(0.37, scalar(g, rng.random(g.shape)), vector(g, rng.normal(size=(g.dim,) + g.shape)),
                 d, 12, coeffs)


def test_snapshot_round_trip(tmp_path, rng):
    g = Grid.box([6, 5], [1.0, 2.0], ["periodic", "wall"])
    st = _state(g, rng, rng.normal(size=7))
    p = write_snapshot(tmp_path / "s.snap", st, "abc123", __version__)
    head = p.read_bytes()[:HEADER_SIZE]
    assert head[:8] == b"NEMSNAP\0" and struct.unpack("<I", head[8:12])[0] == 1
    snap = read_snapshot(p)
    assert snap.state.grid == g and snap.state.t == st.t and snap.state.step_index == 12
    for f in ("rho", "u", "d"):
        assert np.array_equal(getattr(snap.state, f).values, getattr(st, f).values)
    assert np.array_equal(snap.state.coeffs, st.coeffs)
    assert snap.config_hash == "abc123" and snap.code_version == __version__


def test_snapshot_fields_little_endian_row_major(tmp_path, rng):
    g = Grid.box([5, 4], 1.0)
    st = _state(g, rng)
    p = write_snapshot(tmp_path / "s.snap", st)
    raw = p.read_bytes()
    n = struct.unpack("<Q", raw[16:24])[0]
    rho = np.frombuffer(raw[HEADER_SIZE + n:HEADER_SIZE + n + 8 * 20], dtype="<f8")
    assert np.array_equal(rho.reshape(5, 4), st.rho.values)


def test_snapshot_revalidates_director(tmp_path, rng):
    g = Grid.box([4], 1.0)
    st = _state(g, rng)
    bad = State(st.t, st.rho, st.u, director(g, 1.01 * st.d.values))
    p = write_snapshot(tmp_path / "bad.snap", bad)
    with pytest.raises(SnapshotError, match="unit length"):
        read_snapshot(p)
    assert read_snapshot(p, validate=False).state.d.unit_defect() > 1e-3


def test_snapshot_version_mismatch(tmp_path, rng):
    p = write_snapshot(tmp_path / "s.snap", _state(Grid.box([4], 1.0), rng))
    raw = bytearray(p.read_bytes())
    raw[8:12] = struct.pack("<I", 99)
    p.write_bytes(bytes(raw))
    with pytest.raises(VersionMismatch):
        read_snapshot(p)


def test_snapshot_truncated(tmp_path, rng):
    p = write_snapshot(tmp_path / "s.snap", _state(Grid.box([4], 1.0), rng))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(SnapshotError, match="truncated"):
        read_snapshot(p)


def test_checkpoint_round_trip(tmp_path, rng):
    g = Grid.box([5], 1.0)
    st = _state(g, rng)
    acc = accumulate(BlowupAccumulator(), MonitorSample(1.1, 0.1, 1 / 3), 0.0)
    acc = accumulate(acc, MonitorSample(1.2, 0.7, np.pi), 0.1)
    raw = parse_config(MIN).raw
    p = checkpoint(tmp_path / "c.ckpt", st, acc, raw, config_hash(raw), __version__,
                   {"x": [0.1, 1 / 7]})
    st2, acc2, raw2, extra = restore(p, __version__)
    assert acc2 == acc and raw2 == raw and extra == {"x": [0.1, 1 / 7]}
    assert np.array_equal(st2.u.values, st.u.values)
    with pytest.raises(VersionMismatch):
        restore(p, "9.9.9")
    plain = write_snapshot(tmp_path / "p.snap", st)
    with pytest.raises(SnapshotError, match="checkpoint"):
        restore(plain)


def test_timeseries_round_trip(tmp_path):
    rows = [{c: float(i + j / 3) for j, c in enumerate(TIMESERIES_COLUMNS)} for i in range(4)]
    p = write_timeseries(tmp_path / "ts.csv", rows, "h", "v")
    text = p.read_text().splitlines()
    assert text[0] == "# config_hash=h code_version=v"
    assert text[1].split(",") == list(TIMESERIES_COLUMNS)
    back = read_timeseries(p)
    for c in TIMESERIES_COLUMNS:
        assert np.array_equal(back[c], [r[c] for r in rows])


# --- runner ---------------------------------------------------------------

def test_equilibrium_run_100_steps(tmp_path):
    res = R.run(cfg(step={"dt": 0.01}, t_end=1.0), tmp_path / "eq")
    assert res.exit_code == 0 and res.status == "completed"
    ts = read_timeseries(tmp_path / "eq" / "timeseries.csv")
    assert len(ts["t"]) == 101
    assert np.max(np.abs(ts["energy"] - ts["energy"][0])) <= 1e-12
    rep = json.loads((tmp_path / "eq" / "report.json").read_text())
    assert rep["config_hash"] == res.report["config_hash"] and rep["steps"] == 100
    assert rep["density_floor_check"]["ok"]
    assert read_snapshot(tmp_path / "eq" / "final.snap").config_hash == rep["config_hash"]


@pytest.mark.parametrize("stride", [1, 4, 5])
def test_row_count_matches_stride(tmp_path, stride):
    res = R.run(cfg(step={"dt": 0.05}, t_end=1.0, stride=stride), tmp_path / str(stride))
    ts = read_timeseries(res.output_dir / "timeseries.csv")
    assert len(ts["t"]) == 20 // stride + 1


def test_output_dir_environment_override(tmp_path, monkeypatch):
    monkeypatch.setenv(R.OUTPUT_ENV, str(tmp_path / "env"))
    res = R.run(cfg(step={"dt": 0.5}, t_end=1.0, output_dir=str(tmp_path / "cfg")))
    assert res.output_dir == tmp_path / "env"
    assert (tmp_path / "env" / "report.json").exists()


@pytest.mark.parametrize("mode", ["grid", "galerkin"])
def test_resume_bit_identical(tmp_path, mode):
    doc = {"grid": {"shape": [32], "lengths": 2 * np.pi},
           "initial": {"scenario": "acoustic-1d"},
           "step": {"mode": mode, "m": 9, "dt": 2e-3}, "t_end": 0.1,
           "checkpoint_stride": 25}
    full = R.run(doc, tmp_path / "full")
    part = R.resume(tmp_path / "full" / "checkpoint_000025.ckpt", tmp_path / "part")
    for f in ("rho", "u", "d"):
        assert np.array_equal(getattr(full.state, f).values, getattr(part.state, f).values)
    assert full.state.t == part.state.t
    assert (tmp_path / "full" / "timeseries.csv").read_bytes() == \
        (tmp_path / "part" / "timeseries.csv").read_bytes()
    assert full.report["accumulators"] == part.report["accumulators"]


def test_snapshot_as_initial_data(tmp_path):
    first = R.run(cfg(step={"dt": 0.1}, t_end=0.5), tmp_path / "a")
    doc = cfg(step={"dt": 0.1}, t_end=0.5)
    doc["initial"] = {"snapshot": str(first.output_dir / "final.snap")}
    res = R.run(doc, tmp_path / "b")
    assert res.exit_code == 0


def test_nan_guard_reports_breakdown(tmp_path, monkeypatch):
    import nematicflow.evolution as E
    real = E.step_director
    calls = {"n": 0}

    def poisoned(d, u, dt, renormalize=True):
        calls["n"] += 1
        new, drift = real(d, u, dt, renormalize)
        if calls["n"] == 3:
            vals = new.values.copy()
            vals[:, 2] = np.nan
            return type(new)(new.grid, vals), drift
        return new, drift

    monkeypatch.setattr(E, "step_director", poisoned)
    res = R.run(cfg(step={"dt": 0.01}, t_end=0.1), tmp_path / "nan")
    assert res.status == "breakdown-detected" and res.exit_code == R.EXIT_BREAKDOWN
    assert res.report["failure"]["quantity"] in ("energy", "sup_grad_d", "director_dissipation",
                                                  "unit_drift", "phi_proxy")
    ts = read_timeseries(tmp_path / "nan" / "timeseries.csv")
    assert np.all(np.isfinite(np.column_stack(list(ts.values()))))


def test_nonfinite_momentum_is_breakdown(tmp_path, monkeypatch):
    import nematicflow.evolution as E

    def boom(*a, **k):
        raise E.StepError("momentum", "synthetic", "u")

    monkeypatch.setattr(E, "step_momentum_grid", boom)
    res = R.run(cfg(step={"dt": 0.01}, t_end=0.1), tmp_path / "boom")
    assert res.status == "breakdown-detected" and res.report["failure"]["quantity"] == "u"


def test_adversarial_winding_never_silent(tmp_path):
    doc = {"grid": {"shape": [16, 16], "boundary": "wall"},
           "initial": {"scenario": "winding-defect", "params": {"core": 1e-3}},
           "step": {"diffusion_number": 50.0}, "t_end": 0.02}
    res = R.run(doc, tmp_path / "w")
    assert res.status in ("completed", "breakdown-detected")
    if res.status == "completed":
        ts = read_timeseries(tmp_path / "w" / "timeseries.csv")
        assert np.all(np.isfinite(np.column_stack(list(ts.values()))))
    else:
        assert res.report["failure"]["quantity"]


# --- CLI ------------------------------------------------------------------

def _write(tmp_path, doc, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_cli_validate_and_run(tmp_path, capsys):
    p = _write(tmp_path, cfg(step={"dt": 0.1}, t_end=0.5))
    assert main(["validate", str(p), "--show"]) == 0
    out = capsys.readouterr().out
    assert "config ok" in out and '"gamma": 1.4' in out
    assert main(["run", str(p), "-o", str(tmp_path / "o")]) == 0
    assert "status: completed" in capsys.readouterr().out
    assert main(["inspect", str(tmp_path / "o" / "final.snap")]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["step_index"] == 5 and info["kind"] == "snapshot"
    assert main(["resume", str(tmp_path / "o" / "final.ckpt"), "-o", str(tmp_path / "r"),
                 "--t-end", "1.0"]) == 0
    assert "steps: 10" in capsys.readouterr().out


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = _write(tmp_path, cfg(viscosity={"mu": -1.0}))
    assert main(["validate", str(p)]) == 1
    assert "viscosity" in capsys.readouterr().err
    assert main(["run", str(p)]) == 1


def test_cli_missing_file(tmp_path):
    assert main(["inspect", str(tmp_path / "missing.snap")]) == 2


def test_cli_basis_cache(tmp_path, capsys):
    doc = {"grid": {"shape": [8, 8], "boundary": "wall"}, "initial": {"scenario": "equilibrium"},
           "step": {"mode": "galerkin", "m": 6}}
    p = _write(tmp_path, doc)
    assert main(["basis-cache", str(p), "--cache-dir", str(tmp_path / "cache")]) == 0
    assert "6 modes" in capsys.readouterr().out
    assert len(list((tmp_path / "cache").glob("*.basis"))) == 1
    assert main(["basis-cache", str(p)]) == 1
