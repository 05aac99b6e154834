"""Batch driver: initial data -> time loop -> CSV, snapshots, checkpoints, report."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, parse_config
from .diagnostics import (BlowupAccumulator, MonitorSample, accumulate, compute_record)
from .evolution import State, StepError, Stepper, density_floor_check
from .grid import lp_norm
from .initial_data import InitialData, compat_residual
from .lame import cached_eigenbasis
from .scenarios import build_scenario
from .storage import TimeseriesWriter, checkpoint, read_snapshot, restore, write_snapshot

log = logging.getLogger(__name__)

OUTPUT_ENV = "NEMATICFLOW_OUTPUT_DIR"

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FAILED = 2
EXIT_BREAKDOWN = 3


@dataclass
class RunResult:
    status: str
    exit_code: int
    report: dict
    output_dir: Path
    state: State | None = None
    rows: list = field(default_factory=list)


def output_dir_for(cfg: RunConfig, override=None) -> Path:
    return Path(override or os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def initial_state(cfg: RunConfig) -> tuple[State, InitialData | None, list]:
    ini = cfg.initial
    if "snapshot" in ini:
        snap = read_snapshot(ini["snapshot"])
        if snap.state.grid != cfg.grid:
            raise ValueError("snapshot grid differs from the configured grid")
        st = snap.state
        res = compat_residual(st.rho, st.u, st.d, cfg.params, cfg.law, cfg.bc)
        if not res.ok:
            raise ValueError("snapshot data violate the compatibility condition on vacuum cells")
        data = InitialData(st.rho, st.u, st.d, res.g, cfg.delta)
        return State(0.0, st.rho, st.u, st.d), data, [f"initial data from {ini['snapshot']}"]
    sc = build_scenario(ini["scenario"], cfg.grid, cfg.params, cfg.law, cfg.bc, cfg.delta,
                        cfg.seed, **ini.get("params", {}))
    data = sc.initial
    return State(0.0, data.rho0, data.u0, data.d0), data, sc.notes


def _row(rec, acc: BlowupAccumulator) -> dict:
    row = {k: getattr(rec, k) for k in ("t", "mass", "energy", "viscous_dissipation",
                                        "director_dissipation", "min_rho", "max_rho",
                                        "sup_grad_d", "sup_def_tensor", "phi_proxy",
                                        "energy_residual", "unit_drift")}
    row.update(int_grad_d_cubed=acc.int_grad_d_cubed, int_def_tensor=acc.int_def_tensor,
               int_grad_d_squared=acc.int_grad_d_squared)
    return row


def _sample(rec) -> MonitorSample:
    return MonitorSample(rec.max_rho, rec.sup_grad_d, rec.sup_def_tensor)


class _Tracker:
    """Running summaries that go into the report and the checkpoint."""

    def __init__(self, data: dict | None = None):
        d = data or {}
        self.times = list(d.get("times", []))
        self.min_rho = list(d.get("min_rho", []))
        self.grad_u = list(d.get("grad_u", []))
        self.mass0 = d.get("mass0")
        self.peaks = dict(d.get("peaks", {}))
        self.resid = dict(d.get("resid", {}))

    def update(self, rec):
        self.times.append(rec.t)
        self.min_rho.append(rec.min_rho)
        self.grad_u.append(rec.sup_grad_u)
        if self.mass0 is None:
            self.mass0 = rec.mass
        for k in ("max_rho", "sup_grad_d", "sup_def_tensor", "sup_grad_u", "phi_proxy"):
            self.peaks[k] = max(self.peaks.get(k, -math.inf), getattr(rec, k))
        drift = abs(rec.mass - self.mass0) / self.mass0 if self.mass0 else abs(rec.mass)
        for k, v in (("mass_drift", drift), ("energy_residual", abs(rec.energy_residual)),
                     ("unit_drift", rec.unit_drift),
                     ("pre_projection_drift", rec.pre_projection_drift)):
            self.resid[k] = max(self.resid.get(k, 0.0), v)

    def to_dict(self) -> dict:
        return {"times": self.times, "min_rho": self.min_rho, "grad_u": self.grad_u,
                "mass0": self.mass0, "peaks": self.peaks, "resid": self.resid}


def run(cfg: RunConfig | str | dict, output_dir=None, *, _resume=None) -> RunResult:
    """Execute a run; never raises for numerical failures, which end up in the report."""
    if not isinstance(cfg, RunConfig):
        cfg = parse_config(cfg)
    out = output_dir_for(cfg, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = cfg.config_hash
    basis = None
    if cfg.step.mode == "galerkin":
        basis = cached_eigenbasis(cfg.params, cfg.grid, cfg.bc, cfg.step.m, cfg.basis_cache)
    stepper = Stepper(cfg.step, cfg.params, cfg.law, cfg.grid, basis)
    notes: list = []

    if _resume is None:
        state, data, notes = initial_state(cfg)
        state = stepper.prepare(state)
        if data.d0_defect > 0:
            notes.append(f"initial director normalised (largest length defect "
                         f"{data.d0_defect:.3e})")
        rec = compute_record(state, None, 0.0, cfg.params, cfg.law, cfg.bc, q=cfg.phi_q,
                             decomposition=cfg.decomposition, g0=data.g)
        acc = accumulate(BlowupAccumulator(), _sample(rec), rec.t)
        tracker = _Tracker()
        tracker.update(rec)
        rows = [_row(rec, acc)]
        write_snapshot(out / "snapshot_000000.snap", state, chash, __version__)
    else:
        state, acc, extra = _resume
        tracker = _Tracker(extra["tracker"])
        rows = extra["rows"]
        notes = extra.get("notes", [])

    writer = TimeseriesWriter(out / "timeseries.csv", chash, __version__, rows)
    status, code, failure = "completed", EXIT_OK, {}
    try:
        status, code, failure, state, acc = _loop(cfg, stepper, state, acc, tracker, writer,
                                                  out, chash, notes)
    finally:
        writer.close()

    write_snapshot(out / "final.snap", state, chash, __version__)
    _checkpoint(out / "final.ckpt", cfg, state, acc, tracker, writer.rows, notes, chash)
    report = _report(cfg, status, code, failure, state, acc, tracker, notes, chash, out)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return RunResult(status, code, report, out, state, writer.rows)


def _loop(cfg, stepper, state, acc, tracker, writer, out, chash, notes):
    t_end = cfg.t_end
    while state.t < t_end * (1 - 1e-12):
        if cfg.max_steps is not None and state.step_index >= cfg.max_steps:
            break
        try:
            dt = cfg.dt if cfg.dt is not None else stepper.stable_dt(state)
            dt = min(dt, t_end - state.t)
            new, dt, drift = stepper.step(state, dt)
            rec = compute_record(new, state, dt, cfg.params, cfg.law, cfg.bc, drift=drift,
                                 q=cfg.phi_q, decomposition=cfg.decomposition)
        except StepError as exc:
            if exc.quantity:
                return ("breakdown-detected", EXIT_BREAKDOWN,
                        {"quantity": exc.quantity, "stage": exc.stage, "t": state.t,
                         "message": str(exc)}, state, acc)
            return ("failed", EXIT_FAILED, {"stage": exc.stage, "t": state.t,
                                            "message": str(exc)}, state, acc)
        bad = rec.first_nonfinite()
        if bad is not None:
            log.error("breakdown-detected: %s at t=%g", bad, rec.t)
            return ("breakdown-detected", EXIT_BREAKDOWN,
                    {"quantity": bad, "t": rec.t,
                     "message": f"breakdown-detected: {bad} became non-finite"}, state, acc)
        state = new
        acc = accumulate(acc, _sample(rec), rec.t)
        tracker.update(rec)
        k = state.step_index
        if k % cfg.stride == 0:
            writer.write(_row(rec, acc))
        if cfg.snapshot_stride and k % cfg.snapshot_stride == 0:
            write_snapshot(out / f"snapshot_{k:06d}.snap", state, chash, __version__)
        if cfg.checkpoint_stride and k % cfg.checkpoint_stride == 0:
            _checkpoint(out / f"checkpoint_{k:06d}.ckpt", cfg, state, acc, tracker,
                        writer.rows, notes, chash)
    return "completed", EXIT_OK, {}, state, acc


def _checkpoint(path, cfg, state, acc, tracker, rows, notes, chash):
    extra = {"tracker": tracker.to_dict(), "rows": rows, "notes": list(notes)}
    checkpoint(path, state, acc, cfg.raw, chash, __version__, extra)


def resume(path, output_dir=None, t_end: float | None = None) -> RunResult:
    """Continue from a checkpoint; ``t_end`` may extend the horizon (the config hash changes)."""
    state, acc, raw, extra = restore(path, __version__)
    if t_end is not None:
        raw = dict(raw, t_end=float(t_end))
    cfg = parse_config(raw)
    return run(cfg, output_dir, _resume=(state, acc, extra))


def _report(cfg, status, code, failure, state, acc, tracker, notes, chash, out) -> dict:
    floor_delta = tracker.min_rho[0] if tracker.min_rho else 0.0
    floor = density_floor_check(tracker.times, tracker.min_rho, tracker.grad_u, floor_delta)
    margin = floor.min_rho - floor.bound
    return {
        "status": status,
        "exit_code": code,
        "failure": failure,
        "config_hash": chash,
        "code_version": __version__,
        "scenario": cfg.initial.get("scenario", "snapshot"),
        "boundary": cfg.metadata.get("boundary_label"),
        "metadata": cfg.metadata,
        "notes": list(notes),
        "steps": state.step_index,
        "t_final": state.t,
        "peaks": tracker.peaks,
        "accumulators": {"int_grad_d_cubed": acc.int_grad_d_cubed,
                         "int_def_tensor": acc.int_def_tensor,
                         "int_grad_d_squared": acc.int_grad_d_squared,
                         "peak_rho": acc.peak_rho},
        "residuals": tracker.resid,
        "density_floor_check": {"delta": floor_delta, "ok": floor.ok,
                                "worst_margin": float(np.min(margin)) if margin.size else 0.0},
        "final_velocity_l2": lp_norm(state.u, 2),
        "output_dir": str(out),
    }
