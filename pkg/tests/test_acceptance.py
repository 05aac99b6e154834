"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines are collected into a summary section) or directly:

    python tests/test_acceptance.py
"""

import os
import sys
import tempfile
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from nematicflow import grid as G  # noqa: E402
from nematicflow.config import parse_config  # noqa: E402
from nematicflow.diagnostics import (BlowupAccumulator, MonitorSample, accumulate,  # noqa: E402
                                     blowup_monitors, compute_record, dirichlet_energy,
                                     energy_identity_residual)
from nematicflow.evolution import (State, StepConfig, Stepper, assemble_mass_matrix,  # noqa: E402
                                   density_floor_check)
from nematicflow.grid import Grid, director, scalar, vector  # noqa: E402
from nematicflow.initial_data import (admissible_datum, build_initial_data,  # noqa: E402
                                      compat_residual, regularize_density, solve_compatibility)
from nematicflow.lame import (LameParams, apply_lame, eigenbasis, h1_norm,  # noqa: E402
                              helmholtz_decompose, solve_lame, w2p_constant)
from nematicflow.pressure import Isentropic  # noqa: E402
from nematicflow.runner import run  # noqa: E402
from nematicflow.scenarios import build_scenario  # noqa: E402
from nematicflow.storage import read_timeseries  # noqa: E402

TWO_PI = 2 * np.pi
P = LameParams(1.0, 0.0)
LAW = Isentropic(1.0, 1.4)


def _smooth_periodic(g, rng, ncomp, kmax=3):
    coords = g.coords()
    out = np.zeros((ncomp,) + g.shape)
    for c in range(ncomp):
        for _ in range(6):
            k = rng.integers(-kmax, kmax + 1, size=g.dim)
            phase = rng.uniform(0, TWO_PI)
            arg = sum(kk * TWO_PI / L * x for kk, L, x in zip(k, g.lengths, coords))
            out[c] += rng.normal() * np.cos(arg + phase)
    return out


def _scenario_state(name, grid, bc, delta=0.0, params=P, **kw):
    sc = build_scenario(name, grid, params, LAW, bc, delta, **kw)
    ini = sc.initial
    return State(0.0, ini.rho0, ini.u0, ini.d0), sc.step_overrides


# ---------------------------------------------------------------------------
# 1. manufactured director solution

def _heat_error(n, dt):
    g = Grid.box([n], TWO_PI)
    s, over = _scenario_state("director-heat-1d", g, "periodic")
    st = Stepper(StepConfig(bc="periodic", **over), P, LAW, g)
    steps = int(round(1.0 / dt))
    for _ in range(steps):
        s, _, _ = st.step(s, dt)
    x, = g.coords()
    th = np.arctan2(s.d.values[1], s.d.values[0])
    return float(np.max(np.abs(th - np.exp(-s.t) * np.sin(x))))


def check_1():
    t0 = time.perf_counter()
    e1 = _heat_error(128, 2.5e-4)
    runtime = time.perf_counter() - t0
    e2 = _heat_error(256, 1.25e-4)
    ratio = e1 / e2
    ok = e1 <= 2e-3 and ratio >= 2.5 and runtime < 10
    return ok, f"L_inf error {e1:.3e} (<= 2e-3), refinement factor {ratio:.2f} (>= 2.5), " \
               f"runtime {runtime:.2f}s (< 10s)"


# ---------------------------------------------------------------------------
# 2. harmonic-map flow energy monotonicity

def check_2():
    g = Grid.box([32, 32], 1.0, "wall")
    s, _ = _scenario_state("winding-defect", g, "dirichlet", core=0.2)
    st = Stepper(StepConfig(bc="dirichlet", freeze_flow=True), P, LAW, g)
    e = dirichlet_energy(s.d)
    worst = -np.inf
    for _ in range(2000):
        s, _, _ = st.step(s, 2e-4)
        e_new = dirichlet_energy(s.d)
        worst = max(worst, e_new - e)
        e = e_new
    return worst <= 1e-10, f"largest step-to-step increase {worst:.3e} over 2000 steps " \
                           f"(<= 1e-10)"


# ---------------------------------------------------------------------------
# 3. mass conservation

def _mass_drift(name, grid, bc, steps=1000, mode="grid", m=16, delta=0.0):
    s, over = _scenario_state(name, grid, bc, delta)
    basis = eigenbasis(P, grid, bc, m) if mode == "galerkin" else None
    st = Stepper(StepConfig(mode=mode, m=m, bc=bc, **over), P, LAW, grid, basis)
    s = st.prepare(s)
    m0 = G.integrate(s.rho)
    worst = 0.0
    for _ in range(steps):
        s, _, _ = st.step(s)
        worst = max(worst, abs(G.integrate(s.rho) - m0) / m0)
    return worst


def check_3():
    cases = {
        "periodic acoustic-1d": _mass_drift("acoustic-1d", Grid.box([64], TWO_PI), "periodic"),
        "periodic vacuum-bump": _mass_drift("vacuum-bump", Grid.box([64], TWO_PI), "periodic"),
        "wall vacuum-bump": _mass_drift("vacuum-bump", Grid.box([16, 16], 1.0, "wall"),
                                        "dirichlet"),
        "slip channel": _mass_drift("shear-navier-slip",
                                    Grid.box([16, 12], [2.0, 1.0], ["periodic", "wall"]),
                                    "navier_slip"),
    }
    worst = max(cases.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in cases.items())
    return worst <= 1e-12, f"max relative drift over 1000 steps: {detail} (<= 1e-12)"


# ---------------------------------------------------------------------------
# 4. unit-director constraint

def _unit_run(name, grid, bc, steps):
    s, over = _scenario_state(name, grid, bc)
    st = Stepper(StepConfig(bc=bc, **over), P, LAW, grid)
    post, ratio = 0.0, 0.0
    for _ in range(steps):
        gd = blowup_monitors(s, bc).grad_d_inf
        s, dt, drift = st.step(s)
        post = max(post, s.d.unit_defect())
        ratio = max(ratio, drift / (10 * dt * (gd ** 2 + 1)))
    return post, ratio


def check_4():
    runs = [_unit_run("shear-navier-slip", Grid.box([32, 16], [2.0, 1.0], ["periodic", "wall"]),
                      "navier_slip", 200),
            _unit_run("director-heat-1d", Grid.box([128], TWO_PI), "periodic", 200),
            _unit_run("winding-defect", Grid.box([24, 24], 1.0, "wall"), "dirichlet", 100)]
    post = max(r[0] for r in runs)
    ratio = max(r[1] for r in runs)
    ok = post <= 1e-12 and ratio <= 1.0
    return ok, f"post-projection defect {post:.1e} (<= 1e-12), pre-projection drift at " \
               f"{ratio:.3f} of 10 dt (|grad d|^2 + 1) (<= 1)"


# ---------------------------------------------------------------------------
# 5. Lamé eigenvalues, solves and the W^{2,p} constant

def check_5(rng=None):
    rng = rng or np.random.default_rng(5)
    p = LameParams(1.0, 0.5)
    b = eigenbasis(p, Grid.box([64], TWO_PI), "periodic", 15)
    ks = np.array([0] + [k for k in range(1, 8) for _ in (0, 1)])
    exact = -(2 * p.mu + p.lam) * ks ** 2
    eig_err = float(np.max(np.abs(b.eigenvalues - exact) / np.maximum(np.abs(exact), 1)))

    g = Grid.box([32, 24], TWO_PI)
    worst = 0.0
    for _ in range(5):
        f = vector(g, _smooth_periodic(g, rng, 2))
        f = f - vector(g, f.values.mean(axis=(1, 2), keepdims=True) * np.ones((2,) + g.shape))
        u = solve_lame(p, f)
        r = apply_lame(p, u).values - f.values
        worst = max(worst, np.linalg.norm(r) / np.linalg.norm(f.values))

    consts = []
    for n in (32, 64):
        gg = Grid.box([n, n], TWO_PI)
        x, y = gg.coords()
        ff = vector(gg, [np.sin(x) * np.cos(2 * y), np.cos(x + y)])
        consts.append(w2p_constant(p, ff, p=6.0))
    spread = abs(consts[0] - consts[1]) / consts[1]
    ok = eig_err <= 1e-10 and worst <= 1e-7 and spread <= 0.2
    return ok, f"eigenvalue error {eig_err:.1e} (<= 1e-10), solve residual {worst:.1e} " \
               f"(<= 1e-7), W2p constant {consts[0]:.3f} vs {consts[1]:.3f}, " \
               f"spread {spread:.1%} (<= 20%)"


# ---------------------------------------------------------------------------
# 6. Helmholtz decomposition

def check_6(rng=None):
    rng = rng or np.random.default_rng(6)
    worst_orth, worst_div = 0.0, 0.0
    for trial in range(50):
        g = Grid.box([24, 20], TWO_PI) if trial % 2 else Grid.box([16, 16, 12], TWO_PI)
        v = vector(g, _smooth_periodic(g, rng, g.dim))
        Gf, H = helmholtz_decompose(v)
        n2 = G.inner(v, v)
        worst_orth = max(worst_orth, abs(G.inner(G.grad(Gf), H)) / n2)
        worst_div = max(worst_div, G.lp_norm(G.div(H), 2) / np.sqrt(n2))
    ok = worst_orth <= 1e-10 and worst_div <= 1e-6
    return ok, f"50 trials: |(grad G, H)|/||g||^2 {worst_orth:.1e} (<= 1e-10), " \
               f"||div H||/||g|| {worst_div:.1e} (<= 1e-6)"


# ---------------------------------------------------------------------------
# 7. mass-matrix positivity

def check_7(rng=None):
    rng = rng or np.random.default_rng(7)
    delta = 1e-3
    worst = np.inf
    cases = [(Grid.box([64], TWO_PI), "periodic"), (Grid.box([12, 12], TWO_PI), "periodic"),
             (Grid.box([12, 12], 1.0, "wall"), "dirichlet"),
             (Grid.box([12, 12], 1.0, "wall"), "navier_slip")]
    for g, bc in cases:
        b = eigenbasis(P, g, bc, 32)
        for m in (4, 16, 32):
            bm = b.truncated(m)
            lo_gram = np.linalg.eigvalsh(bm.l2_gram())[0]
            for _ in range(3):
                rho = scalar(g, delta + rng.random(g.shape) * rng.choice([0.0, 1.0], g.shape))
                lo = np.linalg.eigvalsh(assemble_mass_matrix(rho, bm))[0]
                worst = min(worst, lo - (delta * lo_gram - 1e-12))
    return worst >= 0, f"min over cases of lambda_min(M) - (delta lambda_min(Gram) - 1e-12) " \
                       f"= {worst:.3e} (>= 0)"


# ---------------------------------------------------------------------------
# 8. density lower bound on Galerkin runs

def _floor_run(name, grid, bc, m, T, delta=1e-2):
    s, over = _scenario_state(name, grid, bc, delta)
    st = Stepper(StepConfig(mode="galerkin", m=m, bc=bc, **over), P, LAW, grid,
                 eigenbasis(P, grid, bc, m))
    s = st.prepare(s)
    rec = compute_record(s, None, 0.0, P, LAW, bc)
    times, mins, grads = [rec.t], [rec.min_rho], [rec.sup_grad_u]
    while s.t < T - 1e-12:
        prev = s
        s, dt, drift = st.step(s, min(st.stable_dt(s), T - s.t))
        rec = compute_record(s, prev, dt, P, LAW, bc)
        times.append(rec.t)
        mins.append(rec.min_rho)
        grads.append(rec.sup_grad_u)
    rep = density_floor_check(times, mins, grads, delta)
    return rep.ok, float(np.min(rep.min_rho / rep.bound)), len(times) - 1


def check_8():
    runs = {"vacuum-bump 1D": _floor_run("vacuum-bump", Grid.box([64], TWO_PI), "periodic",
                                         32, 0.5),
            "vacuum-bump 2D walls": _floor_run("vacuum-bump", Grid.box([12, 12], 1.0, "wall"),
                                               "dirichlet", 24, 0.1)}
    ok = all(r[0] for r in runs.values())
    detail = ", ".join(f"{k}: min rho/bound {r[1]:.3f} over {r[2]} steps"
                       for k, r in runs.items())
    return ok, f"delta = 1e-2; {detail} (>= 1 at every recorded time)"


# ---------------------------------------------------------------------------
# 9. energy-identity residual on the acoustic run

def _acoustic_residual(n, T=0.5):
    g = Grid.box([n], TWO_PI)
    s, _ = _scenario_state("acoustic-1d", g, "periodic")
    st = Stepper(StepConfig(bc="periodic", dt_max=2.0 / n), P, LAW, g)
    worst = 0.0
    while s.t < T - 1e-12:
        prev = s
        s, dt, _ = st.step(s, min(2.0 / n, T - s.t))
        worst = max(worst, abs(energy_identity_residual(prev, s, dt, P, LAW, "periodic")))
    return worst


def check_9():
    r128, r256 = _acoustic_residual(128), _acoustic_residual(256)
    ok = r256 <= 0.05 and r256 < r128
    return ok, f"max |residual|/dissipation {r256:.2e} at N=256 (<= 5%), {r128:.2e} at N=128 " \
               f"(must decrease)"


# ---------------------------------------------------------------------------
# 10. compatibility round trip and delta-sequence

def check_10(rng=None):
    rng = rng or np.random.default_rng(10)
    g = Grid.box([16, 16], 1.0, "wall")
    x, y = g.coords()
    bump = np.clip(1 - ((x - 0.5) ** 2 + (y - 0.5) ** 2) / 0.12, 0, None) ** 2
    th = 0.3 * np.cos(np.pi * x) * np.cos(np.pi * y)
    d0 = director(g, [np.cos(th), np.sin(th), 0 * x])
    rho0 = scalar(g, bump)
    worst = 0.0
    for bc in ("dirichlet", "navier_slip"):
        gd = admissible_datum(rho0, vector(g, rng.normal(size=(2,) + g.shape)), bc)
        u = solve_compatibility(rho0, d0, gd, P, LAW, bc)
        res = compat_residual(rho0, u, d0, P, LAW, bc)
        live = rho0.values > 1e-10
        if not res.ok:
            worst = np.inf
            continue
        err = np.linalg.norm(res.g.values[:, live] - gd.values[:, live]) / \
            np.linalg.norm(gd.values[:, live])
        worst = max(worst, err)
    h = vector(g, [np.sin(np.pi * x) * np.sin(np.pi * y), np.cos(np.pi * x) * 0.5])
    us = []
    for delta in (1e-2, 1e-3, 1e-4):
        rho = regularize_density(rho0, delta)
        us.append(solve_compatibility(rho, d0, admissible_datum(rho0, h), P, LAW, "dirichlet"))
    d12 = h1_norm(us[0] - us[1], "dirichlet")
    d23 = h1_norm(us[1] - us[2], "dirichlet")
    ok = worst <= 1e-7 and d23 < d12
    return ok, f"recovered g relative error {worst:.1e} (<= 1e-7) with vacuum present, " \
               f"H1 gaps {d12:.3e} -> {d23:.3e} (decreasing)"


# ---------------------------------------------------------------------------
# 11. two-scheme agreement

def _two_scheme_gap(n, dt, T=0.5):
    g = Grid.box([n], TWO_PI)
    x, = g.coords()
    th = 0.5 * np.sin(x)
    rho0 = scalar(g, 1 + 0.2 * np.sin(x))
    rho = regularize_density(rho0, 1e-2)
    gd = admissible_datum(rho, vector(g, [0.3 * np.cos(2 * x)]))
    ini = build_initial_data(rho0, director(g, [np.cos(th), np.sin(th), 0 * x]), P, LAW,
                             g=gd, delta=1e-2)
    out = {}
    for mode in ("grid", "galerkin"):
        st = Stepper(StepConfig(mode=mode, m=64, bc="periodic"), P, LAW, g)
        s = st.prepare(State(0.0, ini.rho0, ini.u0, ini.d0))
        for _ in range(int(round(T / dt))):
            s, _, _ = st.step(s, dt)
        out[mode] = s
    return G.lp_norm(out["grid"].u - out["galerkin"].u, 2), G.lp_norm(out["grid"].u, 2)


def check_11():
    g1, norm = _two_scheme_gap(128, 1e-3)
    g2, _ = _two_scheme_gap(256, 5e-4)
    ok = g1 <= 1e-2 and g2 <= 1e-2 and g2 < g1
    return ok, f"L2 velocity gap at T=0.5: {g1:.2e} (N=128) -> {g2:.2e} (N=256), " \
               f"||u|| = {norm:.3f} (<= 1e-2, shrinking)"


# ---------------------------------------------------------------------------
# 12. blow-up monitor bookkeeping

def _accumulate_signal(n):
    acc = BlowupAccumulator()
    for t in np.linspace(0.0, 1.0, n + 1):
        s = MonitorSample(1 + 0.5 * np.cos(t), 2 + np.sin(3 * t), np.exp(-t) + t ** 2)
        acc = accumulate(acc, s, t)
    return acc


def check_12():
    coarse, fine = _accumulate_signal(2000), _accumulate_signal(20000)
    rel = max(abs(getattr(coarse, k) - getattr(fine, k)) / abs(getattr(fine, k))
              for k in ("int_grad_d_cubed", "int_def_tensor", "int_grad_d_squared"))
    with tempfile.TemporaryDirectory() as tmp:
        doc = {"grid": {"shape": [32, 32], "boundary": "wall"},
               "initial": {"scenario": "winding-defect"}, "t_end": 0.05}
        res = run(parse_config(doc), tmp)
        ts = read_timeseries(os.path.join(tmp, "timeseries.csv"))
        csv_ok = bool(np.all(np.isfinite(np.column_stack(list(ts.values())))))
    if res.status == "completed":
        run_ok = csv_ok and all(np.isfinite(v) for v in res.report["peaks"].values())
        outcome = f"winding-defect completed {res.report['steps']} steps with finite monitors"
    else:
        run_ok = res.status == "breakdown-detected" and bool(res.report["failure"].get("quantity"))
        outcome = f"winding-defect stopped: {res.status} ({res.report['failure'].get('quantity')})"
    ok = rel <= 1e-6 and run_ok
    return ok, f"trapezoid vs 10x finer oracle {rel:.1e} (<= 1e-6); {outcome}"


# ---------------------------------------------------------------------------

CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 13)}


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CHECKS))
def test_criterion(n, report_line):
    t0 = time.perf_counter()
    ok, detail = CHECKS[n]()
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail} [{time.perf_counter() - t0:.1f}s]"
    report_line(line)
    assert ok, line


if __name__ == "__main__":
    failed = 0
    for n, fn in CHECKS.items():
        t0 = time.perf_counter()
        ok, detail = fn()
        failed += not ok
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail} "
              f"[{time.perf_counter() - t0:.1f}s]", flush=True)
    sys.exit(1 if failed else 0)
