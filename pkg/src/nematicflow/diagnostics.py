"""Energy law, blow-up monitors and constraint drifts evaluated on States.

Nothing here modifies a State; every function reads fields and returns numbers.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import grid as G
from .forces import director_tension, geodesic_grad_norm, grad_norm
from .grid import VectorField
from .lame import LameParams, deformation_tensor, default_bc, vector_bc

TIMESERIES_COLUMNS = (
    "t", "mass", "energy", "viscous_dissipation", "director_dissipation", "min_rho",
    "max_rho", "sup_grad_d", "sup_def_tensor", "int_grad_d_cubed", "int_def_tensor",
    "int_grad_d_squared", "phi_proxy", "energy_residual", "unit_drift",
)


class BreakdownDetected(RuntimeError):
    def __init__(self, quantity: str, t: float):
        super().__init__(f"breakdown-detected: {quantity} became non-finite at t={t:.6g}")
        self.quantity = quantity
        self.t = t


def _vbc(state, bc):
    return vector_bc(state.grid, bc or default_bc(state.grid))


# ---------------------------------------------------------------------------
# energy law


def dirichlet_energy(d) -> float:
    """Discrete  int |grad d|^2  written as <-Lap d, d> with Neumann ghosts."""
    lap = G.laplacian(d, "neumann").values
    return float(-np.sum(lap * d.values) * d.grid.cell_volume)


def kinetic_energy(state) -> float:
    return float(np.sum(state.rho.values * np.sum(state.u.values ** 2, axis=0))
                 * state.grid.cell_volume)


def energy(state) -> float:
    """int (rho |u|^2 + |grad d|^2)."""
    return kinetic_energy(state) + dirichlet_energy(state.d)


def viscous_dissipation(u: VectorField, params: LameParams, bc="dirichlet") -> float:
    """int (mu |curl u|^2 + (2 mu + lam) |div u|^2) with centred stencils."""
    grid = u.grid
    dv = G.lp_norm(G.div(u, bc), 2) ** 2
    cv = G.lp_norm(G.curl(u, bc), 2) ** 2 if grid.dim > 1 else 0.0
    return params.mu * cv + (2 * params.mu + params.lam) * dv


def director_dissipation(d) -> float:
    """int |Lap d + |grad d|^2 d|^2."""
    tau = director_tension(d)
    return float(np.sum(tau ** 2) * d.grid.cell_volume)


def dissipation(state, params: LameParams, bc=None) -> tuple[float, float]:
    """(viscous, director) dissipation rates."""
    vbc = bc if bc in G.VECTOR_BCS else _vbc(state, bc)
    return viscous_dissipation(state.u, params, vbc), director_dissipation(state.d)


def pressure_work(state, law, bc=None) -> float:
    """int P(rho) div u."""
    P = law.p(state.rho.values)
    return float(np.sum(P * G.div(state.u, _vbc(state, bc)).values) * state.grid.cell_volume)


def energy_identity_terms(prev, nxt, dt, params, law, bc=None) -> dict:
    vbc = _vbc(nxt, bc)
    rate = (energy(nxt) - energy(prev)) / dt
    visc, dirc = dissipation(nxt, params, vbc)
    work = pressure_work(nxt, law, bc)
    raw = rate + 2 * (visc + dirc) - 2 * work
    return {"rate": rate, "viscous": visc, "director": dirc, "pressure_work": work,
            "raw": raw}


def energy_identity_residual(prev, nxt, dt, params, law, bc=None, eps: float = 1e-300) -> float:
    """Signed residual of  dE/dt + 2 (viscous + director) - 2 int P div u,
    divided by the total dissipation."""
    terms = energy_identity_terms(prev, nxt, dt, params, law, bc)
    return terms["raw"] / max(terms["viscous"] + terms["director"], eps)


# ---------------------------------------------------------------------------
# monitors


@dataclass(frozen=True)
class MonitorSample:
    rho_inf: float
    grad_d_inf: float
    def_tensor_inf: float


def blowup_monitors(state, bc=None) -> MonitorSample:
    """Sample maxima of rho, |grad d| and |D(u)|."""
    D = deformation_tensor(state.u, _vbc(state, bc))
    return MonitorSample(float(np.max(state.rho.values)),
                         float(np.max(geodesic_grad_norm(state.d))),
                         float(np.max(np.sqrt(np.sum(D ** 2, axis=(0, 1))))))


@dataclass(frozen=True)
class BlowupAccumulator:
    """Running trapezoid integrals of the blow-up monitors."""

    int_grad_d_cubed: float = 0.0
    int_def_tensor: float = 0.0
    int_grad_d_squared: float = 0.0
    peak_rho: float = 0.0
    last_sample: MonitorSample | None = None
    last_time: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BlowupAccumulator":
        d = dict(d)
        if d.get("last_sample") is not None:
            d["last_sample"] = MonitorSample(**d["last_sample"])
        return cls(**d)


def accumulate(acc: BlowupAccumulator, sample: MonitorSample, t: float) -> BlowupAccumulator:
    if acc.last_time is None:
        return replace(acc, peak_rho=max(acc.peak_rho, sample.rho_inf), last_sample=sample,
                       last_time=float(t))
    if t < acc.last_time:
        raise ValueError(f"time went backwards: {t} < {acc.last_time}")
    h = float(t) - acc.last_time
    a, b = acc.last_sample, sample
    return BlowupAccumulator(
        acc.int_grad_d_cubed + 0.5 * h * (a.grad_d_inf ** 3 + b.grad_d_inf ** 3),
        acc.int_def_tensor + 0.5 * h * (a.def_tensor_inf + b.def_tensor_inf),
        acc.int_grad_d_squared + 0.5 * h * (a.grad_d_inf ** 2 + b.grad_d_inf ** 2),
        max(acc.peak_rho, b.rho_inf), b, float(t))


def _sobolev(grid, values, parity, q) -> float:
    """||f||_{W^{1,q}} = ||f||_q + ||grad f||_q for a scalar array."""
    gr = np.sqrt(sum(G.partial(grid, values, a, parity) ** 2 for a in range(grid.dim)))
    return G.array_lp_norm(grid, np.abs(values), q) + G.array_lp_norm(grid, gr, q)


def director_hessian_norms(d) -> tuple[float, float]:
    """(||grad^2 d||_2, ||grad^3 d||_2) with Neumann ghosts."""
    grid = d.grid
    h2 = np.zeros(grid.shape)
    h3 = np.zeros(grid.shape)
    for c in range(3):
        for a in range(grid.dim):
            for b in range(grid.dim):
                if a == b:
                    dab = G.second_partial(grid, d.values[c], a, G.EVEN)
                else:
                    dab = G.partial(grid, G.partial(grid, d.values[c], b, G.EVEN), a, G.EVEN)
                h2 += dab ** 2
                for e in range(grid.dim):
                    par = G.EVEN if ((a == e) + (b == e)) % 2 == 0 else G.ODD
                    h3 += G.partial(grid, dab, e, par) ** 2
    return (G.array_lp_norm(grid, np.sqrt(h2), 2), G.array_lp_norm(grid, np.sqrt(h3), 2))


def phi_proxy(state, state_prev, dt, law, q: float = 6.0, bc=None, g0=None) -> float:
    """Instantaneous value of the quantity whose running sup is Phi(t).

    ||rho||_{H^1 cap W^{1,q}} + ||grad u||_2 + ||sqrt(rho) u_t||_2 + ||grad^2 d||_{H^1} + 1,
    with u_t a backward difference.  Without a previous state, ``g0`` (the
    compatibility datum) stands in for sqrt(rho) u_t.
    """
    grid = state.grid
    vbc = _vbc(state, bc)
    rho = state.rho.values
    rho_norm = _sobolev(grid, rho, G.EVEN, 2.0) + _sobolev(grid, rho, G.EVEN, q)
    gu = G.array_lp_norm(grid, grad_norm(state.u, vbc), 2)
    if state_prev is not None and dt > 0:
        ut = (state.u.values - state_prev.u.values) / dt
        wut = np.sqrt(np.maximum(rho, 0.0)) * np.sqrt(np.sum(ut ** 2, axis=0))
        inertia = G.array_lp_norm(grid, wut, 2)
    elif g0 is not None:
        inertia = G.lp_norm(g0, 2)
    else:
        inertia = 0.0
    h2, h3 = director_hessian_norms(state.d)
    return rho_norm + gu + inertia + h2 + h3 + 1.0


def material_derivative(state, state_prev, dt, bc=None) -> VectorField:
    """(u - u_prev)/dt + u . grad u."""
    from .forces import advect
    vbc = _vbc(state, bc)
    ut = (state.u.values - state_prev.u.values) / dt
    return VectorField(state.grid, ut + advect(state.u, state.u, vbc))


def kato_defect(u: VectorField, bc="dirichlet") -> float:
    """max of |grad |u||^2 - |grad u|^2; nonpositive when Kato's inequality holds."""
    grid = u.grid
    mag = u.magnitude()
    par = G.EVEN if bc in ("dirichlet", "navier_slip", "neumann") else None
    gm = sum(G.partial(grid, mag, a, par) ** 2 for a in range(grid.dim))
    gu = grad_norm(u, bc) ** 2
    return float(np.max(gm - gu))


def unit_drift(state) -> float:
    return state.d.unit_defect()


# ---------------------------------------------------------------------------
# records


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass: float
    energy: float
    viscous_dissipation: float
    director_dissipation: float
    min_rho: float
    max_rho: float
    sup_grad_d: float
    sup_def_tensor: float
    sup_grad_u: float
    phi_proxy: float
    energy_residual: float
    unit_drift: float
    pre_projection_drift: float = 0.0
    decomposition: dict | None = None

    def first_nonfinite(self) -> str | None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                return f.name
            if isinstance(v, dict):
                for k, x in v.items():
                    if not math.isfinite(x):
                        return f"decomposition.{k}"
        return None


def compute_record(state, prev, dt, params, law, bc=None, drift=0.0, q=6.0,
                   decomposition: bool = False, g0=None) -> DiagnosticsRecord:
    vbc = _vbc(state, bc)
    mon = blowup_monitors(state, bc)
    visc, dirc = dissipation(state, params, vbc)
    resid = (energy_identity_residual(prev, state, dt, params, law, bc)
             if prev is not None and dt > 0 else 0.0)
    dec = None
    if decomposition:
        from .lame import pressure_decompose
        _, dec = pressure_decompose(params, law, state.rho, bc or default_bc(state.grid))
    with np.errstate(all="ignore"):
        return DiagnosticsRecord(
            t=float(state.t), mass=G.integrate(state.rho), energy=energy(state),
            viscous_dissipation=visc, director_dissipation=dirc,
            min_rho=float(np.min(state.rho.values)), max_rho=mon.rho_inf,
            sup_grad_d=mon.grad_d_inf, sup_def_tensor=mon.def_tensor_inf,
            sup_grad_u=float(np.max(grad_norm(state.u, vbc, "l1"))),
            phi_proxy=phi_proxy(state, prev, dt, law, q, bc, g0),
            energy_residual=float(resid), unit_drift=unit_drift(state),
            pre_projection_drift=float(drift), decomposition=dec)
