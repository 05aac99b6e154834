"""Time integration by Lie splitting: transport -> momentum -> director.

Density is moved by a conservative first-order upwind scheme.  The director
takes a backward-Euler diffusion step with explicit advection and reaction,
then is projected back to the sphere.  Momentum is advanced either on the grid
(implicit Lamé operator, explicit inertia/pressure/director forcing) or in the
Galerkin space of Lamé eigenfunctions with RK4 on  M(rho) c' = F(c).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics as diag
from . import grid as G
from .forces import advect, director_force, director_grad_sq, pressure_gradient
from .grid import DirectorField, Grid, ScalarField, VectorField
from .lame import EigenBasis, LameParams, default_bc, lame_matrix, vector_bc

log = logging.getLogger(__name__)

EPS_VAC = 1e-10
MIN_DIRECTOR_LENGTH = 0.5
RK4_STABILITY = 2.5  # a little inside the RK4 real-axis limit 2.785


class StepError(RuntimeError):
    """A sub-step failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str, quantity: str | None = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.quantity = quantity  # set when the failure is a non-finite field


class CFLViolation(StepError):
    def __init__(self, message):
        super().__init__("transport", message)


class MassMatrixError(StepError):
    def __init__(self, message):
        super().__init__("momentum", message)


@dataclass(frozen=True)
class State:
    t: float
    rho: ScalarField
    u: VectorField
    d: DirectorField
    step_index: int = 0
    coeffs: np.ndarray | None = None  # Galerkin coefficients, None in grid mode

    @property
    def grid(self) -> Grid:
        return self.rho.grid


@dataclass(frozen=True)
class StepConfig:
    mode: str = "grid"  # "grid" | "galerkin"
    m: int = 32
    cfl: float = 0.5
    dt_max: float = 1e-2
    diffusion_number: float = 0.5
    renormalize_director: bool = True
    freeze_flow: bool = False  # rho and u held fixed: harmonic-map heat flow
    director_force_form: str = "divergence"
    bc: str | None = None  # Lamé family: periodic | dirichlet | navier_slip

    def __post_init__(self):
        if self.mode not in ("grid", "galerkin"):
            raise ValueError(f"unknown step mode {self.mode!r}")
        if not 0 < self.cfl <= 1:
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.dt_max > 0:
            raise ValueError(f"dt_max must be positive, got {self.dt_max}")
        if self.mode == "galerkin" and self.m < 1:
            raise ValueError("Galerkin mode needs m >= 1")


# ---------------------------------------------------------------------------
# transport


def _face_fluxes(rho: np.ndarray, vel: np.ndarray, axis: int, periodic: bool):
    """Upwind fluxes through the n+1 faces along ``axis`` (walls carry none)."""
    n = rho.shape[axis]
    lo = [slice(None)] * rho.ndim
    hi = [slice(None)] * rho.ndim
    lo[axis], hi[axis] = slice(0, n - 1), slice(1, n)
    uf = 0.5 * (vel[tuple(lo)] + vel[tuple(hi)])
    F_int = np.where(uf > 0, uf * rho[tuple(lo)], uf * rho[tuple(hi)])
    last = [slice(None)] * rho.ndim
    first = [slice(None)] * rho.ndim
    last[axis], first[axis] = slice(n - 1, n), slice(0, 1)
    if periodic:
        ub = 0.5 * (vel[tuple(last)] + vel[tuple(first)])
        Fb = np.where(ub > 0, ub * rho[tuple(last)], ub * rho[tuple(first)])
        uface = np.concatenate([ub, uf, ub], axis=axis)
        F = np.concatenate([Fb, F_int, Fb], axis=axis)
    else:
        zshape = list(rho.shape)
        zshape[axis] = 1
        z = np.zeros(zshape)
        uface = np.concatenate([z, uf, z], axis=axis)
        F = np.concatenate([z, F_int, z], axis=axis)
    return uface, F


def outflow_number(grid: Grid, u: VectorField, dt: float) -> float:
    """Largest fraction of a cell's mass leaving it in one upwind step."""
    total = np.zeros(grid.shape)
    for a in range(grid.dim):
        uface, _ = _face_fluxes(np.ones(grid.shape), u.values[a], a, grid.periodic[a])
        n = grid.shape[a]
        right = np.take(uface, np.arange(1, n + 1), axis=a)
        left = np.take(uface, np.arange(0, n), axis=a)
        total += (np.maximum(right, 0) + np.maximum(-left, 0)) / grid.spacing[a]
    return float(dt * total.max())


def step_transport(rho: ScalarField, u: VectorField, dt: float) -> ScalarField:
    """Conservative upwind update of rho_t + div(rho u) = 0."""
    grid = rho.grid
    nu = outflow_number(grid, u, dt)
    if not np.isfinite(nu):
        raise StepError("transport", "non-finite velocity entering transport", "u")
    if nu > 1 + 1e-12:
        raise CFLViolation(f"outflow number {nu:.3f} > 1 (dt={dt:.3e})")
    new = rho.values.copy()
    for a in range(grid.dim):
        _, F = _face_fluxes(rho.values, u.values[a], a, grid.periodic[a])
        n = grid.shape[a]
        dF = np.take(F, np.arange(1, n + 1), axis=a) - np.take(F, np.arange(0, n), axis=a)
        new -= dt / grid.spacing[a] * dF
    return ScalarField(grid, new)


# ---------------------------------------------------------------------------
# director


@lru_cache(maxsize=8)
def _heat_factor(grid: Grid, dt: float):
    L = G.laplacian_matrix(grid, 1, "neumann", "scalar")
    return spla.splu((sp.identity(grid.size, format="csc") - dt * L).tocsc())


def step_director(d: DirectorField, u: VectorField, dt: float, renormalize: bool = True):
    """One step of d_t + u.grad d = Lap d + |grad d|^2 d.

    Returns the new director and the pre-projection drift max | |d'| - 1 |.
    """
    grid = d.grid
    rhs = d.values + dt * (director_grad_sq(d) * d.values - advect(u, d, "neumann"))
    try:
        lu = _heat_factor(grid, float(dt))
        new = np.stack([lu.solve(rhs[c].reshape(-1)).reshape(grid.shape) for c in range(3)])
    except RuntimeError as exc:
        raise StepError("director", f"implicit diffusion solve failed: {exc}") from exc
    mag = np.sqrt(np.sum(new ** 2, axis=0))
    drift = float(np.max(np.abs(mag - 1.0)))
    if not np.all(np.isfinite(mag)):
        raise StepError("director", "non-finite director after diffusion step", "d")
    if mag.min() < MIN_DIRECTOR_LENGTH:
        raise StepError("director", f"|d| dropped to {mag.min():.3f}; step too large")
    if renormalize:
        new = new / mag
    return DirectorField(grid, new), drift


# ---------------------------------------------------------------------------
# momentum: shared forcing


def explicit_forcing(rho: ScalarField, u: VectorField, d: DirectorField, law, bc: str,
                     form: str = "divergence", inertia: bool = True) -> VectorField:
    """-rho u.grad u - grad P(rho) - grad d . Lap d  (everything but the Lamé term)."""
    vbc = vector_bc(rho.grid, bc)
    out = -pressure_gradient(law, rho, vbc).values - director_force(d, form).values
    if inertia:
        out = out - rho.values * advect(u, u, vbc)
    return VectorField(rho.grid, out)


def momentum_rhs(rho, u, d, params: LameParams, law, bc: str | None = None,
                 basis: EigenBasis | None = None, m: int | None = None,
                 form: str = "divergence"):
    """Full momentum forcing  L u - rho u.grad u - grad P - grad d . Lap d.

    Grid mode returns the field; with ``basis`` the L2 projections F_k onto the
    first ``m`` modes are returned.
    """
    bc = bc or default_bc(rho.grid)
    A = lame_matrix(rho.grid, params, bc)
    F = explicit_forcing(rho, u, d, law, bc, form).values
    F = F + (A @ u.values.reshape(-1)).reshape(u.values.shape)
    if basis is None:
        return VectorField(rho.grid, F)
    m = basis.count if m is None else m
    flat = basis.modes[:m].reshape(m, -1)
    return flat @ F.reshape(-1) * rho.grid.cell_volume


def step_momentum_grid(rho: ScalarField, u: VectorField, d: DirectorField, dt: float,
                       params: LameParams, law, bc: str | None = None,
                       form: str = "divergence") -> VectorField:
    """Semi-implicit update  rho (u' - u)/dt = L u' - rho u.grad u - grad P - grad d.Lap d.

    On vacuum cells the inertial weight vanishes, leaving the static balance
    L u' = grad P + grad d . Lap d there.
    """
    grid = rho.grid
    bc = bc or default_bc(grid)
    w = np.where(rho.values > EPS_VAC, rho.values, 0.0)
    f = explicit_forcing(rho, u, d, law, bc, form).values + w * u.values / dt
    A = lame_matrix(grid, params, bc)
    M = sp.diags(np.tile(w.reshape(-1), grid.dim) / dt) - A
    try:
        sol = spla.spsolve(M.tocsc(), f.reshape(-1))
    except RuntimeError as exc:
        raise StepError("momentum", f"implicit Lamé solve failed: {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise StepError("momentum", "implicit Lamé solve produced non-finite values", "u")
    return VectorField(grid, sol.reshape(u.values.shape))


# ---------------------------------------------------------------------------
# momentum: Galerkin


@dataclass
class GalerkinWorkspace:
    basis: EigenBasis
    coeffs: np.ndarray
    viscous: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        b = self.basis
        flat = b.modes.reshape(b.count, -1)
        A = lame_matrix(b.grid, b.params, b.bc)
        V = flat @ (A @ flat.T) * b.grid.cell_volume
        self.viscous = 0.5 * (V + V.T)

    @property
    def m(self) -> int:
        return self.basis.count

    def velocity(self, coeffs=None) -> VectorField:
        return self.basis.reconstruct(self.coeffs if coeffs is None else coeffs)


def assemble_mass_matrix(rho: ScalarField, basis: EigenBasis, m: int | None = None,
                         check: bool = True) -> np.ndarray:
    """M_ik = (rho phi_i, phi_k); raises if it is not positive definite."""
    m = basis.count if m is None else m
    flat = basis.modes[:m].reshape(m, -1)
    weight = np.tile(rho.values.reshape(-1), basis.grid.dim)
    M = (flat * weight) @ flat.T * basis.grid.cell_volume
    M = 0.5 * (M + M.T)
    if check:
        try:
            np.linalg.cholesky(M)
        except np.linalg.LinAlgError as exc:
            raise MassMatrixError(
                "mass matrix is not positive definite (density below delta or corrupt basis)"
            ) from exc
    return M


def galerkin_stiff_dt(ws: GalerkinWorkspace, M: np.ndarray) -> float:
    """RK4 stability limit from the largest eigenvalue of M^{-1}(-V)."""
    lam = sla.eigh(-ws.viscous, M, eigvals_only=True, subset_by_index=[ws.m - 1, ws.m - 1])[0]
    return RK4_STABILITY / lam if lam > 0 else np.inf


def step_momentum_galerkin(ws: GalerkinWorkspace, rho: ScalarField, d: DirectorField,
                           dt: float, law, form: str = "divergence") -> GalerkinWorkspace:
    """One RK4 step of M(rho) c' = V c + F(c; rho, d) with rho and d frozen."""
    b = ws.basis
    grid = b.grid
    vbc = vector_bc(grid, b.bc)
    M = assemble_mass_matrix(rho, b)
    chol = sla.cho_factor(M)
    flat = b.modes.reshape(ws.m, -1)
    frozen = explicit_forcing(rho, ws.velocity(np.zeros(ws.m)), d, law, b.bc, form,
                              inertia=False).values
    Ffrozen = flat @ frozen.reshape(-1) * grid.cell_volume

    def rate(c):
        u = b.reconstruct(c)
        adv = -rho.values * advect(u, u, vbc)
        F = ws.viscous @ c + Ffrozen + flat @ adv.reshape(-1) * grid.cell_volume
        return sla.cho_solve(chol, F)

    c = ws.coeffs
    k1 = rate(c)
    k2 = rate(c + 0.5 * dt * k1)
    k3 = rate(c + 0.5 * dt * k2)
    k4 = rate(c + dt * k3)
    new = c + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(new)):
        raise StepError("momentum", "Galerkin coefficients became non-finite", "u")
    out = GalerkinWorkspace.__new__(GalerkinWorkspace)
    out.basis, out.coeffs, out.viscous = b, new, ws.viscous
    return out


# ---------------------------------------------------------------------------
# time step selection


def dt_limits(state: State, cfg: StepConfig, law=None, ws: GalerkinWorkspace | None = None,
              eps: float = 1e-12) -> dict:
    grid = state.grid
    hmin = min(grid.spacing)
    umax = float(np.max(state.u.magnitude())) if state.u.values.size else 0.0
    limits = {"dt_max": cfg.dt_max}
    if not cfg.freeze_flow:
        limits["advective"] = cfg.cfl * hmin / (umax + eps)
        if law is not None:
            cs = float(np.sqrt(np.max(law.dp(state.rho.values))))
            if cs > 0:
                limits["acoustic"] = cfg.cfl * hmin / (umax + cs)
        if ws is not None:
            M = assemble_mass_matrix(state.rho, ws.basis)
            limits["galerkin_stiff"] = galerkin_stiff_dt(ws, M)
    g2 = float(np.max(director_grad_sq(state.d)))
    if g2 > eps:
        limits["reaction"] = cfg.diffusion_number / g2
    if umax > eps:
        limits["director_advection"] = cfg.cfl * hmin / umax
    return limits


def stable_dt(state: State, cfg: StepConfig, law=None, ws=None) -> float:
    """Smallest of the advective, acoustic, reaction, Galerkin-stiffness and dt_max limits."""
    return float(min(dt_limits(state, cfg, law, ws).values()))


# ---------------------------------------------------------------------------
# composition


class Stepper:
    """Owns the per-run caches (basis, Galerkin workspace) and advances States."""

    def __init__(self, cfg: StepConfig, params: LameParams, law, grid: Grid,
                 basis: EigenBasis | None = None):
        params.require_admissible()
        self.cfg = cfg
        self.params = params
        self.law = law
        self.grid = grid
        self.bc = cfg.bc or default_bc(grid)
        self.vbc = vector_bc(grid, self.bc)
        self.basis = None
        if cfg.mode == "galerkin":
            if basis is None:
                from .lame import eigenbasis
                basis = eigenbasis(params, grid, self.bc, cfg.m)
            self.basis = basis.truncated(cfg.m) if basis.count > cfg.m else basis

    def workspace(self, state: State) -> GalerkinWorkspace | None:
        if self.basis is None:
            return None
        if state.coeffs is None:
            from .initial_data import project_velocity
            coeffs = project_velocity(state.u, self.basis, self.basis.count)
        else:
            coeffs = state.coeffs
        return GalerkinWorkspace(self.basis, coeffs)

    def prepare(self, state: State) -> State:
        """Attach Galerkin coefficients and replace u by its projection (Galerkin mode)."""
        if self.basis is None or state.coeffs is not None:
            return state
        ws = self.workspace(state)
        return replace(state, u=ws.velocity(), coeffs=ws.coeffs)

    def stable_dt(self, state: State) -> float:
        ws = self.workspace(state) if not self.cfg.freeze_flow else None
        return stable_dt(state, self.cfg, self.law, ws)

    def step(self, state: State, dt: float | None = None):
        """Advance one Lie step; returns (new_state, dt, pre_projection_drift)."""
        cfg = self.cfg
        state = self.prepare(state)
        ws = self.workspace(state)
        if dt is None:
            dt = stable_dt(state, cfg, self.law, None if cfg.freeze_flow else ws)
        rho, u, coeffs = state.rho, state.u, state.coeffs
        if not cfg.freeze_flow:
            try:
                rho = step_transport(state.rho, state.u, dt)
            except StepError:
                raise
            except Exception as exc:  # noqa: BLE001 - relabel with the stage
                raise StepError("transport", str(exc)) from exc
            try:
                if cfg.mode == "galerkin":
                    ws = step_momentum_galerkin(ws, rho, state.d, dt, self.law,
                                                cfg.director_force_form)
                    coeffs = ws.coeffs
                    u = ws.velocity()
                else:
                    u = step_momentum_grid(rho, state.u, state.d, dt, self.params, self.law,
                                           self.bc, cfg.director_force_form)
            except StepError:
                raise
            except Exception as exc:  # noqa: BLE001
                raise StepError("momentum", str(exc)) from exc
        try:
            d, drift = step_director(state.d, u, dt, cfg.renormalize_director)
        except StepError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise StepError("director", str(exc)) from exc
        new = State(state.t + dt, rho, u, d, state.step_index + 1, coeffs)
        return new, dt, drift

    def advance(self, state: State, dt: float | None = None, phi_q: float = 6.0):
        """One step plus its DiagnosticsRecord."""
        prev = self.prepare(state)
        new, dt, drift = self.step(prev, dt)
        record = diag.compute_record(new, prev, dt, self.params, self.law, self.bc,
                                     drift=drift, q=phi_q)
        return new, record


def advance(state: State, cfg: StepConfig, params: LameParams, law, basis=None,
            dt: float | None = None):
    """Functional form of :meth:`Stepper.advance`."""
    return Stepper(cfg, params, law, state.grid, basis).advance(state, dt)


# ---------------------------------------------------------------------------
# density lower bound


@dataclass
class DensityFloorReport:
    times: np.ndarray
    min_rho: np.ndarray
    bound: np.ndarray
    passed: np.ndarray

    @property
    def ok(self) -> bool:
        return bool(np.all(self.passed))


def density_floor_check(times, min_rho, grad_u_inf, delta: float, tol: float = 0.1):
    """Check min rho(t) >= (1 - tol) delta exp(-int_0^t ||grad u||_inf ds), trapezoid in time."""
    times = np.asarray(times, dtype=float)
    min_rho = np.asarray(min_rho, dtype=float)
    g = np.asarray(grad_u_inf, dtype=float)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(times))])
    bound = (1.0 - tol) * delta * np.exp(-integral)
    return DensityFloorReport(times, min_rho, bound, min_rho >= bound)
