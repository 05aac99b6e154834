"""Admissible initial data: vacuum regularisation, the compatibility solve and
Galerkin projection of the initial velocity."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .forces import director_force, pressure_gradient
from .grid import DirectorField, ScalarField, VectorField
from .lame import (EigenBasis, LameParams, apply_lame, default_bc, h1_inner, solve_lame,
                   vector_bc)

EPS_VAC = 1e-10
TOL_VAC_REL = 1e-8
ROUNDOFF_REL = 1e-11


@dataclass(frozen=True)
class InitialData:
    rho0: ScalarField
    u0: VectorField
    d0: DirectorField
    g: VectorField | None = None
    delta: float = 0.0
    d0_defect: float = 0.0

    def __post_init__(self):
        if np.any(self.rho0.values < 0):
            raise ValueError("initial density must be nonnegative")
        if self.d0.unit_defect() > 1e-12:
            raise ValueError("initial director must have unit length")


def normalize_director(d0: DirectorField) -> tuple[DirectorField, float]:
    """Project onto |d| = 1 and report the largest pre-projection defect."""
    return d0.normalized(), d0.unit_defect()


def regularize_density(rho0: ScalarField, delta: float) -> ScalarField:
    if not delta > 0:
        raise ValueError(f"regularisation needs delta > 0, got {delta}")
    if np.any(rho0.values < 0):
        raise ValueError("density must be nonnegative")
    return ScalarField(rho0.grid, rho0.values + delta)


def compatibility_rhs(rho, d0, g, law, bc) -> VectorField:
    """sqrt(rho) g + grad P(rho) + grad d . Lap d."""
    vbc = vector_bc(rho.grid, bc)
    return VectorField(rho.grid, np.sqrt(rho.values) * g.values
                       + pressure_gradient(law, rho, vbc).values
                       + director_force(d0).values)


def admissible_datum(rho: ScalarField, h: VectorField, bc: str | None = None) -> VectorField:
    """g with sqrt(rho) g = h minus its mean on components the boundary leaves floating.

    Vacuum cells get g = 0, so sqrt(rho) g vanishes there as required.
    """
    from .lame import floating_components
    grid = rho.grid
    bc = bc or default_bc(grid)
    root = np.sqrt(rho.values)
    live = root > np.sqrt(EPS_VAC)
    target = h.values.copy()
    for c in floating_components(grid, bc):
        if np.any(live):
            target[c] -= target[c][live].mean()
    g = np.zeros_like(target)
    np.divide(target, root, out=g, where=live)
    return VectorField(grid, g)


def solve_compatibility(rho_delta: ScalarField, d0: DirectorField, g: VectorField,
                        params: LameParams, law, bc: str | None = None) -> VectorField:
    """Velocity u with  L u - grad P(rho) - Lap d . grad d = sqrt(rho) g."""
    bc = bc or default_bc(rho_delta.grid)
    if np.any(rho_delta.values < 0):
        raise ValueError("compatibility solve needs a nonnegative density")
    return solve_lame(params, compatibility_rhs(rho_delta, d0, g, law, bc), bc)


class CompatResult(NamedTuple):
    g: VectorField | None
    norm: float
    ok: bool
    vacuum_residual: float
    residual: VectorField


def compat_residual(rho0: ScalarField, u0: VectorField, d0: DirectorField,
                    params: LameParams, law, bc: str | None = None,
                    eps_vac: float = EPS_VAC) -> CompatResult:
    """Recover g from  L u0 - grad P(rho0) - Lap d0 . grad d0 = sqrt(rho0) g.

    On vacuum cells (rho0 <= eps_vac) the residual itself must vanish; if it
    does not, the data are inadmissible and ``g`` is None.
    """
    grid = rho0.grid
    bc = bc or default_bc(grid)
    vbc = vector_bc(grid, bc)
    terms = (apply_lame(params, u0, bc).values, pressure_gradient(law, rho0, vbc).values,
             director_force(d0).values)
    r = terms[0] - terms[1] - terms[2]
    rmag = np.sqrt(np.sum(r ** 2, axis=0))
    vac = rho0.values <= eps_vac
    # relative to the residual, with a round-off floor set by the size of the terms
    scale = max(float(np.max(np.abs(t))) for t in terms)
    tol = max(TOL_VAC_REL * float(rmag.max()), ROUNDOFF_REL * scale)
    vac_res = float(rmag[vac].max()) if np.any(vac) else 0.0
    ok = vac_res <= tol
    gv = np.zeros_like(r)
    np.divide(r, np.sqrt(rho0.values), out=gv, where=~vac)
    gfield = VectorField(grid, gv)
    norm = float(np.sqrt(np.sum(np.sum(gv ** 2, axis=0)[~vac]) * grid.cell_volume))
    return CompatResult(gfield if ok else None, norm, ok, vac_res, VectorField(grid, r))


def project_velocity(u: VectorField, basis: EigenBasis, m: int | None = None) -> np.ndarray:
    """H1 coefficients (u, phi_k) for the first ``m`` modes."""
    m = basis.count if m is None else int(m)
    if m > basis.count:
        raise ValueError(f"asked for {m} coefficients from a basis of {basis.count}")
    return np.array([h1_inner(u, basis.mode(k), basis.bc) for k in range(m)])


def projection_error(u: VectorField, basis: EigenBasis, m: int) -> float:
    c = project_velocity(u, basis, m)
    diff = u - basis.reconstruct(c)
    return float(np.sqrt(max(h1_inner(diff, diff, basis.bc), 0.0)))


def build_initial_data(rho0: ScalarField, d0: DirectorField, params: LameParams, law,
                       bc: str | None = None, g: VectorField | None = None,
                       u0: VectorField | None = None, delta: float = 0.0) -> InitialData:
    """Assemble initial data.

    With ``g`` given, the velocity comes from the compatibility solve on the
    (optionally regularised) density.  With ``u0`` given, g is recovered from
    the residual and the data are rejected if they fail the vacuum test.
    """
    grid = rho0.grid
    bc = bc or default_bc(grid)
    d0, defect = normalize_director(d0)
    rho = regularize_density(rho0, delta) if delta > 0 else rho0
    if u0 is None:
        if g is None:
            g = VectorField(grid, np.zeros((grid.dim,) + grid.shape))
        u0 = solve_compatibility(rho, d0, g, params, law, bc)
    else:
        res = compat_residual(rho, u0, d0, params, law, bc)
        if not res.ok:
            raise ValueError(
                "initial data violate the compatibility condition on vacuum cells "
                f"(residual {res.vacuum_residual:.3e})")
        g = res.g
    return InitialData(rho, u0, d0, g, delta, defect)
