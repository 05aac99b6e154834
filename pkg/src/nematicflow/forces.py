"""Pointwise force and transport terms shared by the initial-data solve, the
time steppers and the diagnostics."""

from __future__ import annotations

import numpy as np

from . import grid as G
from .grid import DirectorField, ScalarField, VectorField

DIRECTOR_FORCE_FORMS = ("divergence", "direct")


def director_gradient(d: DirectorField) -> np.ndarray:
    """``J[a, i] = d_a d_i`` with Neumann ghosts, shape (dim, 3, *shape)."""
    return G.jacobian(d, "neumann")


def director_stress(d: DirectorField) -> np.ndarray:
    """grad d (x) grad d - 1/2 |grad d|^2 I, shape (dim, dim, *shape)."""
    J = director_gradient(d)
    T = np.einsum("ai...,bi...->ab...", J, J)
    half = 0.5 * np.sum(J ** 2, axis=(0, 1))
    for a in range(d.grid.dim):
        T[a, a] -= half
    return T


def director_force(d: DirectorField, form: str = "divergence") -> VectorField:
    """The vector ``grad d . Lap d`` (component k: sum_i Lap d_i d_k d_i).

    ``divergence`` evaluates it as div(grad d (x) grad d - 1/2 |grad d|^2 I), which
    telescopes to zero mean on periodic grids; ``direct`` multiplies the stencils.
    """
    grid = d.grid
    if form == "divergence":
        T = director_stress(d)
        out = np.zeros((grid.dim,) + grid.shape)
        for b in range(grid.dim):
            for a in range(grid.dim):
                # d_a d is odd across walls normal to a, so off-diagonal stress is odd there
                out[b] += G.partial(grid, T[a, b], a, G.EVEN if a == b else G.ODD)
        return VectorField(grid, out)
    if form == "direct":
        J = director_gradient(d)
        lap = G.laplacian(d, "neumann").values
        return VectorField(grid, np.einsum("ki...,i...->k...", J, lap))
    raise ValueError(f"unknown director force form {form!r}")


def pressure_gradient(law, rho: ScalarField, velocity_bc: str) -> VectorField:
    """grad P(rho) with the ghost rule adjoint to the velocity divergence."""
    P = ScalarField(rho.grid, law.p(rho.values))
    return G.grad(P, G.adjoint_grad_bc(velocity_bc))


def advect(u: VectorField, f, bc) -> np.ndarray:
    """(u . grad) f, returned as an array shaped like ``f.values``."""
    J = G.jacobian(f, bc)
    if isinstance(f, ScalarField):
        return np.einsum("a...,a...->...", u.values, J[:, 0])
    return np.einsum("a...,ac...->c...", u.values, J)


def grad_norm(u: VectorField, bc, kind: str = "frobenius") -> np.ndarray:
    """Pointwise norm of the velocity gradient.

    ``l1`` is the entrywise sum sum_ij |d_i u_j|; unlike the Frobenius norm it
    bounds |div u| pointwise, which is what density lower bounds need.
    """
    J = G.jacobian(u, bc)
    if kind == "frobenius":
        return np.sqrt(np.sum(J ** 2, axis=(0, 1)))
    if kind == "l1":
        return np.sum(np.abs(J), axis=(0, 1))
    raise ValueError(f"unknown gradient norm {kind!r}")


def director_grad_sq(d: DirectorField) -> np.ndarray:
    """|grad d|^2 through the unit-length identity |grad d|^2 = -d . Lap d.

    For |d| = 1 this equals the average of squared forward and backward
    differences, so it is nonnegative and the reaction term stays tangent.
    """
    lap = G.laplacian(d, "neumann").values
    return -np.sum(d.values * lap, axis=0)


def director_tension(d: DirectorField) -> np.ndarray:
    """Lap d + |grad d|^2 d."""
    lap = G.laplacian(d, "neumann").values
    return lap + director_grad_sq(d) * d.values


def geodesic_grad_norm(d: DirectorField) -> np.ndarray:
    """Pointwise |grad d| from arc lengths between neighbouring directors.

    Along each axis the centred difference quotient is replaced by the
    great-circle distance between the two neighbours over 2h, which is exact
    for constant-speed windings.
    """
    grid = d.grid
    v = d.values / np.linalg.norm(d.values, axis=0)
    total = np.zeros(grid.shape)
    for a in range(grid.dim):
        h = grid.spacing[a]
        fwd = np.roll(v, -1, axis=a + 1)
        bwd = np.roll(v, 1, axis=a + 1)
        if not grid.periodic[a]:
            idx_first = [slice(None)] * (grid.dim + 1)
            idx_last = [slice(None)] * (grid.dim + 1)
            idx_first[a + 1] = 0
            idx_last[a + 1] = -1
            bwd[tuple(idx_first)] = v[tuple(idx_first)]
            fwd[tuple(idx_last)] = v[tuple(idx_last)]
        cross = np.linalg.norm(np.cross(fwd, bwd, axis=0), axis=0)
        dot = np.sum(fwd * bwd, axis=0)
        total += (np.arctan2(cross, dot) / (2 * h)) ** 2
    return np.sqrt(total)
