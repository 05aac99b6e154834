"""Uniform cell-centred grids, field containers and finite-difference operators.

All fields live at cell centres.  Wall faces sit half a cell outside the first
and last centres; boundary conditions enter through one ghost layer:

    odd   ghost = -u[0]      (homogeneous Dirichlet)
    even  ghost = +u[0]      (homogeneous Neumann)
    None  no ghost; one-sided second-order stencils

Every operator is assembled once per (grid, axis, parity) as a sparse matrix
and applied by mat-vec, so explicit updates and implicit solves share the same
stencils.  On periodic axes the centred first difference is the negative
transpose of itself, which makes ``grad`` and ``-div`` discrete adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

PERIODIC = "periodic"
WALL = "wall"

ODD = "odd"
EVEN = "even"
ONE_SIDED = None

SCALAR_BCS = ("dirichlet", "neumann", None)
VECTOR_BCS = ("dirichlet", "neumann", "navier_slip", None)


class GridError(ValueError):
    pass


class UnsupportedDimensionError(GridError):
    pass


def _normalize_kinds(boundary, dim: int) -> tuple[str, ...]:
    if isinstance(boundary, str):
        boundary = [boundary] * dim
    if len(boundary) != dim:
        raise GridError(f"expected {dim} boundary kinds, got {len(boundary)}")
    kinds = []
    for axis, kind in enumerate(boundary):
        if isinstance(kind, (list, tuple)):
            sides = {str(k).lower() for k in kind}
            if len(sides) != 1:
                raise GridError(
                    f"axis {axis}: periodic and wall boundaries cannot be mixed on one axis"
                )
            kind = sides.pop()
        kind = str(kind).lower()
        if kind not in (PERIODIC, WALL):
            raise GridError(f"axis {axis}: unknown boundary kind {kind!r}")
        kinds.append(kind)
    return tuple(kinds)


@dataclass(frozen=True)
class Grid:
    """Uniform structured grid in 1, 2 or 3 dimensions.

    ``shape`` holds cell counts per axis, ``spacing`` the cell widths and
    ``origin`` the position of the lower face of the first cell.
    """

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    origin: tuple[float, ...] = None
    boundary: tuple[str, ...] = None

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        dim = len(shape)
        if dim not in (1, 2, 3):
            raise UnsupportedDimensionError(f"grid dimension must be 1, 2 or 3, got {dim}")
        spacing = tuple(float(h) for h in np.broadcast_to(self.spacing, (dim,)))
        origin = (0.0,) * dim if self.origin is None else tuple(
            float(o) for o in np.broadcast_to(self.origin, (dim,)))
        boundary = _normalize_kinds(PERIODIC if self.boundary is None else self.boundary, dim)
        for axis, n in enumerate(shape):
            if n < 4:
                raise GridError(f"axis {axis}: need at least 4 cells, got {n}")
        for axis, h in enumerate(spacing):
            if not (h > 0 and np.isfinite(h)):
                raise GridError(f"axis {axis}: spacing must be positive, got {h}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "boundary", boundary)

    @classmethod
    def box(cls, shape: Sequence[int], lengths: Sequence[float] | float,
            boundary="periodic", origin=None) -> "Grid":
        shape = tuple(int(n) for n in np.atleast_1d(shape))
        lengths = np.broadcast_to(np.asarray(lengths, dtype=float), (len(shape),))
        return cls(shape, tuple(lengths / np.asarray(shape)), origin, boundary)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.shape, self.spacing))

    @property
    def measure(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def periodic(self) -> tuple[bool, ...]:
        return tuple(k == PERIODIC for k in self.boundary)

    @property
    def all_periodic(self) -> bool:
        return all(self.periodic)

    def axis_centers(self, axis: int) -> np.ndarray:
        n, h, o = self.shape[axis], self.spacing[axis], self.origin[axis]
        return o + (np.arange(n) + 0.5) * h

    def coords(self) -> tuple[np.ndarray, ...]:
        """Cell-centre coordinate arrays, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*[self.axis_centers(a) for a in range(self.dim)],
                                 indexing="ij"))

    def descriptor(self) -> dict:
        return {"shape": list(self.shape), "spacing": list(self.spacing),
                "origin": list(self.origin), "boundary": list(self.boundary)}

    @classmethod
    def from_descriptor(cls, desc: dict) -> "Grid":
        return cls(tuple(desc["shape"]), tuple(desc["spacing"]),
                   tuple(desc["origin"]), tuple(desc["boundary"]))


# ---------------------------------------------------------------------------
# fields


class _Field:

    def __init__(self, grid: Grid, values):
        values = np.asarray(values, dtype=float)
        expected = self.expected_shape(grid)
        if values.shape != expected:
            raise GridError(
                f"{type(self).__name__} expects values of shape {expected}, got {values.shape}")
        values = values.copy()
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    @staticmethod
    def expected_shape(grid: Grid) -> tuple[int, ...]:
        return grid.shape

    def _like(self, values):
        return type(self)(self.grid, values)

    def _check(self, other):
        if type(other) is not type(self) or other.grid != self.grid:
            raise GridError("fields must be of the same kind on the same grid")

    def __add__(self, other):
        self._check(other)
        return self._like(self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return self._like(self.values - other.values)

    def __mul__(self, a):
        return self._like(float(a) * self.values)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.values)

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.values.shape})"

    def magnitude(self) -> np.ndarray:
        """Pointwise Euclidean norm (absolute value for scalars)."""
        if self.values.ndim == self.grid.dim:
            return np.abs(self.values)
        return np.sqrt(np.sum(self.values ** 2, axis=0))


class ScalarField(_Field):
    pass


class VectorField(_Field):
    @staticmethod
    def expected_shape(grid):
        return (grid.dim,) + grid.shape


class DirectorField(_Field):
    """Three components per cell, whatever the spatial dimension."""

    @staticmethod
    def expected_shape(grid):
        return (3,) + grid.shape

    def unit_defect(self) -> float:
        return float(np.max(np.abs(self.magnitude() - 1.0)))

    def normalized(self) -> "DirectorField":
        mag = self.magnitude()
        if np.any(mag == 0):
            raise GridError("cannot normalize a director field with zero vectors")
        return DirectorField(self.grid, self.values / mag)


def scalar(grid, values) -> ScalarField:
    return ScalarField(grid, np.broadcast_to(np.asarray(values, dtype=float), grid.shape))


def vector(grid, components) -> VectorField:
    """Build a VectorField from ``grid.dim`` constants or arrays."""
    return VectorField(grid, np.stack([np.broadcast_to(np.asarray(c, dtype=float), grid.shape)
                                       for c in components]))


def director(grid, components) -> DirectorField:
    return DirectorField(grid, np.stack([np.broadcast_to(np.asarray(c, dtype=float), grid.shape)
                                         for c in components]))


# ---------------------------------------------------------------------------
# 1D stencils


def _parity_check(parity):
    if parity not in (ODD, EVEN, ONE_SIDED):
        raise GridError(f"unknown ghost parity {parity!r}")


def first_difference_1d(n: int, h: float, periodic: bool, parity=ONE_SIDED) -> sp.csr_matrix:
    """Centred first difference on ``n`` cells of width ``h``."""
    _parity_check(parity)
    lil = sp.lil_matrix((n, n))
    c = 0.5 / h
    for i in range(1, n - 1):
        lil[i, i + 1] = c
        lil[i, i - 1] = -c
    if periodic:
        lil[0, 1], lil[0, n - 1] = c, -c
        lil[n - 1, 0], lil[n - 1, n - 2] = c, -c
    elif parity == ODD:
        lil[0, 1], lil[0, 0] = c, c
        lil[n - 1, n - 1], lil[n - 1, n - 2] = -c, -c
    elif parity == EVEN:
        lil[0, 1], lil[0, 0] = c, -c
        lil[n - 1, n - 1], lil[n - 1, n - 2] = c, -c
    else:
        lil[0, 0], lil[0, 1], lil[0, 2] = -3 * c, 4 * c, -c
        lil[n - 1, n - 1], lil[n - 1, n - 2], lil[n - 1, n - 3] = 3 * c, -4 * c, c
    return lil.tocsr()


def second_difference_1d(n: int, h: float, periodic: bool, parity=ONE_SIDED) -> sp.csr_matrix:
    """Compact three-point second difference."""
    _parity_check(parity)
    lil = sp.lil_matrix((n, n))
    c = 1.0 / h ** 2
    for i in range(1, n - 1):
        lil[i, i - 1], lil[i, i], lil[i, i + 1] = c, -2 * c, c
    if periodic:
        lil[0, n - 1], lil[0, 0], lil[0, 1] = c, -2 * c, c
        lil[n - 1, n - 2], lil[n - 1, n - 1], lil[n - 1, 0] = c, -2 * c, c
    elif parity == ODD:
        lil[0, 0], lil[0, 1] = -3 * c, c
        lil[n - 1, n - 1], lil[n - 1, n - 2] = -3 * c, c
    elif parity == EVEN:
        lil[0, 0], lil[0, 1] = -c, c
        lil[n - 1, n - 1], lil[n - 1, n - 2] = -c, c
    else:
        for row, sgn in ((0, 1), (n - 1, -1)):
            for j, w in enumerate((2.0, -5.0, 4.0, -1.0)):
                lil[row, row + sgn * j] = w * c
    return lil.tocsr()


@lru_cache(maxsize=None)
def axis_operator(grid: Grid, axis: int, order: int, parity=ONE_SIDED) -> sp.csr_matrix:
    """Sparse operator acting along ``axis`` on row-major flattened cell data."""
    n, h, per = grid.shape[axis], grid.spacing[axis], grid.periodic[axis]
    if per:
        parity = ONE_SIDED
    one = (first_difference_1d if order == 1 else second_difference_1d)(n, h, per, parity)
    mats = [sp.identity(m, format="csr") for m in grid.shape]
    mats[axis] = one
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out.tocsr()


def scalar_parity(bc) -> str | None:
    if bc not in SCALAR_BCS:
        raise GridError(f"unknown scalar boundary condition {bc!r}")
    return {"dirichlet": ODD, "neumann": EVEN, None: ONE_SIDED}[bc]


def vector_parity(bc, comp: int, axis: int) -> str | None:
    """Ghost parity of vector component ``comp`` across walls normal to ``axis``.

    Navier slip: the normal component is odd (u.nu = 0); tangential components
    are even, which makes the wall vorticity vanish on a flat face.
    """
    if bc not in VECTOR_BCS:
        raise GridError(f"unknown vector boundary condition {bc!r}")
    if bc == "navier_slip":
        return ODD if comp == axis else EVEN
    return scalar_parity(bc)


def _apply(op: sp.spmatrix, values: np.ndarray) -> np.ndarray:
    return (op @ values.reshape(-1)).reshape(values.shape)


def partial(grid: Grid, values: np.ndarray, axis: int, parity=ONE_SIDED) -> np.ndarray:
    return _apply(axis_operator(grid, axis, 1, parity), values)


def second_partial(grid: Grid, values: np.ndarray, axis: int, parity=ONE_SIDED) -> np.ndarray:
    return _apply(axis_operator(grid, axis, 2, parity), values)


# ---------------------------------------------------------------------------
# differential operators


def _default_bc(f):
    if isinstance(f, DirectorField):
        return "neumann"
    if isinstance(f, VectorField):
        return "dirichlet"
    return "neumann"


def _comp_parity(f, bc, comp, axis):
    if isinstance(f, ScalarField):
        return scalar_parity(bc)
    if isinstance(f, DirectorField):
        if bc == "navier_slip":
            raise GridError("navier_slip is a velocity condition")
        return scalar_parity(bc)
    return vector_parity(bc, comp, axis)


def grad(f: ScalarField, bc=None) -> VectorField:
    """Centred gradient; one-sided second order at walls unless ``bc`` gives a ghost rule."""
    g = f.grid
    par = scalar_parity(bc)
    return VectorField(g, np.stack([partial(g, f.values, a, par) for a in range(g.dim)]))


def jacobian(f, bc=None) -> np.ndarray:
    """Array ``J[a, c] = d f_c / d x_a`` of shape (dim, ncomp, *grid.shape)."""
    g = f.grid
    if isinstance(f, ScalarField):
        return grad(f, bc).values[:, None]
    return np.stack([
        np.stack([partial(g, f.values[c], a, _comp_parity(f, bc, c, a))
                  for c in range(f.values.shape[0])])
        for a in range(g.dim)])


def div(v: VectorField, bc=None) -> ScalarField:
    g = v.grid
    out = np.zeros(g.shape)
    for a in range(g.dim):
        out += partial(g, v.values[a], a, vector_parity(bc, a, a))
    return ScalarField(g, out)


def curl(v: VectorField, bc=None):
    """Discrete curl: a VectorField in 3D, the scalar d1 u2 - d2 u1 in 2D."""
    g = v.grid
    if g.dim == 1:
        raise UnsupportedDimensionError("curl is undefined in one dimension")

    def d(c, a):
        return partial(g, v.values[c], a, vector_parity(bc, c, a))

    if g.dim == 2:
        return ScalarField(g, d(1, 0) - d(0, 1))
    return VectorField(g, np.stack([d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)]))


def laplacian(f, bc="default"):
    """Compact (3/5/7-point) Laplacian, componentwise for vector and director fields.

    Default ghost rules: Neumann for scalars and directors, Dirichlet for velocities.
    """
    if bc == "default":
        bc = _default_bc(f)
    g = f.grid
    if isinstance(f, ScalarField):
        par = scalar_parity(bc)
        return ScalarField(g, sum(second_partial(g, f.values, a, par) for a in range(g.dim)))
    comps = []
    for c in range(f.values.shape[0]):
        comps.append(sum(second_partial(g, f.values[c], a, _comp_parity(f, bc, c, a))
                         for a in range(g.dim)))
    return type(f)(g, np.stack(comps))


@lru_cache(maxsize=None)
def laplacian_matrix(grid: Grid, ncomp: int, bc, kind: str = "vector") -> sp.csr_matrix:
    """Block-diagonal sparse matrix of :func:`laplacian` for ``ncomp`` components."""
    blocks = []
    for c in range(ncomp):
        if kind == "vector":
            pars = [vector_parity(bc, c, a) for a in range(grid.dim)]
        else:
            pars = [scalar_parity(bc)] * grid.dim
        blocks.append(sum(axis_operator(grid, a, 2, pars[a]) for a in range(grid.dim)))
    return sp.block_diag(blocks, format="csr")


@lru_cache(maxsize=None)
def div_matrix(grid: Grid, bc) -> sp.csr_matrix:
    return sp.hstack([axis_operator(grid, a, 1, vector_parity(bc, a, a))
                      for a in range(grid.dim)], format="csr")


@lru_cache(maxsize=None)
def grad_matrix(grid: Grid, bc) -> sp.csr_matrix:
    return sp.vstack([axis_operator(grid, a, 1, scalar_parity(bc))
                      for a in range(grid.dim)], format="csr")


def adjoint_grad_bc(vector_bc):
    """Scalar ghost rule for which ``grad`` is the negative transpose of ``div``."""
    return {"dirichlet": "neumann", "navier_slip": "neumann", "neumann": "dirichlet",
            None: None}[vector_bc]


def adjointness_defect(grid: Grid, vector_bc) -> float:
    """max |grad + div^T| entry for the paired ghost rules; zero on periodic grids."""
    gm = grad_matrix(grid, adjoint_grad_bc(vector_bc))
    dm = div_matrix(grid, vector_bc)
    diff = (gm + dm.T).tocoo()
    return float(np.max(np.abs(diff.data))) if diff.nnz else 0.0


# ---------------------------------------------------------------------------
# integrals and norms


def integrate(f) -> float:
    """Midpoint rule: sum of cell values times cell volume."""
    return float(np.sum(f.values) * f.grid.cell_volume)


def inner(f, g) -> float:
    """Discrete L2 inner product of two fields of the same kind."""
    return float(np.sum(f.values * g.values) * f.grid.cell_volume)


def lp_norm(f, p=2.0) -> float:
    """L^p norm of the pointwise magnitude; ``p=np.inf`` gives the sample maximum."""
    p = float(p)
    if p < 1:
        raise ValueError(f"L^p norm needs p >= 1, got {p}")
    mag = f.magnitude()
    if np.isinf(p):
        return float(np.max(mag))
    return float((np.sum(mag ** p) * f.grid.cell_volume) ** (1.0 / p))


def array_lp_norm(grid: Grid, pointwise: np.ndarray, p=2.0) -> float:
    """L^p norm of a nonnegative pointwise array on ``grid``."""
    if np.isinf(p):
        return float(np.max(pointwise))
    return float((np.sum(pointwise ** p) * grid.cell_volume) ** (1.0 / p))
