"""Lamé operator  L u = mu * Lap u + (mu + lam) * grad div u  on a grid.

The discrete operator is assembled from the compact vector Laplacian and the
product ``grad_even @ div_odd`` of centred differences, which is symmetric
negative semi-definite for periodic, Dirichlet and Navier-slip ghost rules.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grid as G
from .grid import Grid, ScalarField, VectorField

LAME_BCS = ("periodic", "dirichlet", "navier_slip")
DENSE_EIGEN_LIMIT = 10_000


class LameError(RuntimeError):
    pass


class InadmissibleViscosity(ValueError):
    pass


@dataclass(frozen=True)
class LameParams:
    mu: float = 1.0
    lam: float = 0.0

    @property
    def admissible(self) -> bool:
        return self.mu > 0 and 2 * self.mu + 3 * self.lam >= 0

    @property
    def blowup_margin_ok(self) -> bool:
        return 7 * self.mu > 9 * self.lam

    @property
    def c0(self) -> float | None:
        c0 = 5.0 * min(self.mu, 4 * self.mu - 9 * (self.mu + self.lam) / 4)
        return c0 if c0 > 0 else None

    def require_admissible(self):
        if not self.admissible:
            raise InadmissibleViscosity(
                f"viscosities mu={self.mu}, lam={self.lam} violate the admissibility "
                "condition mu > 0 and 2 mu + 3 lam >= 0")


class ViscosityReport(NamedTuple):
    admissible: bool
    blowup_margin_ok: bool
    c0: float | None


def check_viscosity(params: LameParams) -> ViscosityReport:
    """Report the physical condition, the 7 mu > 9 lam margin and c0; never raises."""
    return ViscosityReport(params.admissible, params.blowup_margin_ok,
                           params.c0 if params.blowup_margin_ok else None)


# ---------------------------------------------------------------------------
# operator assembly


def vector_bc(grid: Grid, bc: str) -> str:
    """Map a Lamé boundary family to the ghost rule of the velocity field."""
    if bc not in LAME_BCS:
        raise LameError(f"unknown Lamé boundary condition {bc!r}")
    if bc == "periodic":
        if not grid.all_periodic:
            raise LameError("periodic Lamé problem needs an all-periodic grid")
        return "dirichlet"  # ghost rule unused on periodic axes
    return bc


def default_bc(grid: Grid) -> str:
    return "periodic" if grid.all_periodic else "dirichlet"


@lru_cache(maxsize=None)
def lame_matrix(grid: Grid, params: LameParams, bc: str) -> sp.csr_matrix:
    vbc = vector_bc(grid, bc)
    lap = G.laplacian_matrix(grid, grid.dim, vbc)
    graddiv = G.grad_matrix(grid, G.adjoint_grad_bc(vbc)) @ G.div_matrix(grid, vbc)
    return (params.mu * lap + (params.mu + params.lam) * graddiv).tocsr()


def floating_components(grid: Grid, bc: str) -> list[int]:
    """Components whose constants lie in the operator kernel (no odd wall)."""
    vbc = vector_bc(grid, bc)
    out = []
    for c in range(grid.dim):
        if all(grid.periodic[a] or G.vector_parity(vbc, c, a) == G.EVEN
               for a in range(grid.dim)):
            out.append(c)
    return out


def apply_lame(params: LameParams, u: VectorField, bc: str | None = None) -> VectorField:
    params.require_admissible()
    bc = bc or default_bc(u.grid)
    A = lame_matrix(u.grid, params, bc)
    return VectorField(u.grid, (A @ u.values.reshape(-1)).reshape(u.values.shape))


def _constant_block(grid: Grid, comps: list[int]) -> sp.csr_matrix:
    n = grid.size
    cols = []
    for c in comps:
        e = np.zeros(grid.dim * n)
        e[c * n:(c + 1) * n] = 1.0 / np.sqrt(n)
        cols.append(e)
    return sp.csr_matrix(np.array(cols).T)


@lru_cache(maxsize=32)
def _lame_factor(grid: Grid, params: LameParams, bc: str):
    A = lame_matrix(grid, params, bc)
    comps = floating_components(grid, bc)
    if comps:
        B = _constant_block(grid, comps)
        A = sp.bmat([[A, B], [B.T, None]], format="csc")
    return spla.splu(A.tocsc()), len(comps)


def remove_mean(u: VectorField, comps) -> VectorField:
    vals = u.values.copy()
    for c in comps:
        vals[c] -= vals[c].mean()
    return VectorField(u.grid, vals)


def solve_lame(params: LameParams, f: VectorField, bc: str | None = None,
               rtol: float = 1e-8) -> VectorField:
    """Solve L u = f.  Floating components need zero-mean data; their solution is mean-free."""
    params.require_admissible()
    grid = f.grid
    bc = bc or default_bc(grid)
    comps = floating_components(grid, bc)
    fnorm = np.linalg.norm(f.values)
    for c in comps:
        mean = f.values[c].mean()
        if abs(mean) * np.sqrt(grid.size) > 1e-10 * max(fnorm, 1e-300) and abs(mean) > 1e-14:
            raise LameError(
                f"component {c} of the forcing has mean {mean:.3e}; the problem is solvable "
                "only for zero-mean data on this boundary")
    if fnorm == 0:
        return VectorField(grid, np.zeros_like(f.values))
    f = remove_mean(f, comps)
    lu, nextra = _lame_factor(grid, params, bc)
    rhs = np.concatenate([f.values.reshape(-1), np.zeros(nextra)])
    sol = lu.solve(rhs)[:f.values.size]
    u = remove_mean(VectorField(grid, sol.reshape(f.values.shape)), comps)
    res = np.linalg.norm(lame_matrix(grid, params, bc) @ u.values.reshape(-1) - f.values.reshape(-1))
    if res > rtol * fnorm:
        raise LameError(f"Lamé solve residual {res / fnorm:.2e} exceeds {rtol:.0e}")
    return u


# ---------------------------------------------------------------------------
# H1 structure


def h1_inner(u: VectorField, v: VectorField, bc: str | None = None) -> float:
    """<u, v> + <grad u, grad v>, with the gradient part written as <-Lap u, v>."""
    bc = bc or default_bc(u.grid)
    L = G.laplacian_matrix(u.grid, u.grid.dim, vector_bc(u.grid, bc))
    a, b = u.values.reshape(-1), v.values.reshape(-1)
    return float((a @ b - a @ (L @ b)) * u.grid.cell_volume)


def h1_norm(u: VectorField, bc: str | None = None) -> float:
    return float(np.sqrt(max(h1_inner(u, u, bc), 0.0)))


def _h1_gram(modes: np.ndarray, grid: Grid, bc: str) -> np.ndarray:
    L = G.laplacian_matrix(grid, grid.dim, vector_bc(grid, bc))
    flat = modes.reshape(modes.shape[0], -1)
    return (flat @ flat.T - flat @ (L @ flat.T)) * grid.cell_volume


# ---------------------------------------------------------------------------
# eigenbasis


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Lamé eigenfunctions, H1-orthonormal, ordered by |eigenvalue|.

    ``eigenvalues`` are the analytic values of the continuous operator on the
    analytic paths and the discrete ones otherwise; ``discrete_eigenvalues``
    are always those of the assembled stencil.
    """

    grid: Grid
    bc: str
    params: LameParams
    modes: np.ndarray
    eigenvalues: np.ndarray
    discrete_eigenvalues: np.ndarray
    analytic: bool

    @property
    def count(self) -> int:
        return self.modes.shape[0]

    def mode(self, k: int) -> VectorField:
        return VectorField(self.grid, self.modes[k])

    def reconstruct(self, coeffs) -> VectorField:
        coeffs = np.asarray(coeffs, dtype=float)
        return VectorField(self.grid, np.tensordot(coeffs, self.modes[:coeffs.size], axes=1))

    def h1_gram(self) -> np.ndarray:
        return _h1_gram(self.modes, self.grid, self.bc)

    def l2_gram(self, m: int | None = None) -> np.ndarray:
        flat = self.modes[:m].reshape(self.modes[:m].shape[0], -1)
        return flat @ flat.T * self.grid.cell_volume

    def truncated(self, m: int) -> "EigenBasis":
        return EigenBasis(self.grid, self.bc, self.params, self.modes[:m],
                          self.eigenvalues[:m], self.discrete_eigenvalues[:m], self.analytic)

    def header(self) -> dict:
        return {"grid": self.grid.descriptor(), "bc": self.bc,
                "params": {"mu": self.params.mu, "lam": self.params.lam},
                "m": self.count, "analytic": self.analytic}


def mode_budget(grid: Grid) -> int:
    return grid.dim * grid.size


def _periodic_modes(params: LameParams, grid: Grid, m: int):
    mu, lam = params.mu, params.lam
    x = grid.coords()
    ks = [2 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / L for n, L in zip(grid.shape, grid.lengths)]
    ints = [np.round(np.fft.fftfreq(n, d=1.0 / n)).astype(int) for n in grid.shape]
    candidates = []
    for idx in np.ndindex(*grid.shape):
        kint = tuple(int(ints[a][i]) for a, i in enumerate(idx))
        # keep one of each +-k pair: first nonzero integer component positive
        nz = [v for v in kint if v != 0]
        if nz and nz[0] < 0:
            continue
        k = np.array([ks[a][i] for a, i in enumerate(idx)])
        s = np.array([np.sin(k[a] * grid.spacing[a]) / grid.spacing[a] for a in range(grid.dim)])
        lap_sym = sum(4 * np.sin(k[a] * grid.spacing[a] / 2) ** 2 / grid.spacing[a] ** 2
                      for a in range(grid.dim))
        k2 = float(k @ k)
        if not nz:
            pols = [(np.eye(grid.dim)[c], 0.0, 0.0) for c in range(grid.dim)]
        else:
            ref = s if np.linalg.norm(s) > 1e-12 * np.linalg.norm(k) else k
            e_long = ref / np.linalg.norm(ref)
            basis = [e_long]
            for c in range(grid.dim):
                v = np.eye(grid.dim)[c]
                for b in basis:
                    v = v - (v @ b) * b
                if np.linalg.norm(v) > 1e-8:
                    basis.append(v / np.linalg.norm(v))
                if len(basis) == grid.dim:
                    break
            pols = [(e_long, -(2 * mu + lam) * k2,
                     -mu * lap_sym - (mu + lam) * float(s @ s))]
            pols += [(e, -mu * k2, -mu * lap_sym) for e in basis[1:]]
        for p_idx, (e, ev, dev) in enumerate(pols):
            for trig in ((0, 1) if nz else (0,)):
                key = (abs(ev), k2, tuple(abs(v) for v in kint), kint, trig, p_idx)
                candidates.append((key, k, trig, e, ev, dev))
    candidates.sort(key=lambda c: c[0])
    modes, evs, devs = [], [], []
    for _, k, trig, e, ev, dev in candidates:
        phase = sum(k[a] * (x[a] - grid.origin[a]) for a in range(grid.dim))
        scal = np.cos(phase) if trig == 0 else np.sin(phase)
        if np.max(np.abs(scal)) < 1e-8:
            continue  # vanishes on the sample points (Nyquist sine)
        modes.append(np.einsum("c,...->c...", e, scal))
        evs.append(ev)
        devs.append(dev)
        if len(modes) == m:
            break
    return np.array(modes), np.array(evs), np.array(devs)


def _dirichlet_1d_modes(params: LameParams, grid: Grid, m: int):
    (h,), (L,) = grid.spacing, grid.lengths
    x = grid.axis_centers(0) - grid.origin[0]
    j = np.arange(1, m + 1)
    kk = j * np.pi / L
    modes = np.sin(np.outer(kk, x))[:, None, :]
    evs = -(2 * params.mu + params.lam) * kk ** 2
    devs = (-params.mu * 4 * np.sin(kk * h / 2) ** 2 / h ** 2
            - (params.mu + params.lam) * np.sin(kk * h) ** 2 / h ** 2)
    return modes, evs, devs


def _numeric_modes(params: LameParams, grid: Grid, bc: str, m: int):
    A = lame_matrix(grid, params, bc)
    n = A.shape[0]
    if n <= DENSE_EIGEN_LIMIT:
        w, V = sla.eigh(A.toarray(), subset_by_index=[n - m, n - 1])
    else:
        try:
            w, V = spla.eigsh(A.tocsc(), k=m, sigma=1e-3 * abs(params.mu), which="LM")
        except spla.ArpackNoConvergence as exc:
            raise LameError("Lamé eigensolve did not converge") from exc
    order = np.argsort(np.abs(w), kind="stable")
    w, V = w[order], V[:, order]
    modes = V.T.reshape((m, grid.dim) + grid.shape)
    return modes, w, w.copy()


def eigenbasis(params: LameParams, grid: Grid, bc: str | None = None, m: int = 16) -> EigenBasis:
    """First ``m`` Lamé eigenfunctions, orthonormal in the discrete H1 product."""
    params.require_admissible()
    bc = bc or default_bc(grid)
    vector_bc(grid, bc)
    m = int(m)
    if m < 1 or m > mode_budget(grid):
        raise LameError(f"m={m} outside 1..{mode_budget(grid)} for this grid")
    analytic = True
    if bc == "periodic":
        modes, evs, devs = _periodic_modes(params, grid, m)
    elif grid.dim == 1 and not grid.periodic[0] and m <= grid.shape[0]:
        modes, evs, devs = _dirichlet_1d_modes(params, grid, m)
    else:
        analytic = False
        modes, evs, devs = _numeric_modes(params, grid, bc, m)
    if modes.shape[0] < m:
        raise LameError(f"only {modes.shape[0]} independent modes available, asked for {m}")
    if analytic:
        norms = np.sqrt(np.diag(_h1_gram(modes, grid, bc)))
        modes = modes / norms.reshape((-1,) + (1,) * (modes.ndim - 1))
    else:
        # Gram-Schmidt in H1 via Cholesky of the Gram matrix
        K = _h1_gram(modes, grid, bc)
        R = np.linalg.cholesky(K).T
        flat = sla.solve_triangular(R, modes.reshape(m, -1), trans="T", lower=False)
        modes = flat.reshape(modes.shape)
    return EigenBasis(grid, bc, params, modes, np.asarray(evs, float),
                      np.asarray(devs, float), analytic)


def eigen_residual(basis: EigenBasis, k: int) -> float:
    """||L phi - sigma phi|| / ||phi|| with sigma the discrete eigenvalue.

    Exact eigenvectors only on the analytic paths and wherever the operator
    commutes with the Laplacian (slip walls); with no-slip walls the H1
    orthonormalisation mixes eigenvectors, see :func:`invariance_residual`.
    """
    phi = basis.mode(k)
    r = apply_lame(basis.params, phi, basis.bc).values - basis.discrete_eigenvalues[k] * phi.values
    return float(np.linalg.norm(r) / np.linalg.norm(phi.values))


def invariance_residual(basis: EigenBasis) -> float:
    """max_k ||L phi_k - Pi L phi_k|| / ||phi_k||, Pi the L2 projector onto span(basis).

    Zero (to round-off) when the span is an invariant subspace of the operator,
    which holds for any basis spanning whole eigenspaces, H1-orthonormalised or not.
    """
    flat = basis.modes.reshape(basis.count, -1)
    A = lame_matrix(basis.grid, basis.params, basis.bc)
    Q, _ = np.linalg.qr(flat.T)
    AF = (A @ flat.T)
    R = AF - Q @ (Q.T @ AF)
    return float(np.max(np.linalg.norm(R, axis=0) / np.linalg.norm(flat, axis=1)))


# ---------------------------------------------------------------------------
# decompositions


def _periodic_helmholtz(g: VectorField):
    grid = g.grid
    ks = np.meshgrid(*[2 * np.pi * np.fft.fftfreq(n, d=h) for n, h in zip(grid.shape, grid.spacing)],
                     indexing="ij")
    s = [np.sin(k * h) / h for k, h in zip(ks, grid.spacing)]
    s2 = sum(si ** 2 for si in s)
    ghat = [np.fft.fftn(g.values[a]) for a in range(grid.dim)]
    sdotg = sum(si * gi for si, gi in zip(s, ghat))
    small = s2 <= 1e-12 * np.max(s2)
    Ghat = np.where(small, 0.0, -1j * sdotg / np.where(small, 1.0, s2))
    return np.real(np.fft.ifftn(Ghat))


def helmholtz_decompose(g: VectorField, bc: str | None = None):
    """Split ``g = grad G + H`` with ``div H = 0`` and grad G orthogonal to H.

    ``G`` is the least-squares potential: on periodic grids it is computed
    exactly in Fourier space, otherwise by LSQR on the sparse gradient.  At
    walls G is Neumann and H has vanishing normal component.
    """
    grid = g.grid
    sbc = "neumann"
    if grid.all_periodic:
        Gv = _periodic_helmholtz(g)
    else:
        D = G.grad_matrix(grid, sbc)
        sol = spla.lsqr(D, g.values.reshape(-1), atol=1e-15, btol=1e-15,
                        iter_lim=50 * grid.size)
        if sol[1] in (3, 6, 7):
            raise LameError(f"Helmholtz least-squares solve stopped with flag {sol[1]}")
        Gv = sol[0].reshape(grid.shape)
    Gv = Gv - Gv.mean()
    Gf = ScalarField(grid, Gv)
    H = VectorField(grid, g.values - G.grad(Gf, sbc).values)
    return Gf, H


def helmholtz_bcs(grid: Grid) -> tuple[str, str]:
    """(scalar bc for grad G, vector bc for div H) used by :func:`helmholtz_decompose`."""
    return ("neumann", "dirichlet") if grid.all_periodic else ("neumann", "navier_slip")


def pressure_decompose(params: LameParams, law, rho: ScalarField, bc: str | None = None,
                       qs=(2.0, 6.0)):
    """v = L^{-1} grad P(rho) and the ratios ||grad v||_q / ||P(rho)||_q."""
    grid = rho.grid
    bc = bc or default_bc(grid)
    P = ScalarField(grid, law.p(rho.values))
    f = G.grad(P, G.adjoint_grad_bc(vector_bc(grid, bc)))
    v = solve_lame(params, f, bc)
    Jv = np.sqrt(np.sum(G.jacobian(v, vector_bc(grid, bc)) ** 2, axis=(0, 1)))
    monitors = {}
    for q in qs:
        gv = G.array_lp_norm(grid, Jv, q)
        pq = G.lp_norm(P, q)
        monitors[f"grad_v_L{q:g}"] = gv
        monitors[f"P_L{q:g}"] = pq
        monitors[f"ratio_L{q:g}"] = gv / pq if pq > 0 else 0.0
    return v, monitors


def deformation_tensor(u: VectorField, bc: str | None = "dirichlet") -> np.ndarray:
    """Symmetric part of the velocity gradient, shape (dim, dim, *grid.shape)."""
    J = G.jacobian(u, bc)
    return 0.5 * (J + np.swapaxes(J, 0, 1))


def hessian(u: VectorField, bc: str | None = "dirichlet") -> np.ndarray:
    """Second derivatives ``H[a, b, c] = d_a d_b u_c``; compact stencil on the diagonal."""
    grid = u.grid
    dim = grid.dim
    out = np.empty((dim, dim) + u.values.shape)
    for c in range(u.values.shape[0]):
        for a in range(dim):
            pa = G.vector_parity(bc, c, a)
            out[a, a, c] = G.second_partial(grid, u.values[c], a, pa)
            for b in range(a + 1, dim):
                pb = G.vector_parity(bc, c, b)
                val = G.partial(grid, G.partial(grid, u.values[c], b, pb), a, pa)
                out[a, b, c] = out[b, a, c] = val
    return out


def div_curl_constant(u: VectorField, bc: str = "navier_slip") -> float:
    """Measured C in ||grad u|| <= C (||curl u|| + ||div u||)."""
    grid = u.grid
    gu = G.array_lp_norm(grid, np.sqrt(np.sum(G.jacobian(u, bc) ** 2, axis=(0, 1))), 2)
    cu = G.lp_norm(G.curl(u, bc), 2)
    du = G.lp_norm(G.div(u, bc), 2)
    return gu / (cu + du)


def w2p_constant(params: LameParams, f: VectorField, bc: str | None = None, p: float = 2.0):
    """Measured C in ||grad^2 u||_p <= C (||f||_p + ||grad u||_2) for u = L^{-1} f."""
    grid = f.grid
    bc = bc or default_bc(grid)
    vbc = vector_bc(grid, bc)
    u = solve_lame(params, f, bc)
    h = hessian(u, vbc)
    hn = G.array_lp_norm(grid, np.sqrt(np.sum(h ** 2, axis=(0, 1, 2))), p)
    gu = G.array_lp_norm(grid, np.sqrt(np.sum(G.jacobian(u, vbc) ** 2, axis=(0, 1))), 2)
    return hn / (G.lp_norm(f, p) + gu)


# ---------------------------------------------------------------------------
# on-disk basis cache

_MAGIC = b"LAMEBAS1"


def basis_key(header: dict) -> str:
    ident = {k: header[k] for k in ("grid", "bc", "params", "m")}
    return hashlib.sha256(json.dumps(ident, sort_keys=True).encode()).hexdigest()[:16]


def save_basis(basis: EigenBasis, directory) -> Path:
    """Write ``<key>.basis``: magic, header length, JSON header, little-endian float64 data."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = basis.header()
    key = basis_key(header)
    blob = json.dumps(header, sort_keys=True).encode()
    path = directory / f"{key}.basis"
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(np.uint64(len(blob)).astype("<u8").tobytes())
        fh.write(blob)
        for arr in (basis.eigenvalues, basis.discrete_eigenvalues, basis.modes):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_basis(path) -> EigenBasis:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise LameError(f"{path} is not an eigenbasis cache file")
        nblob = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        header = json.loads(fh.read(nblob))
        grid = Grid.from_descriptor(header["grid"])
        m = header["m"]
        evs = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
        devs = np.frombuffer(fh.read(8 * m), dtype="<f8").copy()
        shape = (m, grid.dim) + grid.shape
        modes = np.frombuffer(fh.read(8 * int(np.prod(shape))), dtype="<f8").reshape(shape).copy()
    return EigenBasis(grid, header["bc"], LameParams(**header["params"]), modes, evs, devs,
                      header["analytic"])


def cached_eigenbasis(params: LameParams, grid: Grid, bc: str | None, m: int,
                      cache_dir=None) -> EigenBasis:
    bc = bc or default_bc(grid)
    if cache_dir is None:
        return eigenbasis(params, grid, bc, m)
    header = {"grid": grid.descriptor(), "bc": bc,
              "params": {"mu": params.mu, "lam": params.lam}, "m": m}
    path = Path(cache_dir) / f"{basis_key(header)}.basis"
    if path.exists():
        return load_basis(path)
    basis = eigenbasis(params, grid, bc, m)
    save_basis(basis, cache_dir)
    return basis
