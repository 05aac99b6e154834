"""Named initial-data scenarios.

Each builder takes a Grid, the run parameters and a numpy Generator and
returns a ScenarioData.  Builders never touch the time stepper; the few that
need a special stepping regime say so through ``step_overrides``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, director, scalar, vector
from .initial_data import InitialData, admissible_datum, build_initial_data
from .lame import LameParams


@dataclass
class ScenarioData:
    initial: object  # InitialData
    step_overrides: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    builder: object
    default_grid: dict
    description: str


def _planar(grid, theta):
    return director(grid, [np.cos(theta), np.sin(theta), np.zeros_like(theta)])


def _constant_director(grid):
    z = np.zeros(grid.shape)
    return director(grid, [z, z, z + 1.0])


def equilibrium(grid, params, law, bc, delta, rng, rho_bar=1.0):
    """Uniform density, fluid at rest, constant director: nothing moves."""
    rho = scalar(grid, np.full(grid.shape, float(rho_bar)))
    u0 = vector(grid, [np.zeros(grid.shape)] * grid.dim)
    ini = build_initial_data(rho, _constant_director(grid), params, law, bc, u0=u0,
                             delta=delta)
    return ScenarioData(ini)


def acoustic_1d(grid, params, law, bc, delta, rng, amplitude=0.1, mode=1, noise=0.0):
    """rho = 1 + A sin(k x) with compatible velocity (g = 0).

    ``noise`` adds a seeded smooth perturbation built from the first few
    Fourier modes, for ensemble runs.
    """
    x = grid.coords()[0]
    L = grid.lengths[0]
    rho = 1.0 + amplitude * np.sin(2 * np.pi * mode * x / L)
    if noise:
        for k in range(1, 5):
            a, b = rng.normal(size=2) * noise / k ** 2
            rho = rho + a * np.sin(2 * np.pi * k * x / L) + b * np.cos(2 * np.pi * k * x / L)
    if rho.min() <= 0:
        raise ValueError("acoustic perturbation drives the density negative")
    ini = build_initial_data(scalar(grid, rho), _constant_director(grid), params, law, bc,
                             delta=delta)
    return ScenarioData(ini)


def director_heat_1d(grid, params, law, bc, delta, rng, amplitude=1.0):
    """theta(x, 0) = A sin x with rho = 1 and u = 0 frozen.

    For a planar director the harmonic-map flow reduces to theta_t = theta_xx,
    so theta = A exp(-t) sin x is exact.
    """
    x = grid.coords()[0]
    rho = scalar(grid, np.ones(grid.shape))
    u0 = vector(grid, [np.zeros(grid.shape)] * grid.dim)
    d0 = _planar(grid, amplitude * np.sin(2 * np.pi * x / grid.lengths[0]))
    # u = 0 is not compatible with a bent director, but the frozen-flow run never
    # solves the momentum balance, so the data are taken as they are
    ini = InitialData(rho, u0, d0.normalized())
    return ScenarioData(ini, {"freeze_flow": True},
                        ["flow frozen: rho and u are held fixed"])


def vacuum_bump(grid, params, law, bc, delta, rng, height=1.0, width=0.25):
    """Compactly supported density bump, vacuum elsewhere, compatible velocity."""
    coords = grid.coords()
    r2 = sum(((c - (o + 0.5 * L)) / (width * L)) ** 2
             for c, o, L in zip(coords, grid.origin, grid.lengths))
    rho = height * np.clip(1.0 - r2, 0.0, None) ** 2
    ini = build_initial_data(scalar(grid, rho), _constant_director(grid), params, law, bc,
                             delta=delta)
    return ScenarioData(ini, notes=[f"vacuum fraction {float(np.mean(ini.rho0.values == 0)):.3f}"])


def winding_defect(grid, params, law, bc, delta, rng, core=0.05):
    """Director escaping into the third direction around a near-point defect.

    d = (x, y, core) / sqrt(x^2 + y^2 + core^2) about the domain centre, so
    sup |grad d| ~ 1/core.
    """
    if grid.dim < 2:
        raise ValueError("winding-defect needs a 2D or 3D grid")
    coords = grid.coords()
    rel = [c - (o + 0.5 * L) for c, o, L in zip(coords[:2], grid.origin, grid.lengths)]
    d0 = director(grid, [rel[0], rel[1], np.full(grid.shape, core)])
    rho = scalar(grid, np.ones(grid.shape))
    ini = build_initial_data(rho, d0, params, law, bc, delta=delta)
    return ScenarioData(ini)


def shear_navier_slip(grid, params, law, bc, delta, rng, amplitude=0.5, tilt=0.3):
    """Channel with slip walls across axis 1: tangential shear forcing and a tilted director."""
    if grid.dim != 2:
        raise ValueError("shear-navier-slip needs a 2D grid")
    x, y = grid.coords()
    Ly = grid.lengths[1]
    yy = (y - grid.origin[1]) / Ly
    rho = scalar(grid, 1.0 + 0.1 * np.cos(np.pi * yy))
    h = vector(grid, [amplitude * np.cos(np.pi * yy), np.zeros(grid.shape)])
    g = admissible_datum(rho, h, bc)
    d0 = _planar(grid, tilt * np.cos(np.pi * yy))
    ini = build_initial_data(rho, d0, params, law, bc, g=g, delta=delta)
    return ScenarioData(ini)


_TWO_PI = 2 * np.pi

SCENARIOS = {
    s.name: s for s in (
        ScenarioSpec("equilibrium", equilibrium,
                     {"shape": [64], "lengths": _TWO_PI, "boundary": "periodic"},
                     "uniform rest state"),
        ScenarioSpec("acoustic-1d", acoustic_1d,
                     {"shape": [256], "lengths": _TWO_PI, "boundary": "periodic"},
                     "density perturbation with compatible velocity"),
        ScenarioSpec("director-heat-1d", director_heat_1d,
                     {"shape": [128], "lengths": _TWO_PI, "boundary": "periodic"},
                     "exact planar harmonic-map solution"),
        ScenarioSpec("vacuum-bump", vacuum_bump,
                     {"shape": [128], "lengths": _TWO_PI, "boundary": "periodic"},
                     "compactly supported density"),
        ScenarioSpec("winding-defect", winding_defect,
                     {"shape": [32, 32], "lengths": 1.0, "boundary": "wall"},
                     "steep director gradients near a point"),
        ScenarioSpec("shear-navier-slip", shear_navier_slip,
                     {"shape": [32, 32], "lengths": [2.0, 1.0],
                      "boundary": ["periodic", "wall"]},
                     "slip-wall channel with shear forcing"),
    )
}


def build_scenario(name: str, grid: Grid, params: LameParams, law, bc: str, delta: float,
                   seed: int = 0, **kwargs) -> ScenarioData:
    try:
        spec = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}") from None
    rng = np.random.default_rng(seed)
    return spec.builder(grid, params, law, bc, delta, rng, **kwargs)
