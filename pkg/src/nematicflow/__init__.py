"""Compressible nematic liquid-crystal flow on structured grids.

Density, velocity and a unit director evolve together; the package supplies
the grid operators, the Lamé solver and eigenbasis, initial-data
construction, two time steppers and the diagnostics that watch the energy
law and the blow-up monitors.
"""

import os as _os

THREADS_ENV = "NEMATICFLOW_THREADS"

# BLAS pools read these at import, so they have to be set before numpy loads
if _os.environ.get(THREADS_ENV):
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ[THREADS_ENV])

__version__ = "0.1.0"

from .grid import DirectorField, Grid, ScalarField, VectorField  # noqa: E402
from .lame import EigenBasis, LameParams, eigenbasis, solve_lame  # noqa: E402
from .pressure import Isentropic, Tabulated  # noqa: E402
from .evolution import State, StepConfig, Stepper  # noqa: E402

__all__ = ["DirectorField", "EigenBasis", "Grid", "Isentropic", "LameParams", "ScalarField",
           "State", "StepConfig", "Stepper", "Tabulated", "VectorField", "eigenbasis",
           "solve_lame", "__version__"]
