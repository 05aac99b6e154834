"""Barotropic pressure laws P(rho) with P(0) = 0."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_density(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("pressure law evaluated at negative density")
    return rho


@dataclass(frozen=True)
class Isentropic:
    """P(rho) = a * rho**gamma."""

    a: float = 1.0
    gamma: float = 1.4

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"isentropic law needs a > 0, got {self.a}")
        if not self.gamma > 1:
            raise ValueError(f"isentropic law needs gamma > 1, got {self.gamma}")

    def p(self, rho):
        return self.a * _check_density(rho) ** self.gamma

    def dp(self, rho):
        return self.a * self.gamma * _check_density(rho) ** (self.gamma - 1.0)

    def lipschitz_bound(self, R: float) -> float:
        # P' is increasing for gamma > 1, so the sup over [0, R] sits at R
        return float(self.dp(max(float(R), 0.0)))

    def to_dict(self) -> dict:
        return {"kind": "isentropic", "a": self.a, "gamma": self.gamma}


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-linear law through ``(breakpoints, values)``.

    The first breakpoint must be 0 with value 0.  Beyond the last breakpoint the
    final slope is continued.  ``dp`` returns right derivatives at breakpoints.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        x = np.asarray(self.breakpoints, dtype=float)
        y = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("tabulated law needs matching 1D breakpoints and values (>= 2)")
        if x[0] != 0.0 or y[0] != 0.0:
            raise ValueError("tabulated law must start at (0, 0) so that P(0) = 0")
        if np.any(np.diff(x) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", tuple(x))
        object.__setattr__(self, "values", tuple(y))

    @property
    def _slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.breakpoints)

    def _segment(self, rho):
        x = np.asarray(self.breakpoints)
        return np.clip(np.searchsorted(x, rho, side="right") - 1, 0, x.size - 2)

    def p(self, rho):
        rho = _check_density(rho)
        k = self._segment(rho)
        x, y = np.asarray(self.breakpoints), np.asarray(self.values)
        return y[k] + self._slopes[k] * (rho - x[k])

    def dp(self, rho):
        rho = _check_density(rho)
        return self._slopes[self._segment(rho)]

    def lipschitz_bound(self, R: float) -> float:
        R = max(float(R), 0.0)
        if R == 0.0:
            return 0.0
        x = np.asarray(self.breakpoints)
        # segments intersecting [0, R]; the last one extends to infinity
        n_seg = int(np.clip(np.searchsorted(x, R, side="left"), 1, x.size - 1))
        return float(np.max(np.abs(self._slopes[:n_seg])))

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "breakpoints": list(self.breakpoints),
                "values": list(self.values)}


PressureLaw = Isentropic | Tabulated


def zero_law() -> Tabulated:
    return Tabulated((0.0, 1.0), (0.0, 0.0))


def eval_p(law, rho):
    return law.p(rho)


def eval_dp(law, rho):
    return law.dp(rho)


def lipschitz_bound(law, R: float) -> float:
    """B_P(R): sup of |P'| on [0, R]."""
    return law.lipschitz_bound(R)


def law_from_dict(d: dict | None):
    if d is None:
        return Isentropic()
    d = dict(d)
    kind = d.pop("kind", "isentropic")
    if kind == "isentropic":
        return Isentropic(**d)
    if kind == "tabulated":
        return Tabulated(tuple(d["breakpoints"]), tuple(d["values"]))
    raise ValueError(f"unknown pressure law kind {kind!r}")
