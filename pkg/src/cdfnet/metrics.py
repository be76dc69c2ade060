"""Curve comparison on fixed uniform grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .minn import MinnModel, forward
from .targets import empirical_cdf


@dataclass(frozen=True)
class Grid1D:
    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.n < 2:
            raise ValueError(f"grid needs n >= 2, got {self.n}")

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


# window covering > 0.9999 of each distribution's mass
DEFAULT_GRIDS = {
    "bart": Grid1D(-4.0, 4.0, 4001),
    "mixed": Grid1D(-10.0, 10.0, 8001),
}


def _values(values, grid: Grid1D) -> np.ndarray:
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size != grid.n:
        raise ValueError(f"expected {grid.n} values for the grid, got {v.size}")
    return v


def trapezoid(values, grid: Grid1D) -> float:
    v = _values(values, grid)
    inner = v.sum() - 0.5 * (v[0] + v[-1])
    return float((grid.hi - grid.lo) * inner / (grid.n - 1))


def ise(estimate, truth, grid: Grid1D) -> float:
    """Integrated squared error over the grid window."""
    diff = _values(estimate, grid) - _values(truth, grid)
    return trapezoid(diff * diff, grid)


def sup_cdf_error(model: MinnModel, data, grid: Grid1D) -> float:
    """Largest gap between the network output and the empirical CDF of ``data``."""
    if model.d != 1:
        raise ValueError("sup_cdf_error is defined for 1-D models only")
    x = grid.points
    return float(np.max(np.abs(forward(model, x) - empirical_cdf(data, x))))


def negative_mass(pdf_values, grid: Grid1D) -> float:
    """Share of the absolute density mass that is negative (0 for a valid density)."""
    p = _values(pdf_values, grid)
    total = trapezoid(np.abs(p), grid)
    if total == 0:
        return 0.0
    return trapezoid(np.maximum(-p, 0.0), grid) / total
