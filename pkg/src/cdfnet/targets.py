"""Empirical-CDF regression targets.

Two estimators are provided: counting dominated data points at query points
drawn uniformly from an expanded bounding box, and a leave-one-out count at
the data points themselves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_CHUNK = 2048


@dataclass
class TargetSet:
    points: np.ndarray  # (M, d)
    values: np.ndarray  # (M,)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.points.shape[0] != self.values.shape[0]:
            raise ValueError("points and values disagree on the number of targets")
        if self.values.size < 1:
            raise ValueError("a target set needs at least one target")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("target points must be finite")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("target values must lie in [0, 1]")

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def subset(self, idx) -> "TargetSet":
        return TargetSet(self.points[idx], self.values[idx])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x_{j + 1}" for j in range(self.d)] + ["g_hat"])
            for p, v in zip(self.points, self.values):
                w.writerow([repr(float(c)) for c in p] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "TargetSet":
        rows = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        return cls(rows[:, :-1], rows[:, -1])


def as_dataset(data) -> np.ndarray:
    """Coerce to an (N, d) float array and check the dataset invariants."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"dataset must be an (N, d) array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("dataset contains non-finite entries")
    return x


def theta(v) -> int:
    """1 if every coordinate is >= 0, else 0."""
    return int(np.all(np.asarray(v, dtype=float) >= 0))


def dominated_fraction(queries: np.ndarray, data: np.ndarray) -> np.ndarray:
    """Fraction of rows of ``data`` that are <= each query coordinatewise."""
    queries = np.atleast_2d(queries)
    out = np.empty(queries.shape[0])
    for start in range(0, queries.shape[0], _CHUNK):
        q = queries[start:start + _CHUNK]
        dom = np.all(q[:, None, :] >= data[None, :, :], axis=2)
        out[start:start + _CHUNK] = dom.sum(axis=1) / data.shape[0]
    return out


def query_box(data: np.ndarray, margin: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate bounding box widened by ``margin`` times the range per side."""
    lo = data.min(axis=0)
    hi = data.max(axis=0)
    span = hi - lo
    pad = np.where(span > 0, margin * span, 1.0)
    return lo - pad, hi + pad


def targets_uniform(data, m: int, margin: float = 0.1, seed: int = 0,
                    include_data_points: bool = False) -> TargetSet:
    """Targets at ``m`` uniform query points in the widened bounding box.

    With ``include_data_points`` the data points themselves are appended as
    extra queries (same estimator, denominator N).
    """
    data = as_dataset(data)
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    lo, hi = query_box(data, margin)
    rng = np.random.Generator(np.random.PCG64(seed))
    q = lo + (hi - lo) * rng.random((m, data.shape[1]))
    if include_data_points:
        q = np.vstack([q, data])
    return TargetSet(q, dominated_fraction(q, data))


def targets_loo(data) -> TargetSet:
    """Leave-one-out targets at the data points, denominator N - 1."""
    data = as_dataset(data)
    n = data.shape[0]
    if n < 2:
        raise ValueError("leave-one-out targets need at least 2 data points")
    counts = dominated_fraction(data, data) * n
    # every point dominates itself; drop that self-count
    values = (np.rint(counts) - 1) / (n - 1)
    return TargetSet(data.copy(), values)


def empirical_cdf(data, x) -> np.ndarray:
    """Empirical CDF of 1-D data at the points ``x``."""
    data = np.sort(as_dataset(data)[:, 0])
    x = np.asarray(x, dtype=float)
    return np.searchsorted(data, x, side="right") / data.size
