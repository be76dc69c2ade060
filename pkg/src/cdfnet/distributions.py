"""Ground-truth mixtures of Normal and Uniform components.

Used to draw synthetic samples and to evaluate the exact density and
cumulative distribution the estimators are scored against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtr

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma) and math.isfinite(self.mu)):
            raise ValueError(f"Normal needs finite mu and sigma > 0, got {self}")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * _SQRT_2PI)

    def cdf(self, x):
        return ndtr((np.asarray(x, dtype=float) - self.mu) / self.sigma)


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a < self.b and math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError(f"Uniform needs finite a < b, got {self}")

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)


Component = Union[Normal, Uniform]


@dataclass(frozen=True)
class MixtureSpec:
    """Weighted mixture; weights must be positive and sum to one."""

    components: tuple[tuple[float, Component], ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("mixture needs at least one component")
        weights = [w for w, _ in self.components]
        if any(not (w > 0) for w in weights):
            raise ValueError(f"mixture weights must be positive, got {weights}")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {math.fsum(weights)!r}")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.components])

    def to_json(self) -> str:
        items = []
        for w, c in self.components:
            if isinstance(c, Normal):
                items.append({"w": w, "kind": "normal", "mu": c.mu, "sigma": c.sigma})
            else:
                items.append({"w": w, "kind": "uniform", "a": c.a, "b": c.b})
        return json.dumps({"components": items})

    @classmethod
    def from_json(cls, text: str) -> "MixtureSpec":
        doc = json.loads(text)
        comps = []
        for item in doc["components"]:
            kind = item["kind"]
            if kind == "normal":
                comps.append((float(item["w"]), Normal(float(item["mu"]), float(item["sigma"]))))
            elif kind == "uniform":
                comps.append((float(item["w"]), Uniform(float(item["a"]), float(item["b"]))))
            else:
                raise ValueError(f"unknown component kind {kind!r}")
        return cls(tuple(comps))


def pdf_true(spec: MixtureSpec, x):
    """Mixture density at ``x`` (scalar or array)."""
    out = 0.0
    for w, c in spec.components:
        out = out + w * c.pdf(x)
    return out


def cdf_true(spec: MixtureSpec, x):
    """Mixture CDF at ``x`` (scalar or array)."""
    out = 0.0
    for w, c in spec.components:
        out = out + w * c.cdf(x)
    return out


def sample(spec: MixtureSpec, n: int, seed: int) -> np.ndarray:
    """Draw ``n`` points as an (n, 1) array.

    The stream comes from PCG64 uniforms only: a categorical draw picks the
    component, Uniform components use ``a + (b - a) * u`` and Normal
    components use the Box-Muller transform, so the output depends on the
    seed alone.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    pick = rng.random(n)
    u1 = rng.random(n)
    u2 = rng.random(n)

    edges = np.cumsum(spec.weights)
    edges[-1] = 1.0
    idx = np.searchsorted(edges, pick, side="right")

    # Box-Muller; 1 - u1 lies in (0, 1] so the log is finite
    gauss = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)

    out = np.empty(n)
    for k, (_, c) in enumerate(spec.components):
        sel = idx == k
        if isinstance(c, Normal):
            out[sel] = c.mu + c.sigma * gauss[sel]
        else:
            out[sel] = c.a + (c.b - c.a) * u2[sel]
    return out[:, None]


def bart_simpson() -> MixtureSpec:
    """Half a standard Normal plus five narrow Normals at -1, -0.5, ..., 1."""
    comps = [(0.5, Normal(0.0, 1.0))]
    comps += [(0.1, Normal(j / 2 - 1, 0.1)) for j in range(5)]
    return MixtureSpec(tuple(comps))


def mixed_dist() -> MixtureSpec:
    """Two Normals in the tails and two Uniform plateaus in between."""
    return MixtureSpec(
        (
            (0.25, Normal(-7.0, 0.5)),
            (0.25, Uniform(-3.0, -1.0)),
            (0.25, Uniform(1.0, 3.0)),
            (0.25, Normal(7.0, 0.5)),
        )
    )


DISTRIBUTIONS = {"bart": bart_simpson, "mixed": mixed_dist}


def by_name(name: str) -> MixtureSpec:
    try:
        return DISTRIBUTIONS[name]()
    except KeyError:
        raise ValueError(f"unknown distribution {name!r}; choose from {sorted(DISTRIBUTIONS)}") from None
