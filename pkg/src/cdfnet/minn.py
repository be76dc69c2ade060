"""Monotonic increasing single-hidden-layer network.

    H(x) = sum_i exp(v_i) * act(z_i) + b2,   z_i = sum_j exp(W_ij) * x_j + b1_i

Input and output weights are stored in log space, so the effective weights
are positive whatever the raw values are and H is strictly increasing in
every coordinate. The density is the mixed partial d^d H / dx_1 ... dx_d,
which collapses to a sum over hidden units of act^{(d)}(z_i) scaled by
exp(v_i + sum_j W_ij).

``act`` is tanh, or after fine-tuning the blend
``rho * tanh(z) + (1 - rho) * clip(z, -1, 1)`` with ``rho = sigmoid(alpha)``
per hidden unit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import expit

from .deriv_poly import tanh_nth_derivative

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """Base class for problems reading a serialized model."""


class ModelParseError(ModelFileError):
    """The document is not valid JSON or lacks required fields."""


class ModelVersionError(ModelFileError):
    """The document was written with an unsupported format version."""


class ModelValidationError(ModelFileError):
    """Fields parse but are inconsistent (shapes, h < 1, non-finite values)."""


@dataclass(frozen=True, eq=False)
class MinnModel:
    raw_w1: np.ndarray  # (h, d), log of the input weights
    b1: np.ndarray  # (h,)
    raw_w2: np.ndarray  # (h,), log of the output weights
    b2: float
    alpha: Optional[np.ndarray] = field(default=None)  # (h,) in blend mode, else None

    def __post_init__(self):
        w1 = np.array(self.raw_w1, dtype=float, ndmin=2)
        object.__setattr__(self, "raw_w1", w1)
        object.__setattr__(self, "b1", np.array(self.b1, dtype=float).reshape(-1))
        object.__setattr__(self, "raw_w2", np.array(self.raw_w2, dtype=float).reshape(-1))
        object.__setattr__(self, "b2", float(self.b2))
        if self.alpha is not None:
            object.__setattr__(self, "alpha", np.array(self.alpha, dtype=float).reshape(-1))
        h, d = w1.shape
        if h < 1 or d < 1:
            raise ModelValidationError(f"need h >= 1 and d >= 1, got h={h}, d={d}")
        if self.b1.shape != (h,) or self.raw_w2.shape != (h,):
            raise ModelValidationError("b1 and raw_w2 must have one entry per hidden unit")
        if self.alpha is not None and self.alpha.shape != (h,):
            raise ModelValidationError("alpha must have one entry per hidden unit")
        arrays = [w1, self.b1, self.raw_w2, np.array([self.b2])]
        if self.alpha is not None:
            arrays.append(self.alpha)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ModelValidationError("model parameters must be finite")

    @property
    def h(self) -> int:
        return self.raw_w1.shape[0]

    @property
    def d(self) -> int:
        return self.raw_w1.shape[1]

    @property
    def activation(self) -> str:
        return "tanh" if self.alpha is None else "blend"

    @property
    def rho(self) -> Optional[np.ndarray]:
        return None if self.alpha is None else expit(self.alpha)

    def __eq__(self, other):
        if not isinstance(other, MinnModel):
            return NotImplemented
        if (self.alpha is None) != (other.alpha is None):
            return False
        same = (
            np.array_equal(self.raw_w1, other.raw_w1)
            and np.array_equal(self.b1, other.b1)
            and np.array_equal(self.raw_w2, other.raw_w2)
            and self.b2 == other.b2
        )
        return same and (self.alpha is None or np.array_equal(self.alpha, other.alpha))


def ramp(z):
    return np.clip(z, -1.0, 1.0)


def eta(z, rho):
    """Blend of tanh and the clipped-linear ramp."""
    return rho * np.tanh(z) + (1.0 - rho) * ramp(z)


def _as_batch(model: MinnModel, x) -> tuple[np.ndarray, bool]:
    # scalar -> one point; 1-D -> batch of scalars if d == 1, else one point
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and model.d > 1)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(-1, 1) if model.d == 1 else x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != model.d:
        raise ValueError(f"model expects {model.d} input coordinates, got shape {x.shape}")
    return x, single


def preactivation(model: MinnModel, x: np.ndarray) -> np.ndarray:
    """z for an (M, d) batch, shape (M, h)."""
    return x @ np.exp(model.raw_w1).T + model.b1


def activate(model: MinnModel, z: np.ndarray) -> np.ndarray:
    if model.alpha is None:
        return np.tanh(z)
    return eta(z, model.rho)


def forward(model: MinnModel, x):
    """CDF estimate at a single point (float) or an (M, d) batch (array)."""
    xb, single = _as_batch(model, x)
    out = activate(model, preactivation(model, xb)) @ np.exp(model.raw_w2) + model.b2
    return float(out[0]) if single else out


def activation_derivative(model: MinnModel, z: np.ndarray, n: int) -> np.ndarray:
    """n-th derivative of the activation at z (n >= 1).

    The ramp contributes its first derivative (indicator of the open interval
    (-1, 1)) and nothing beyond.
    """
    dt = tanh_nth_derivative(n, z)
    if model.alpha is None:
        return dt
    rho = model.rho
    if n == 1:
        return rho * dt + (1.0 - rho) * (np.abs(z) < 1.0)
    return rho * dt


def pdf_at(model: MinnModel, x):
    """Density estimate: the d-th mixed partial of ``forward``.

    Not clamped. For d >= 2 the value can be negative.
    """
    xb, single = _as_batch(model, x)
    z = preactivation(model, xb)
    scale = np.exp(model.raw_w2 + model.raw_w1.sum(axis=1))
    out = activation_derivative(model, z, model.d) @ scale
    return float(out[0]) if single else out


def output_span(model: MinnModel) -> float:
    """forward(+inf) - forward(-inf): the total mass the density integrates to."""
    return 2.0 * float(np.exp(model.raw_w2).sum())


def init(d: int, h: int, seed: int = 0, scale: float = 0.1, data=None) -> MinnModel:
    """Random tanh-mode model.

    Output weights start near 1 / (2h) so the outputs span about [0, 1]
    around ``b2 = 0.5``. With ``data``, input weights start near h / range
    per coordinate (divided by d) and the biases place unit i's transition
    at the data quantile (i + 1/2) / h, which tiles the data range. Without
    data, input weights start near 1 and biases near 0. Raw parameters get
    uniform(-scale, scale) jitter.
    """
    if d < 1 or h < 1:
        raise ValueError(f"need d >= 1 and h >= 1, got d={d}, h={h}")
    rng = np.random.Generator(np.random.PCG64(seed))
    jitter_w1 = rng.uniform(-scale, scale, size=(h, d))
    jitter_w2 = rng.uniform(-scale, scale, size=h)
    jitter_b1 = rng.uniform(-scale, scale, size=h)

    raw_w2 = math.log(1.0 / (2 * h)) + jitter_w2
    if data is None:
        raw_w1 = jitter_w1
        b1 = jitter_b1
    else:
        data = np.asarray(data, dtype=float).reshape(-1, d)
        span = np.ptp(data, axis=0)
        span = np.where(span > 0, span, 1.0)
        raw_w1 = np.log(h / (span * d))[None, :] + jitter_w1
        levels = (np.arange(h) + 0.5) / h
        q = np.quantile(data, levels, axis=0)  # (h, d)
        b1 = -(np.exp(raw_w1) * q).sum(axis=1) + jitter_b1
    return MinnModel(raw_w1, b1, raw_w2, 0.5)


def to_blend(model: MinnModel, alpha0: float = 3.0) -> MinnModel:
    """Switch to the blended activation with every alpha set to ``alpha0``."""
    if model.alpha is not None:
        raise ValueError("model is already in blend mode (already fine-tuned)")
    return replace(model, alpha=np.full(model.h, float(alpha0)))


def to_dict(model: MinnModel) -> dict:
    doc = {
        "version": FORMAT_VERSION,
        "d": model.d,
        "h": model.h,
        "activation": model.activation,
        "raw_w1": model.raw_w1.tolist(),
        "b1": model.b1.tolist(),
        "raw_w2": model.raw_w2.tolist(),
        "b2": model.b2,
    }
    if model.alpha is not None:
        doc["alpha"] = model.alpha.tolist()
    return doc


def serialize(model: MinnModel) -> str:
    # json writes floats with repr, which round-trips doubles exactly
    return json.dumps(to_dict(model), indent=1) + "\n"


def from_dict(doc) -> MinnModel:
    if not isinstance(doc, dict):
        raise ModelParseError("model document must be a JSON object")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format version {doc.get('version')!r}")
    try:
        d, h, activation = int(doc["d"]), int(doc["h"]), doc["activation"]
        raw_w1, b1, raw_w2, b2 = doc["raw_w1"], doc["b1"], doc["raw_w2"], doc["b2"]
        alpha = doc.get("alpha")
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelParseError(f"model document is missing or has malformed fields: {exc}") from exc
    if h < 1 or d < 1:
        raise ModelValidationError(f"need h >= 1 and d >= 1, got h={h}, d={d}")
    if activation not in ("tanh", "blend"):
        raise ModelValidationError(f"unknown activation {activation!r}")
    if (activation == "blend") != (alpha is not None):
        raise ModelValidationError("alpha must be present exactly when activation is 'blend'")
    try:
        w1 = np.array(raw_w1, dtype=float)
        arrays = [np.array(b1, dtype=float), np.array(raw_w2, dtype=float)]
        al = None if alpha is None else np.array(alpha, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"malformed numeric array: {exc}") from exc
    if w1.shape != (h, d) or any(a.shape != (h,) for a in arrays) or (al is not None and al.shape != (h,)):
        raise ModelValidationError(f"array shapes disagree with d={d}, h={h}")
    return MinnModel(w1, arrays[0], arrays[1], b2, al)


def deserialize(text: str) -> MinnModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"model document is not valid JSON: {exc}") from exc
    return from_dict(doc)


def save(model: MinnModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(model))


def load(path) -> MinnModel:
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read())
