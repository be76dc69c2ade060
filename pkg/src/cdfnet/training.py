"""Square-loss fitting of the monotone network to CDF targets with Adadelta.

Parameters are handled as one flat vector laid out as

    raw_w1 (h*d, row-major) | b1 (h) | raw_w2 (h) | b2 (1) | alpha (h, blend only)

The per-minibatch gradient and the Adadelta update run as compiled kernels
because a full experiment takes millions of small steps.

``loss`` reports the mean squared error, but by default the optimizer steps on
the gradient of the batch *sum*. Adadelta is only scale-free while
E[g^2] >> eps; with mean-reduced gradients on CDF targets (g ~ 1e-4) eps
dominates and the update degrades to slow plain SGD.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numba
import numpy as np

from .minn import MinnModel, forward, to_blend
from .targets import TargetSet

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Raised when a loss or gradient becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 100
    adadelta_decay: float = 0.95
    adadelta_eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    loss_reduction: str = "sum"  # reduction of the gradient fed to Adadelta

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 < self.adadelta_decay < 1:
            raise ValueError(f"adadelta_decay must lie in (0, 1), got {self.adadelta_decay}")
        if self.loss_reduction not in ("mean", "sum"):
            raise ValueError(f"loss_reduction must be 'mean' or 'sum', got {self.loss_reduction!r}")
        if not self.adadelta_eps > 0:
            raise ValueError(f"adadelta_eps must be > 0, got {self.adadelta_eps}")


@dataclass
class TrainState:
    sq_grad: np.ndarray  # running E[g^2]
    sq_delta: np.ndarray  # running E[dx^2]
    epoch: int = 0
    steps: int = 0
    loss_trace: list = field(default_factory=list)

    @classmethod
    def zeros(cls, n_params: int) -> "TrainState":
        return cls(np.zeros(n_params), np.zeros(n_params))


@dataclass
class GradientVec:
    d_raw_w1: np.ndarray
    d_b1: np.ndarray
    d_raw_w2: np.ndarray
    d_b2: float
    d_alpha: Optional[np.ndarray] = None

    def flat(self) -> np.ndarray:
        parts = [self.d_raw_w1.ravel(), self.d_b1, self.d_raw_w2, [self.d_b2]]
        if self.d_alpha is not None:
            parts.append(self.d_alpha)
        return np.concatenate(parts)


def pack(model: MinnModel) -> np.ndarray:
    parts = [model.raw_w1.ravel(), model.b1, model.raw_w2, [model.b2]]
    if model.alpha is not None:
        parts.append(model.alpha)
    return np.concatenate(parts).astype(float)


def _split(theta: np.ndarray, h: int, d: int, blend: bool):
    k = h * d
    w1 = theta[:k].reshape(h, d)
    b1 = theta[k:k + h]
    w2 = theta[k + h:k + 2 * h]
    b2 = theta[k + 2 * h]
    alpha = theta[k + 2 * h + 1:k + 3 * h + 1] if blend else None
    return w1, b1, w2, b2, alpha


def unpack(theta: np.ndarray, like: MinnModel) -> MinnModel:
    w1, b1, w2, b2, alpha = _split(theta, like.h, like.d, like.alpha is not None)
    return MinnModel(w1.copy(), b1.copy(), w2.copy(), float(b2), None if alpha is None else alpha.copy())


@numba.njit(cache=True)
def _loss_grad(theta, h, d, blend, X, y, rows, grad, batch_sum=False):
    """Mean square loss over X[rows]; writes the gradient of the mean (or of
    the sum when ``batch_sum``) into grad."""
    k = h * d
    o_b1 = k
    o_w2 = k + h
    o_b2 = k + 2 * h
    o_al = k + 2 * h + 1
    grad[:] = 0.0
    W = np.empty((h, d))
    for i in range(h):
        for j in range(d):
            W[i, j] = math.exp(theta[i * d + j])
    v = np.empty(h)
    rho = np.ones(h)
    for i in range(h):
        v[i] = math.exp(theta[o_w2 + i])
        if blend:
            rho[i] = 1.0 / (1.0 + math.exp(-theta[o_al + i]))
    act = np.empty(h)
    dact = np.empty(h)
    gap = np.empty(h)
    nb = rows.shape[0]
    total = 0.0
    for r in range(nb):
        n = rows[r]
        out = theta[o_b2]
        for i in range(h):
            z = theta[o_b1 + i]
            for j in range(d):
                z += W[i, j] * X[n, j]
            t = math.tanh(z)
            if blend:
                s = min(max(z, -1.0), 1.0)
                inside = 1.0 if abs(z) < 1.0 else 0.0
                act[i] = rho[i] * t + (1.0 - rho[i]) * s
                dact[i] = rho[i] * (1.0 - t * t) + (1.0 - rho[i]) * inside
                gap[i] = t - s
            else:
                act[i] = t
                dact[i] = 1.0 - t * t
            out += v[i] * act[i]
        res = out - y[n]
        total += res * res
        c = 2.0 * res if batch_sum else 2.0 * res / nb
        grad[o_b2] += c
        for i in range(h):
            grad[o_w2 + i] += c * v[i] * act[i]
            dz = c * v[i] * dact[i]
            grad[o_b1 + i] += dz
            for j in range(d):
                grad[i * d + j] += dz * W[i, j] * X[n, j]
            if blend:
                grad[o_al + i] += c * v[i] * gap[i] * rho[i] * (1.0 - rho[i])
    return total / nb


@numba.njit(cache=True)
def _adadelta_update(theta, grad, sq_grad, sq_delta, decay, eps):
    for p in range(theta.shape[0]):
        g = grad[p]
        sq_grad[p] = decay * sq_grad[p] + (1.0 - decay) * g * g
        step = -math.sqrt(sq_delta[p] + eps) / math.sqrt(sq_grad[p] + eps) * g
        sq_delta[p] = decay * sq_delta[p] + (1.0 - decay) * step * step
        theta[p] += step


@numba.njit(cache=True)
def _all_finite(a):
    for p in range(a.shape[0]):
        if not np.isfinite(a[p]):
            return False
    return True


@numba.njit(cache=True)
def _run_epoch(theta, h, d, blend, X, y, order, batch, sq_grad, sq_delta, decay, eps, grad, batch_sum):
    """One pass over ``order`` in minibatches. Returns steps taken, or -1 - step
    index when a non-finite gradient stopped the pass before that step."""
    m = order.shape[0]
    steps = 0
    for start in range(0, m, batch):
        stop = min(start + batch, m)
        val = _loss_grad(theta, h, d, blend, X, y, order[start:stop], grad, batch_sum)
        if not (np.isfinite(val) and _all_finite(grad)):
            return -1 - steps
        _adadelta_update(theta, grad, sq_grad, sq_delta, decay, eps)
        steps += 1
    return steps


@numba.njit(cache=True)
def _full_loss(theta, h, d, blend, X, y):
    k = h * d
    total = 0.0
    for n in range(X.shape[0]):
        out = theta[k + 2 * h]
        for i in range(h):
            z = theta[k + i]
            for j in range(d):
                z += math.exp(theta[i * d + j]) * X[n, j]
            t = math.tanh(z)
            if blend:
                rho = 1.0 / (1.0 + math.exp(-theta[k + 2 * h + 1 + i]))
                t = rho * t + (1.0 - rho) * min(max(z, -1.0), 1.0)
            out += math.exp(theta[k + h + i]) * t
        res = out - y[n]
        total += res * res
    return total / X.shape[0]


def _check_dims(model: MinnModel, batch: TargetSet) -> None:
    if batch.d != model.d:
        raise ValueError(f"targets have d={batch.d} but the model has d={model.d}")


def loss(model: MinnModel, batch: TargetSet) -> float:
    """Mean squared error of ``forward`` against the target values."""
    _check_dims(model, batch)
    res = forward(model, batch.points) - batch.values
    return float(np.mean(res * res))


def backprop(model: MinnModel, batch: TargetSet) -> GradientVec:
    """Exact gradient of ``loss`` with respect to every raw parameter."""
    _check_dims(model, batch)
    theta = pack(model)
    grad = np.empty_like(theta)
    rows = np.arange(len(batch), dtype=np.int64)
    _loss_grad(theta, model.h, model.d, model.alpha is not None,
               batch.points, batch.values, rows, grad)
    w1, b1, w2, b2, alpha = _split(grad, model.h, model.d, model.alpha is not None)
    return GradientVec(w1.copy(), b1.copy(), w2.copy(), float(b2), None if alpha is None else alpha.copy())


def adadelta_step(state: TrainState, model: MinnModel, grads: GradientVec,
                  decay: float = 0.95, eps: float = 1e-6) -> tuple[MinnModel, TrainState]:
    """Apply one Adadelta update; the inputs are left untouched."""
    g = grads.flat()
    theta = pack(model)
    if g.shape != theta.shape or state.sq_grad.shape != theta.shape:
        raise ValueError("gradient, state and model shapes disagree")
    if not np.all(np.isfinite(g)):
        raise NumericalError("non-finite gradient; model left unchanged")
    sq_grad, sq_delta = state.sq_grad.copy(), state.sq_delta.copy()
    _adadelta_update(theta, g, sq_grad, sq_delta, decay, eps)
    new_state = replace(state, sq_grad=sq_grad, sq_delta=sq_delta, steps=state.steps + 1,
                        loss_trace=list(state.loss_trace))
    return unpack(theta, model), new_state


def train(model: MinnModel, targets: TargetSet, config: TrainConfig,
          state: Optional[TrainState] = None) -> tuple[MinnModel, TrainState]:
    """Run ``config.epochs`` shuffled minibatch passes of Adadelta.

    Passing the ``state`` returned by an earlier call resumes optimization.

    The full-set loss is appended to the trace after every epoch.
    """
    _check_dims(model, targets)
    blend = model.alpha is not None
    theta = pack(model)
    if state is None:
        state = TrainState.zeros(theta.size)
    else:
        state = replace(state, sq_grad=state.sq_grad.copy(), sq_delta=state.sq_delta.copy(),
                        loss_trace=list(state.loss_trace))
    if state.sq_grad.shape != theta.shape:
        raise ValueError("optimizer state does not match the model's parameter count")

    X = np.ascontiguousarray(targets.points)
    y = np.ascontiguousarray(targets.values)
    rng = np.random.Generator(np.random.PCG64(config.seed))
    grad = np.empty_like(theta)
    order = np.arange(len(targets), dtype=np.int64)
    report_every = max(1, config.epochs // 10)

    for epoch in range(config.epochs):
        if config.shuffle:
            order = rng.permutation(len(targets)).astype(np.int64)
        steps = _run_epoch(theta, model.h, model.d, blend, X, y, order, config.batch_size,
                           state.sq_grad, state.sq_delta, config.adadelta_decay,
                           config.adadelta_eps, grad, config.loss_reduction == "sum")
        if steps < 0:
            raise NumericalError(f"non-finite gradient at epoch {state.epoch + 1}, step {-steps}")
        state.steps += steps
        state.epoch += 1
        full = _full_loss(theta, model.h, model.d, blend, X, y)
        if not math.isfinite(full):
            raise NumericalError(f"non-finite loss at epoch {state.epoch}")
        state.loss_trace.append(full)
        if (epoch + 1) % report_every == 0:
            log.debug("epoch %d loss %.6g", state.epoch, full)
    return unpack(theta, model), state


def finetune(model: MinnModel, targets: TargetSet, config: TrainConfig,
             alpha0: float = 3.0) -> tuple[MinnModel, TrainState]:
    """Swap in the blended activation and retrain everything, alpha included."""
    return train(to_blend(model, alpha0), targets, config)


def write_loss_trace(state: TrainState, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for k, value in enumerate(state.loss_trace, start=1):
            fh.write(f"{k},{value!r}\n")
