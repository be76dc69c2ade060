"""Closed-form higher derivatives of tanh.

The n-th derivative of tanh is a polynomial of degree n + 1 in u = tanh(x).
Starting from P_1(u) = 1 - u**2 the coefficients follow from

    P_{k+1}(u) = (1 - u**2) * P_k'(u)

which is the chain rule applied to P_k(tanh x), since tanh' = 1 - tanh**2.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

MAX_ORDER = 64
_EXACT_ORDER = 20


@dataclass(frozen=True)
class TanhDerivPoly:
    order: int
    coeffs: np.ndarray  # ascending powers u**0 .. u**(order + 1)

    def __call__(self, u):
        return horner(self.coeffs, u)


def _next(coeffs: np.ndarray) -> np.ndarray:
    deriv = coeffs[1:] * np.arange(1, coeffs.size)
    out = np.zeros(deriv.size + 2)
    out[:-2] += deriv
    out[2:] -= deriv
    return out


_cache: list[np.ndarray] = [np.array([1.0, 0.0, -1.0])]
_lock = threading.Lock()


def derivative_polynomial(n: int) -> TanhDerivPoly:
    """Coefficients of P_n, cached per order."""
    if not 1 <= n <= MAX_ORDER:
        raise ValueError(f"derivative order must be in [1, {MAX_ORDER}], got {n}")
    if n > len(_cache):
        with _lock:
            while len(_cache) < n:
                nxt = _next(_cache[-1])
                if len(_cache) < _EXACT_ORDER:
                    assert np.all(nxt == np.rint(nxt)), "tanh derivative coefficients lost integrality"
                _cache.append(nxt)
    coeffs = _cache[n - 1].copy()
    coeffs.setflags(write=False)
    return TanhDerivPoly(n, coeffs)


def horner(coeffs: np.ndarray, u):
    u = np.asarray(u, dtype=float)
    acc = np.zeros_like(u) + coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * u + c
    return acc


def tanh_nth_derivative(n: int, x):
    """d^n/dx^n tanh(x); ``n = 0`` gives tanh itself."""
    if n < 0:
        raise ValueError(f"derivative order must be >= 0, got {n}")
    u = np.tanh(np.asarray(x, dtype=float))
    if n == 0:
        return u
    return derivative_polynomial(n)(u)
