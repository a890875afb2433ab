"""Dense numeric helpers shared by every model: activations, loss, Adam,
a reproducible RNG and a finite-difference gradient checker.

Everything works on float64 numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Rng",
    "AdamState",
    "matmul",
    "sigmoid",
    "tanh_act",
    "softmax_xent",
    "adam_step",
    "clip_global_norm",
    "grad_check",
]

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _splitmix64(counters: np.ndarray) -> np.ndarray:
    z = counters.copy()
    z ^= z >> np.uint64(30)
    z *= np.uint64(_MIX1)
    z ^= z >> np.uint64(27)
    z *= np.uint64(_MIX2)
    z ^= z >> np.uint64(31)
    return z


class Rng:
    """SplitMix64 generator.

    The stream is fully specified: the k-th output (k = 1, 2, ...) is
    ``mix(seed + k * 0x9E3779B97F4A7C15 mod 2**64)`` where ``mix`` is the
    SplitMix64 finalizer (shifts 30/27/31, multipliers 0xBF58476D1CE4E5B9
    and 0x94D049BB133111EB). Floats take the top 53 bits of an output and
    scale by 2**-53, so results are bitwise identical on every platform.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._state = self.seed

    def next_u64(self, size: int | None = None):
        n = 1 if size is None else int(size)
        steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA)
        counters = steps + np.uint64(self._state)
        self._state = (self._state + n * _GAMMA) & _MASK64
        out = _splitmix64(counters)
        return int(out[0]) if size is None else out

    def random(self, size: int | tuple[int, ...] | None = None):
        """Uniform floats in [0, 1)."""
        if size is None:
            return (self.next_u64() >> 11) * 2.0**-53
        shape = (size,) if isinstance(size, int) else tuple(size)
        n = int(np.prod(shape))
        bits = self.next_u64(n) >> np.uint64(11)
        return (bits.astype(np.float64) * 2.0**-53).reshape(shape)

    def uniform(self, low: float, high: float, size) -> np.ndarray:
        return low + (high - low) * self.random(size)

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError(f"randbelow needs n > 0, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % n

    def permutation(self, n: int) -> list[int]:
        items = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
        return items


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def sigmoid(x):
    """Logistic function, evaluated without overflow for any finite input."""
    x = np.asarray(x, dtype=np.float64)
    ex = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + ex), ex / (1.0 + ex))
    return out if out.ndim else float(out)


def tanh_act(x):
    out = np.tanh(np.asarray(x, dtype=np.float64))
    return out if out.ndim else float(out)


def softmax_xent(logits, target: int):
    """Softmax probabilities, cross-entropy loss and its logit gradient.

    Returns ``(probs, loss, dlogits)`` with ``dlogits = probs - onehot``.
    """
    z = np.asarray(logits, dtype=np.float64).ravel()
    if z.size == 0:
        raise ValueError("softmax_xent needs at least one logit")
    if not 0 <= target < z.size:
        raise ValueError(f"target {target} out of range for {z.size} classes")
    shifted = z - z.max()
    lse = np.log(np.exp(shifted).sum())
    log_probs = shifted - lse
    probs = np.exp(log_probs)
    dlogits = probs.copy()
    dlogits[target] -= 1.0
    return probs, float(-log_probs[target]), dlogits


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, size: int, **kwargs) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), **kwargs)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState,
              lr: float) -> np.ndarray:
    """One bias-corrected Adam update. Mutates ``state``; returns new params.

    Zero gradients leave every parameter bitwise unchanged.
    """
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise ValueError(
            f"length mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}/{state.v.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m = b1 * state.m + (1.0 - b1) * grads
    state.v = b2 * state.v + (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1**state.t)
    v_hat = state.v / (1.0 - b2**state.t)
    return params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)


def clip_global_norm(grads: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.sqrt(np.dot(grads, grads)))
    if norm > max_norm:
        return grads * (max_norm / norm)
    return grads


def grad_check(f: Callable[[np.ndarray], tuple[float, np.ndarray]],
               params: np.ndarray, h: float = 1e-5) -> float:
    """Max relative error between ``f``'s analytic gradient and central
    differences.

    ``f`` maps a parameter vector to ``(loss, grad)``. Per coordinate the
    error is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    theta = np.array(params, dtype=np.float64, copy=True)
    loss, analytic = f(theta.copy())
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss {loss} at base point")
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.empty_like(theta)
    for k in range(theta.size):
        orig = theta[k]
        theta[k] = orig + h
        up = f(theta.copy())[0]
        theta[k] = orig - h
        down = f(theta.copy())[0]
        theta[k] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise FloatingPointError(f"non-finite loss perturbing coordinate {k}")
        numeric[k] = (up - down) / (2.0 * h)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
