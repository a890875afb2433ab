"""Seeded finite-difference checks of the LSTM and CRF gradients."""

from __future__ import annotations

import numpy as np

from .baselines import CrfModel, crf_loglik_grad
from .lstm import LstmState, bptt_window, init_params
from .numeric import Rng, grad_check

LSTM_TOLERANCE = 1e-4
CRF_TOLERANCE = 1e-5


def lstm_instance(seed: int, n_inputs=5, hidden=8, n_classes=3, steps=12, peephole="diagonal"):
    rng = Rng(seed)
    params = init_params(n_inputs, hidden, n_classes, rng, init_scale=0.5, peephole=peephole)
    X = (rng.random((steps, n_inputs)) < 0.5).astype(np.float64)
    y = np.array([rng.randbelow(n_classes) for _ in range(steps)])
    state = LstmState(rng.uniform(-0.5, 0.5, hidden), rng.uniform(-1.0, 1.0, hidden))
    return params, X, y, state


def lstm_max_error(seed: int, corrupt: bool = False, **shape) -> float:
    params, X, y, state = lstm_instance(seed, **shape)

    def f(v):
        loss, grad, _ = bptt_window(X, y, params.like(v), state)
        g = grad.vector
        if corrupt:
            g = g.copy()
            g[0] += 1e-2
        return loss, g

    return grad_check(f, params.vector.copy(), h=1e-5)


def crf_instance(seed: int, n_classes=3, n_features=4, steps=6):
    rng = Rng(seed)
    L, N = n_classes, n_features
    w = rng.uniform(-1.0, 1.0, L * L + L * N + L)
    X = (rng.random((steps, N)) < 0.5).astype(np.float64)
    y = np.array([rng.randbelow(L) for _ in range(steps)])
    return w, X, y


def crf_max_error(seed: int, corrupt: bool = False, **shape) -> float:
    w, X, y = crf_instance(seed, **shape)
    L = shape.get("n_classes", 3)
    N = shape.get("n_features", 4)

    def f(v):
        ll, grad = crf_loglik_grad(CrfModel.from_vector(v, L, N), X, y)
        g = grad.to_vector()
        if corrupt:
            g = g.copy()
            g[0] += 1e-2
        return ll, g

    return grad_check(f, w, h=1e-5)


def run_gradchecks(instances: int = 10, corrupt: bool = False) -> dict[str, float]:
    """Max relative error over ``instances`` seeded problems per model."""
    return {
        "LSTM": max(lstm_max_error(s, corrupt) for s in range(instances)),
        "CRF": max(crf_max_error(s, corrupt) for s in range(instances)),
    }
