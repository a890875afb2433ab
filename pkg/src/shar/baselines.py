"""Classical sequence classifiers for binary sensor streams.

* Bernoulli naive Bayes, per slice, no temporal model.
* Supervised HMM whose emissions factorize into per-sensor Bernoullis.
* Linear-chain CRF with label-observation, label-bias and transition
  features, trained by Adam on the full-data penalized log-likelihood.

Everything probabilistic is computed in log space. Decoders return the
lexicographically smallest optimal sequence when several tie.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .numeric import AdamState, Rng, adam_step
from .validation import check_binary, check_sequence, check_sequences, resolve_n_classes

# relative tolerance under which two decoding scores count as a tie
TIE_RTOL = 1e-9


def _count_classes(labels, n_classes: int) -> np.ndarray:
    return np.bincount(np.concatenate(labels), minlength=n_classes).astype(np.float64)


def _bernoulli_theta(seqs, labels, n_classes: int, alpha: float) -> np.ndarray:
    N = seqs[0].shape[1]
    on = np.zeros((n_classes, N))
    for x, y in zip(seqs, labels):
        np.add.at(on, y, x)
    counts = _count_classes(labels, n_classes)
    return (on + alpha) / (counts[:, None] + 2.0 * alpha)


def _bernoulli_loglik(theta: np.ndarray, X: np.ndarray) -> np.ndarray:
    """(T, L) log P(x_t | label) under independent per-sensor Bernoullis."""
    log_on, log_off = np.log(theta), np.log1p(-theta)
    return X @ (log_on - log_off).T + log_off.sum(axis=1)


# --------------------------------------------------------------------------
# naive Bayes

@dataclass
class NbModel:
    prior: np.ndarray  # (L,)
    theta: np.ndarray  # (L, N), P(sensor on | label)


def nb_train(seqs, labels, n_classes: int, alpha: float = 0.01) -> NbModel:
    if not seqs or sum(len(y) for y in labels) == 0:
        raise ValueError("empty training data")
    if alpha <= 0:
        raise ValueError("smoothing alpha must be positive")
    counts = _count_classes(labels, n_classes)
    prior = (counts + alpha) / (counts.sum() + alpha * n_classes)
    return NbModel(prior, _bernoulli_theta(seqs, labels, n_classes, alpha))


def nb_joint_loglik(model: NbModel, X: np.ndarray) -> np.ndarray:
    return np.log(model.prior) + _bernoulli_loglik(model.theta, np.atleast_2d(X))


def nb_predict(model: NbModel, X: np.ndarray) -> np.ndarray:
    """Per-slice MAP label; a 1-D ``X`` is treated as a single slice."""
    scores = nb_joint_loglik(model, X)
    out = scores.argmax(axis=1)
    return out if np.ndim(X) == 2 else int(out[0])


# --------------------------------------------------------------------------
# HMM

@dataclass
class HmmModel:
    pi: np.ndarray  # (L,)
    A: np.ndarray  # (L, L), A[i, j] = P(next = j | current = i)
    theta: np.ndarray  # (L, N)


def hmm_train(seqs, labels, n_classes: int, alpha: float = 0.01) -> HmmModel:
    """Counting estimates with add-alpha smoothing; bigrams never cross days."""
    if not seqs or sum(len(y) for y in labels) == 0:
        raise ValueError("empty training data")
    if alpha <= 0:
        raise ValueError("smoothing alpha must be positive")
    L = n_classes
    first = np.bincount([int(y[0]) for y in labels if len(y)], minlength=L).astype(np.float64)
    pi = (first + alpha) / (first.sum() + alpha * L)
    bigrams = np.zeros((L, L))
    for y in labels:
        np.add.at(bigrams, (y[:-1], y[1:]), 1.0)
    A = (bigrams + alpha) / (bigrams.sum(axis=1, keepdims=True) + alpha * L)
    return HmmModel(pi, A, _bernoulli_theta(seqs, labels, L, alpha))


def hmm_emission_loglik(model: HmmModel, X: np.ndarray) -> np.ndarray:
    return _bernoulli_loglik(model.theta, X)


def hmm_log_likelihood(model: HmmModel, X: np.ndarray) -> float:
    """log P(X) by the forward recursion."""
    emit = hmm_emission_loglik(model, X)
    log_A = np.log(model.A)
    alpha = np.log(model.pi) + emit[0]
    for t in range(1, len(emit)):
        alpha = logsumexp(alpha[:, None] + log_A, axis=0) + emit[t]
    return float(logsumexp(alpha))


def _first_best(scores: np.ndarray) -> int:
    # scores within TIE_RTOL of the max count as tied: equal-valued paths can
    # differ by an ulp depending on summation order
    best = scores.max()
    return int(np.argmax(scores >= best - TIE_RTOL * max(1.0, abs(best))))


def map_decode(start: np.ndarray, trans: np.ndarray, unary: np.ndarray) -> np.ndarray:
    """Best-scoring path for ``start[y0] + sum unary[t, yt] + sum trans[y(t-1), yt]``.

    Runs the max-product recursion backwards (best suffix score per state),
    then picks labels front to back taking the lowest index among ties, which
    yields the lexicographically smallest optimal path.
    """
    T, L = unary.shape
    suffix = np.empty((T, L))
    suffix[T - 1] = unary[T - 1]
    for t in range(T - 2, -1, -1):
        suffix[t] = unary[t] + (trans + suffix[t + 1][None, :]).max(axis=1)
    path = np.empty(T, dtype=np.int64)
    path[0] = _first_best(start + suffix[0])
    for t in range(1, T):
        path[t] = _first_best(trans[path[t - 1]] + suffix[t])
    return path


def hmm_viterbi(model: HmmModel, X: np.ndarray) -> np.ndarray:
    return map_decode(np.log(model.pi), np.log(model.A), hmm_emission_loglik(model, X))


# --------------------------------------------------------------------------
# linear-chain CRF

@dataclass
class CrfModel:
    trans: np.ndarray  # (L, L)
    emit: np.ndarray  # (L, N)
    bias: np.ndarray  # (L,)

    @classmethod
    def zeros(cls, n_classes: int, n_features: int) -> "CrfModel":
        return cls(np.zeros((n_classes, n_classes)), np.zeros((n_classes, n_features)),
                   np.zeros(n_classes))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.trans.ravel(), self.emit.ravel(), self.bias])

    @classmethod
    def from_vector(cls, v: np.ndarray, n_classes: int, n_features: int) -> "CrfModel":
        L, N = n_classes, n_features
        return cls(v[:L * L].reshape(L, L).copy(), v[L * L:L * L + L * N].reshape(L, N).copy(),
                   v[L * L + L * N:].copy())


def crf_unary(model: CrfModel, X: np.ndarray) -> np.ndarray:
    return X @ model.emit.T + model.bias


def _crf_batch(model: CrfModel, X: np.ndarray, y: np.ndarray):
    """Log-likelihoods and summed gradient for a batch of equal-length
    sequences, ``X`` (D, T, N) and ``y`` (D, T)."""
    D, T = y.shape
    L = model.trans.shape[0]
    unary = X @ model.emit.T + model.bias  # (D, T, L)
    trans = model.trans
    shift = trans.max()
    exp_trans = np.exp(trans - shift)

    # forward/backward in log space; each step rescales by its max before exp
    log_alpha = np.empty((D, T, L))
    log_alpha[:, 0] = unary[:, 0]
    for t in range(1, T):
        prev = log_alpha[:, t - 1]
        m = prev.max(axis=1, keepdims=True)
        log_alpha[:, t] = np.log(np.exp(prev - m) @ exp_trans) + (m + shift) + unary[:, t]
    log_beta = np.zeros((D, T, L))
    for t in range(T - 2, -1, -1):
        nxt = log_beta[:, t + 1] + unary[:, t + 1]
        m = nxt.max(axis=1, keepdims=True)
        log_beta[:, t] = np.log(np.exp(nxt - m) @ exp_trans.T) + (m + shift)
    log_z = logsumexp(log_alpha[:, T - 1], axis=1)  # (D,)
    if not np.all(np.isfinite(log_z)):
        raise FloatingPointError(f"non-finite log partition function {log_z}")

    rows = np.arange(D)[:, None]
    steps = np.arange(T)[None, :]
    score = unary[rows, steps, y].sum(axis=1) + trans[y[:, :-1], y[:, 1:]].sum(axis=1)
    loglik = score - log_z

    grad = CrfModel.zeros(L, X.shape[2])
    diff = -np.exp(log_alpha + log_beta - log_z[:, None, None])  # minus node marginals
    diff[rows, steps, y] += 1.0
    grad.emit[...] = np.einsum("dtl,dtn->ln", diff, X)
    grad.bias[...] = diff.sum(axis=(0, 1))
    if T > 1:
        a = (log_alpha[:, :-1, :, None] + trans
             + (unary[:, 1:] + log_beta[:, 1:])[:, :, None, :] - log_z[:, None, None, None])
        np.add.at(grad.trans, (y[:, :-1], y[:, 1:]), 1.0)
        grad.trans -= np.exp(a).sum(axis=(0, 1))
    return loglik, grad


def crf_loglik_grad(model: CrfModel, X: np.ndarray, y: np.ndarray):
    """log P(y | X) and its gradient as a CrfModel of the same shape.

    The gradient is empirical feature counts minus expected counts, with
    expectations taken from forward-backward marginals.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    loglik, grad = _crf_batch(model, X[None], y[None])
    return float(loglik[0]), grad


def crf_predict(model: CrfModel, X: np.ndarray) -> np.ndarray:
    L = model.trans.shape[0]
    return map_decode(np.zeros(L), model.trans, crf_unary(model, np.asarray(X, dtype=np.float64)))


@dataclass
class CrfConfig:
    epochs: int = 100
    learning_rate: float = 0.01
    l2: float = 1e-4
    seed: int = 0
    init_scale: float = 0.0


def crf_objective(model: CrfModel, seqs, labels, l2: float):
    """Penalized log-likelihood summed over sequences, and its gradient vector.

    Sequences of equal length are processed together, in order of first
    appearance, so the sum order is fixed.
    """
    groups: dict[int, list[int]] = {}
    for k, y in enumerate(labels):
        groups.setdefault(len(y), []).append(k)
    total = 0.0
    grad = np.zeros(model.to_vector().size)
    for idx in groups.values():
        X = np.stack([np.asarray(seqs[k], dtype=np.float64) for k in idx])
        y = np.stack([np.asarray(labels[k], dtype=np.int64) for k in idx])
        ll, g = _crf_batch(model, X, y)
        total += float(ll.sum())
        grad += g.to_vector()
    w = model.to_vector()
    return total - l2 * float(w @ w), grad - 2.0 * l2 * w


def crf_train(seqs, labels, n_classes: int, cfg: CrfConfig | None = None):
    """Maximize the penalized log-likelihood with full-batch Adam.

    Weights start at zero, or uniform(-init_scale, init_scale) drawn from the
    seeded generator. Returns ``(model, per-epoch objective)``.
    """
    cfg = cfg or CrfConfig()
    if not seqs:
        raise ValueError("empty training data")
    N = seqs[0].shape[1]
    w = np.zeros(n_classes * n_classes + n_classes * N + n_classes)
    if cfg.init_scale > 0:
        w = Rng(cfg.seed).uniform(-cfg.init_scale, cfg.init_scale, w.size)
    adam = AdamState.zeros(w.size)
    trace = []
    for _ in range(cfg.epochs):
        model = CrfModel.from_vector(w, n_classes, N)
        obj, grad = crf_objective(model, seqs, labels, cfg.l2)
        trace.append(obj)
        w = adam_step(w, -grad, adam, cfg.learning_rate)
    return CrfModel.from_vector(w, n_classes, N), trace


# --------------------------------------------------------------------------
# estimators

class _SequenceTagger(BaseEstimator):
    def predict(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "model_")
        return [self._decode(check_binary(check_sequence(x, self.n_features_in_))) for x in X]

    def score(self, X, y) -> float:
        """Fraction of correctly labeled steps pooled over all sequences."""
        pred = np.concatenate(self.predict(X))
        return float(np.mean(pred == np.concatenate([np.asarray(v) for v in y])))

    def _prepare(self, X, y):
        seqs, labels = check_sequences(X, y)
        for s in seqs:
            check_binary(s)
        self.n_classes_ = resolve_n_classes(labels, self.n_classes)
        self.n_features_in_ = seqs[0].shape[1]
        return seqs, labels


class NaiveBayesTagger(_SequenceTagger):
    """Bernoulli naive Bayes applied independently to every slice."""

    def __init__(self, alpha=0.01, n_classes=None):
        self.alpha = alpha
        self.n_classes = n_classes

    def fit(self, X, y):
        seqs, labels = self._prepare(X, y)
        self.model_ = nb_train(seqs, labels, self.n_classes_, self.alpha)
        return self

    def _decode(self, x):
        return nb_predict(self.model_, x)


class HmmTagger(_SequenceTagger):
    def __init__(self, alpha=0.01, n_classes=None):
        self.alpha = alpha
        self.n_classes = n_classes

    def fit(self, X, y):
        seqs, labels = self._prepare(X, y)
        self.model_ = hmm_train(seqs, labels, self.n_classes_, self.alpha)
        return self

    def _decode(self, x):
        return hmm_viterbi(self.model_, x)


class CrfTagger(_SequenceTagger):
    def __init__(self, epochs=100, learning_rate=0.01, l2=1e-4, seed=0,
                 init_scale=0.0, n_classes=None):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.l2 = l2
        self.seed = seed
        self.init_scale = init_scale
        self.n_classes = n_classes

    def fit(self, X, y):
        seqs, labels = self._prepare(X, y)
        cfg = CrfConfig(self.epochs, self.learning_rate, self.l2, self.seed, self.init_scale)
        self.model_, self.objective_trace_ = crf_train(seqs, labels, self.n_classes_, cfg)
        return self

    def _decode(self, x):
        return crf_predict(self.model_, x)
