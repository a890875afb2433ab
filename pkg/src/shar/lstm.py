"""Peephole LSTM sequence labeler trained with truncated BPTT and Adam.

Per time step, with ``*`` elementwise and ``w_c*`` the peephole weights::

    i = sigmoid(Wxi x + Whi h_prev + wci * c_prev + bi)
    f = sigmoid(Wxf x + Whf h_prev + wcf * c_prev + bf)
    c = f * c_prev + i * tanh(Wxc x + Whc h_prev + bc)
    o = sigmoid(Wxo x + Who h_prev + wco * c + bo)
    h = o * tanh(c)
    logits = Wy h + by

The output-gate peephole reads the *current* cell. All parameters live in
one flat float64 vector laid out in ``PARAM_FIELDS`` order, so the four
gate blocks of each weight family are contiguous and can be used stacked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .numeric import AdamState, Rng, adam_step, clip_global_norm
from .validation import check_sequence, check_sequences, resolve_n_classes

PARAM_FIELDS = ("Wxi", "Wxf", "Wxo", "Wxc", "Whi", "Whf", "Who", "Whc",
                "wci", "wcf", "wco", "bi", "bf", "bo", "bc", "Wy", "by")
PEEPHOLE_KINDS = ("diagonal", "full")


def param_shapes(n_inputs: int, hidden: int, n_classes: int,
                 peephole: str = "diagonal") -> dict[str, tuple[int, ...]]:
    if peephole not in PEEPHOLE_KINDS:
        raise ValueError(f"peephole must be one of {PEEPHOLE_KINDS}, got {peephole!r}")
    N, H, L = n_inputs, hidden, n_classes
    peep = (H,) if peephole == "diagonal" else (H, H)
    shapes = {}
    for name in PARAM_FIELDS:
        if name.startswith("Wx"):
            shapes[name] = (H, N)
        elif name.startswith("Wh"):
            shapes[name] = (H, H)
        elif name.startswith("wc"):
            shapes[name] = peep
        elif name == "Wy":
            shapes[name] = (L, H)
        elif name == "by":
            shapes[name] = (L,)
        else:
            shapes[name] = (H,)
    return shapes


class LstmParams:
    """Flat parameter vector with named, shaped views onto it.

    Besides the named fields, ``Wx``/``Wh`` are the (4H, .) stacks of the
    gate matrices in i, f, o, c order and ``b`` the stacked biases.
    """

    def __init__(self, n_inputs: int, hidden: int, n_classes: int,
                 peephole: str = "diagonal", vector: np.ndarray | None = None):
        self.n_inputs, self.hidden, self.n_classes = n_inputs, hidden, n_classes
        self.peephole = peephole
        self.shapes = param_shapes(n_inputs, hidden, n_classes, peephole)
        size = sum(math.prod(s) for s in self.shapes.values())
        if vector is None:
            vector = np.zeros(size)
        vector = np.ascontiguousarray(vector, dtype=np.float64)
        if vector.shape != (size,):
            raise ValueError(f"parameter vector has shape {vector.shape}, expected ({size},)")
        self.vector = vector
        self._bind()

    def _bind(self):
        offset = 0
        self.offsets = {}
        for name, shape in self.shapes.items():
            n = math.prod(shape)
            self.offsets[name] = offset
            setattr(self, name, self.vector[offset:offset + n].reshape(shape))
            offset += n
        H, N = self.hidden, self.n_inputs
        wx, wh, b = self.offsets["Wxi"], self.offsets["Whi"], self.offsets["bi"]
        self.Wx = self.vector[wx:wx + 4 * H * N].reshape(4 * H, N)
        self.Wh = self.vector[wh:wh + 4 * H * H].reshape(4 * H, H)
        self.b = self.vector[b:b + 4 * H]

    @property
    def size(self) -> int:
        return self.vector.size

    def like(self, vector: np.ndarray) -> "LstmParams":
        return LstmParams(self.n_inputs, self.hidden, self.n_classes, self.peephole, vector)

    def copy(self) -> "LstmParams":
        return self.like(self.vector.copy())


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden: int) -> "LstmState":
        return cls(np.zeros(hidden), np.zeros(hidden))


@dataclass
class TrainConfig:
    hidden_size: int = 300
    unroll_len: int = 70
    learning_rate: float = 0.0004
    epochs: int = 50
    seed: int = 0
    carry_state_across_windows: bool = True
    init_scale: str | float = "fan_in"
    peephole: str = "diagonal"
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.hidden_size < 1 or self.unroll_len < 1:
            raise ValueError("hidden_size and unroll_len must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


def init_params(n_inputs: int, hidden: int, n_classes: int, rng: Rng,
                init_scale: str | float = "fan_in",
                peephole: str = "diagonal") -> LstmParams:
    """Uniform(-s, s) weights, zero biases except the forget bias at 1.

    With ``init_scale="fan_in"``, gate parameters use s = 1/sqrt(N + H) and
    the output layer s = 1/sqrt(H); a float fixes s for every weight.
    """
    p = LstmParams(n_inputs, hidden, n_classes, peephole)
    for name in PARAM_FIELDS:
        if name.startswith("b"):
            continue
        if init_scale == "fan_in":
            s = 1.0 / math.sqrt(hidden) if name == "Wy" else 1.0 / math.sqrt(n_inputs + hidden)
        else:
            s = float(init_scale)
        view = getattr(p, name)
        view[...] = rng.uniform(-s, s, view.shape)
    p.bf[:] = 1.0
    return p


@dataclass
class StepCache:
    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


def _peep(p: LstmParams, w: np.ndarray, c: np.ndarray) -> np.ndarray:
    return w * c if p.peephole == "diagonal" else w @ c


def _peep_t(p: LstmParams, w: np.ndarray, d: np.ndarray) -> np.ndarray:
    return w * d if p.peephole == "diagonal" else w.T @ d


def _step(x, h_prev, c_prev, p: LstmParams):
    H = p.hidden
    z = p.Wx @ x + p.Wh @ h_prev + p.b
    i = expit(z[:H] + _peep(p, p.wci, c_prev))
    f = expit(z[H:2 * H] + _peep(p, p.wcf, c_prev))
    g = np.tanh(z[3 * H:])
    c = f * c_prev + i * g
    o = expit(z[2 * H:3 * H] + _peep(p, p.wco, c))
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return i, f, o, g, c, tanh_c, h


def _check_shapes(x: np.ndarray, prev: LstmState, p: LstmParams):
    if x.shape[-1] != p.n_inputs:
        raise ValueError(f"input width {x.shape[-1]} != model inputs {p.n_inputs}")
    if prev.h.shape != (p.hidden,) or prev.c.shape != (p.hidden,):
        raise ValueError(f"state shapes {prev.h.shape}/{prev.c.shape} != ({p.hidden},)")


def cell_forward(x, prev: LstmState, p: LstmParams) -> tuple[LstmState, StepCache]:
    x = np.asarray(x, dtype=np.float64)
    _check_shapes(x, prev, p)
    i, f, o, g, c, tanh_c, h = _step(x, prev.h, prev.c, p)
    return LstmState(h, c), StepCache(x, prev.h, prev.c, i, f, o, g, c, tanh_c, h)


@dataclass
class ForwardCache:
    """Per-step activations of a sequence, each stacked to (T, H)."""

    X: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h: np.ndarray


def forward_day(X, p: LstmParams, initial: LstmState | None = None):
    """Run the cell over every row of ``X``.

    Returns ``(logits (T, L), final LstmState, ForwardCache)``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError(f"expected a (T >= 1, N) sequence, got shape {X.shape}")
    if initial is None:
        initial = LstmState.zeros(p.hidden)
    _check_shapes(X, initial, p)
    T, H = X.shape[0], p.hidden
    out = {k: np.empty((T, H)) for k in ("h_prev", "c_prev", "i", "f", "o", "g", "c", "tanh_c", "h")}
    h, c = initial.h, initial.c
    for t in range(T):
        out["h_prev"][t], out["c_prev"][t] = h, c
        i, f, o, g, c, tanh_c, h = _step(X[t], h, c, p)
        out["i"][t], out["f"][t], out["o"][t], out["g"][t] = i, f, o, g
        out["c"][t], out["tanh_c"][t], out["h"][t] = c, tanh_c, h
    logits = out["h"] @ p.Wy.T + p.by
    return logits, LstmState(h.copy(), c.copy()), ForwardCache(X=X, **out)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def bptt_window(X, y, p: LstmParams, initial: LstmState | None = None):
    """Mean cross-entropy over a window and its exact gradient.

    Gradient paths into ``initial`` are cut (truncation boundary). Returns
    ``(loss, grad LstmParams, final LstmState)``.
    """
    y = np.asarray(y, dtype=np.int64)
    X = np.asarray(X, dtype=np.float64)
    if len(X) != len(y):
        raise ValueError(f"window has {len(X)} steps but {len(y)} labels")
    logits, final, cache = forward_day(X, p, initial)
    T, H = X.shape[0], p.hidden
    if y.min() < 0 or y.max() >= p.n_classes:
        raise ValueError(f"labels must lie in 0..{p.n_classes - 1}")
    logp = _log_softmax(logits)
    steps = np.arange(T)
    loss = float(-logp[steps, y].mean())
    if not math.isfinite(loss):
        raise FloatingPointError(f"non-finite window loss {loss}")

    grad = p.like(np.zeros(p.size))
    dlogits = np.exp(logp)
    dlogits[steps, y] -= 1.0
    dlogits /= T
    grad.Wy[...] = dlogits.T @ cache.h
    grad.by[...] = dlogits.sum(axis=0)
    dh_out = dlogits @ p.Wy

    i, f, o, g = cache.i, cache.f, cache.o, cache.g
    tc, c_prev = cache.tanh_c, cache.c_prev
    # local derivatives of each pre-activation, precomputed for all steps
    ko = tc * o * (1.0 - o)
    kc = o * (1.0 - tc * tc)
    ki = g * i * (1.0 - i)
    kf = c_prev * f * (1.0 - f)
    kg = i * (1.0 - g * g)

    dZ = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    Wh_T = p.Wh.T
    for t in range(T - 1, -1, -1):
        dh = dh_out[t] + dh_next
        dzo = dh * ko[t]
        dc = dc_next + dh * kc[t] + _peep_t(p, p.wco, dzo)
        dzi = dc * ki[t]
        dzf = dc * kf[t]
        dZ[t, :H] = dzi
        dZ[t, H:2 * H] = dzf
        dZ[t, 2 * H:3 * H] = dzo
        dZ[t, 3 * H:] = dc * kg[t]
        dc_next = dc * f[t] + _peep_t(p, p.wci, dzi) + _peep_t(p, p.wcf, dzf)
        dh_next = Wh_T @ dZ[t]

    grad.Wx[...] = dZ.T @ X
    grad.Wh[...] = dZ.T @ cache.h_prev
    grad.b[...] = dZ.sum(axis=0)
    dzi, dzf, dzo = dZ[:, :H], dZ[:, H:2 * H], dZ[:, 2 * H:3 * H]
    if p.peephole == "diagonal":
        grad.wci[...] = (dzi * c_prev).sum(axis=0)
        grad.wcf[...] = (dzf * c_prev).sum(axis=0)
        grad.wco[...] = (dzo * cache.c).sum(axis=0)
    else:
        grad.wci[...] = dzi.T @ c_prev
        grad.wcf[...] = dzf.T @ c_prev
        grad.wco[...] = dzo.T @ cache.c
    return loss, grad, final


def sequence_loss(X, y, p: LstmParams, unroll_len: int, carry: bool = True) -> float:
    """Mean window loss over a sequence split the way training splits it."""
    state = LstmState.zeros(p.hidden)
    losses = []
    y = np.asarray(y, dtype=np.int64)
    for s in range(0, len(X), unroll_len):
        logits, final, _ = forward_day(X[s:s + unroll_len], p, state)
        logp = _log_softmax(logits)
        ys = y[s:s + unroll_len]
        losses.append(float(-logp[np.arange(len(ys)), ys].mean()))
        state = final if carry else LstmState.zeros(p.hidden)
    return float(np.mean(losses))


def train_params(sequences, labels, n_classes: int, cfg: TrainConfig,
                 params: LstmParams | None = None):
    """Truncated-BPTT training loop. Returns ``(params, per-epoch mean loss)``.

    Each epoch visits the sequences in a seeded shuffled order, cuts each into
    consecutive ``unroll_len`` windows and takes one Adam step per window.
    The recurrent state resets at every sequence start.
    """
    if not sequences:
        raise ValueError("empty training set")
    rng = Rng(cfg.seed)
    n_inputs = sequences[0].shape[1]
    if params is None:
        params = init_params(n_inputs, cfg.hidden_size, n_classes, rng,
                             cfg.init_scale, cfg.peephole)
    adam = AdamState.zeros(params.size)
    trace = []
    for epoch in range(cfg.epochs):
        losses = []
        for d in rng.permutation(len(sequences)):
            X, y = sequences[d], labels[d]
            state = LstmState.zeros(params.hidden)
            for w, s in enumerate(range(0, len(X), cfg.unroll_len)):
                e = s + cfg.unroll_len
                try:
                    loss, grad, final = bptt_window(X[s:e], y[s:e], params, state)
                except FloatingPointError as exc:
                    raise FloatingPointError(f"epoch {epoch}, sequence {d}, window {w}: {exc}") from exc
                g = clip_global_norm(grad.vector, cfg.clip_norm)
                params.vector[:] = adam_step(params.vector, g, adam, cfg.learning_rate)
                state = final if cfg.carry_state_across_windows else LstmState.zeros(params.hidden)
                losses.append(loss)
        trace.append(float(np.mean(losses)))
    return params, trace


class LstmTagger(BaseEstimator):
    """Per-step activity labeler: one peephole LSTM layer plus softmax output.

    ``X`` is a list of (T, N) feature sequences, ``y`` a list of label arrays.
    """

    def __init__(self, hidden_size=300, unroll_len=70, learning_rate=0.0004,
                 epochs=50, seed=0, carry_state_across_windows=True,
                 init_scale="fan_in", peephole="diagonal", clip_norm=5.0,
                 n_classes=None):
        self.hidden_size = hidden_size
        self.unroll_len = unroll_len
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.carry_state_across_windows = carry_state_across_windows
        self.init_scale = init_scale
        self.peephole = peephole
        self.clip_norm = clip_norm
        self.n_classes = n_classes

    @classmethod
    def from_config(cls, cfg: TrainConfig, n_classes=None) -> "LstmTagger":
        return cls(hidden_size=cfg.hidden_size, unroll_len=cfg.unroll_len,
                   learning_rate=cfg.learning_rate, epochs=cfg.epochs, seed=cfg.seed,
                   carry_state_across_windows=cfg.carry_state_across_windows,
                   init_scale=cfg.init_scale, peephole=cfg.peephole,
                   clip_norm=cfg.clip_norm, n_classes=n_classes)

    def config(self) -> TrainConfig:
        return TrainConfig(self.hidden_size, self.unroll_len, self.learning_rate,
                           self.epochs, self.seed, self.carry_state_across_windows,
                           self.init_scale, self.peephole, self.clip_norm)

    def fit(self, X, y):
        seqs, labels = check_sequences(X, y)
        self.n_classes_ = resolve_n_classes(labels, self.n_classes)
        self.n_features_in_ = seqs[0].shape[1]
        self.params_, self.loss_trace_ = train_params(seqs, labels, self.n_classes_, self.config())
        return self

    @classmethod
    def from_params(cls, params: LstmParams, **kwargs) -> "LstmTagger":
        model = cls(hidden_size=params.hidden, peephole=params.peephole,
                    n_classes=params.n_classes, **kwargs)
        model.params_ = params
        model.n_classes_ = params.n_classes
        model.n_features_in_ = params.n_inputs
        model.loss_trace_ = []
        return model

    def predict_proba(self, X) -> list[np.ndarray]:
        check_is_fitted(self, "params_")
        out = []
        for x in X:
            x = check_sequence(x, self.n_features_in_)
            logits, _, _ = forward_day(x, self.params_)
            out.append(np.exp(_log_softmax(logits)))
        return out

    def predict(self, X) -> list[np.ndarray]:
        """Argmax label per step (lowest index on ties); state starts at zero."""
        return [p.argmax(axis=1) for p in self.predict_proba(X)]

    def score(self, X, y) -> float:
        """Fraction of correctly labeled steps pooled over all sequences."""
        pred = np.concatenate(self.predict(X))
        return float(np.mean(pred == np.concatenate([np.asarray(v) for v in y])))


def train(days, cfg: TrainConfig, n_classes: int | None = None) -> LstmTagger:
    """Fit a tagger on already-encoded DayGrids."""
    return LstmTagger.from_config(cfg, n_classes).fit(
        [d.features for d in days], [d.labels for d in days])
