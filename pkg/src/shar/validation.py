"""Input checks shared by the sequence estimators.

Estimators take ``X`` as a list of (T, N) arrays (one per day) and ``y`` as
a matching list of length-T integer label arrays.
"""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_sequence(x, n_features: int | None = None) -> np.ndarray:
    x = check_array(x, dtype=np.float64, ensure_2d=True)
    if n_features is not None and x.shape[1] != n_features:
        raise ValueError(f"sequence has {x.shape[1]} features, model expects {n_features}")
    return x


def check_sequences(X, y=None, n_features: int | None = None):
    if isinstance(X, np.ndarray) and X.ndim == 2:
        raise ValueError("X must be a list of 2-D sequences, not a single 2-D array; "
                         "wrap a single day as [X]")
    seqs = [check_sequence(x, n_features) for x in X]
    if not seqs:
        raise ValueError("empty training set")
    widths = {s.shape[1] for s in seqs}
    if len(widths) != 1:
        raise ValueError(f"sequences disagree on feature count: {sorted(widths)}")
    if y is None:
        return seqs
    labels = [np.asarray(v, dtype=np.int64).ravel() for v in y]
    if len(labels) != len(seqs):
        raise ValueError(f"{len(seqs)} sequences but {len(labels)} label arrays")
    for k, (s, v) in enumerate(zip(seqs, labels)):
        if len(v) != len(s):
            raise ValueError(f"sequence {k}: {len(s)} steps but {len(v)} labels")
        if len(v) and v.min() < 0:
            raise ValueError(f"sequence {k}: negative label")
    return seqs, labels


def resolve_n_classes(labels, n_classes: int | None) -> int:
    seen = max(int(v.max()) for v in labels if len(v)) + 1
    if n_classes is None:
        return seen
    if seen > n_classes:
        raise ValueError(f"label {seen - 1} >= n_classes={n_classes}")
    return int(n_classes)


def check_binary(x: np.ndarray) -> np.ndarray:
    if not np.isin(x, (0.0, 1.0)).all():
        raise ValueError("features must be binary (0/1)")
    return x
