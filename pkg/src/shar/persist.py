"""Versioned binary model files.

Layout (little endian)::

    magic    4 bytes   b"SHAR" (LSTM), b"SHNB", b"SHHM", b"SHCR"
    version  uint16    currently 1
    N        uint32    input features (sensors)
    H        uint32    hidden size (0 for baselines)
    L        uint32    classes (activities incl. Idle)
    encoding uint8     0 = raw, 1 = last-fired
    variant  uint8     LSTM peephole form: 0 = diagonal, 1 = full; else 0
    payload  float64[] parameter arrays in declaration order
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

from .baselines import CrfModel, CrfTagger, HmmModel, HmmTagger, NaiveBayesTagger, NbModel
from .dataset import EncodingKind, HouseMeta
from .lstm import LstmParams, LstmTagger

FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHIIIBB")
_ENCODINGS = [EncodingKind.RAW, EncodingKind.LAST_FIRED]
_MAGIC = {LstmTagger: b"SHAR", NaiveBayesTagger: b"SHNB", HmmTagger: b"SHHM", CrfTagger: b"SHCR"}


class ModelFormatError(ValueError):
    pass


def atomic_write(path, data: bytes | str):
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode("utf-8") if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _payload(model) -> tuple[int, int, list[np.ndarray]]:
    if isinstance(model, LstmTagger):
        p = model.params_
        return p.hidden, int(p.peephole == "full"), [p.vector]
    if isinstance(model, NaiveBayesTagger):
        return 0, 0, [model.model_.prior, model.model_.theta]
    if isinstance(model, HmmTagger):
        m = model.model_
        return 0, 0, [m.pi, m.A, m.theta]
    if isinstance(model, CrfTagger):
        m = model.model_
        return 0, 0, [m.trans, m.emit, m.bias]
    raise TypeError(f"cannot serialize {type(model).__name__}")


def dumps_model(model, encoding: EncodingKind | str) -> bytes:
    encoding = EncodingKind.parse(encoding)
    hidden, variant, arrays = _payload(model)
    header = HEADER.pack(_MAGIC[type(model)], FORMAT_VERSION, model.n_features_in_,
                         hidden, model.n_classes_, _ENCODINGS.index(encoding), variant)
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    return header + body


def save_model(path, model, encoding: EncodingKind | str):
    atomic_write(path, dumps_model(model, encoding))


def loads_model(data: bytes, meta: HouseMeta | None = None):
    """Rebuild a fitted estimator. Returns ``(model, EncodingKind)``.

    With ``meta`` the header's N and L must match the house.
    """
    if len(data) < HEADER.size:
        raise ModelFormatError("file shorter than header")
    magic, version, N, H, L, enc, variant = HEADER.unpack_from(data)
    kinds = {v: k for k, v in _MAGIC.items()}
    if magic not in kinds:
        raise ModelFormatError(f"unknown magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version}")
    if enc >= len(_ENCODINGS) or variant > 1:
        raise ModelFormatError("corrupt header")
    if meta is not None and (N != meta.sensor_count or L != meta.activity_count):
        raise ModelFormatError(
            f"model expects {N} sensors / {L} activities, house has "
            f"{meta.sensor_count} / {meta.activity_count}")
    values = np.frombuffer(data, dtype="<f8", offset=HEADER.size).astype(np.float64)
    kind = kinds[magic]

    def take(*shape):
        nonlocal values
        n = int(np.prod(shape))
        if values.size < n:
            raise ModelFormatError("payload truncated")
        out, values = values[:n].reshape(shape).copy(), values[n:]
        return out

    if kind is LstmTagger:
        peephole = "full" if variant else "diagonal"
        size = LstmParams(N, H, L, peephole).size
        model = LstmTagger.from_params(LstmParams(N, H, L, peephole, take(size)))
    else:
        if kind is NaiveBayesTagger:
            fitted = NbModel(take(L), take(L, N))
        elif kind is HmmTagger:
            fitted = HmmModel(take(L), take(L, L), take(L, N))
        else:
            fitted = CrfModel(take(L, L), take(L, N), take(L))
        model = kind(n_classes=L)
        model.model_ = fitted
        model.n_classes_, model.n_features_in_ = L, N
    if values.size:
        raise ModelFormatError(f"{values.size} trailing values after payload")
    return model, _ENCODINGS[enc]


def load_model(path, meta: HouseMeta | None = None):
    with open(path, "rb") as fh:
        return loads_model(fh.read(), meta)
