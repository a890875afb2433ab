import struct

import numpy as np
import pytest

from shar.baselines import CrfTagger, HmmTagger, NaiveBayesTagger
from shar.dataset import EncodingKind, HouseMeta, encode_last_fired
from shar.lstm import LstmTagger
from shar.persist import HEADER, ModelFormatError, dumps_model, load_model, loads_model, save_model


@pytest.fixture(scope="module")
def data(synth_days):
    return [encode_last_fired(d.features) for d in synth_days[:2]], [d.labels for d in synth_days[:2]]


MODELS = [
    lambda: LstmTagger(hidden_size=5, epochs=1, n_classes=7),
    lambda: LstmTagger(hidden_size=3, epochs=1, peephole="full", n_classes=7),
    lambda: NaiveBayesTagger(n_classes=7),
    lambda: HmmTagger(n_classes=7),
    lambda: CrfTagger(epochs=2, n_classes=7),
]


@pytest.mark.parametrize("make", MODELS)
def test_roundtrip_predicts_identically(make, data, tmp_path):
    X, y = data
    model = make().fit(X, y)
    path = tmp_path / "m.bin"
    save_model(path, model, "last-fired")
    loaded, enc = load_model(path, HouseMeta.generic("s", 10, 6))
    assert enc is EncodingKind.LAST_FIRED
    assert type(loaded) is type(model)
    assert np.array_equal(loaded.predict(X)[0], model.predict(X)[0])
    assert dumps_model(loaded, enc) == path.read_bytes()


def test_lstm_header(data):
    X, y = data
    blob = dumps_model(LstmTagger(hidden_size=5, epochs=1, n_classes=7).fit(X, y), "raw")
    magic, version, N, H, L, enc, variant = HEADER.unpack_from(blob)
    assert (magic, version, N, H, L, enc, variant) == (b"SHAR", 1, 10, 5, 7, 0, 0)
    payload = np.frombuffer(blob, "<f8", offset=HEADER.size)
    assert payload.size == 4 * 5 * 10 + 4 * 5 * 5 + 3 * 5 + 4 * 5 + 7 * 5 + 7


def test_distinct_magic(data):
    X, y = data
    magics = {dumps_model(m().fit(X, y), "raw")[:4] for m in MODELS[2:]}
    assert magics == {b"SHNB", b"SHHM", b"SHCR"}


def test_meta_mismatch(data):
    X, y = data
    blob = dumps_model(NaiveBayesTagger(n_classes=7).fit(X, y), "raw")
    with pytest.raises(ModelFormatError, match="sensors"):
        loads_model(blob, HouseMeta.generic("s", 14, 10))


def test_corruption_detected(data):
    X, y = data
    blob = dumps_model(HmmTagger(n_classes=7).fit(X, y), "raw")
    with pytest.raises(ModelFormatError, match="truncated"):
        loads_model(blob[:-8])
    with pytest.raises(ModelFormatError, match="trailing"):
        loads_model(blob + b"\0" * 8)
    with pytest.raises(ModelFormatError, match="magic"):
        loads_model(b"XXXX" + blob[4:])
    with pytest.raises(ModelFormatError, match="version"):
        loads_model(blob[:4] + struct.pack("<H", 9) + blob[6:])
