import struct

import numpy as np
import pytest

from tdn import serialization
from tdn.errors import ModelFormatError, TruncatedError, VersionError
from tdn.nn import Network
from tdn.serialization import ModelBundle, dumps, loads


@pytest.fixture
def bundle(rng):
    nets = {
        "a": Network.build([(5, 7, "gaussian"), (7, 3, "sigmoid")], rng),
        "b": Network.build([(3, 5, "square")], rng).freeze(),
    }
    return ModelBundle("test", nets, {"note": "x", "k": 3}, (rng.normal(size=5), rng.uniform(1, 2, 5)))


def test_round_trip_bitwise(bundle):
    raw = dumps(bundle)
    back = loads(raw)
    assert back.role == "test" and back.meta == bundle.meta
    for name, net in bundle.networks.items():
        other = back.networks[name]
        assert [l.spec for l in other.layers] == [l.spec for l in net.layers]
        assert all(np.array_equal(p, q) for p, q in zip(net.parameters(), other.parameters()))
        assert [l.frozen for l in other.layers] == [l.frozen for l in net.layers]
    assert all(np.array_equal(x, y) for x, y in zip(back.scaler, bundle.scaler))
    assert dumps(back) == raw


def test_same_model_same_bytes(bundle):
    assert dumps(bundle) == dumps(bundle)
    assert serialization.checksum(bundle) == serialization.checksum(dumps(bundle))


def test_bad_version(bundle):
    raw = bytearray(dumps(bundle))
    struct.pack_into("<I", raw, 4, 99)
    with pytest.raises(VersionError):
        loads(bytes(raw))


def test_bad_magic(bundle):
    raw = b"XXXX" + dumps(bundle)[4:]
    with pytest.raises(ModelFormatError):
        loads(raw)


@pytest.mark.parametrize("cut", [3, 11, 40, -1, -8])
def test_truncated(bundle, cut):
    with pytest.raises(TruncatedError):
        loads(dumps(bundle)[:cut])


def test_trailing_bytes(bundle):
    with pytest.raises(ModelFormatError):
        loads(dumps(bundle) + b"\0" * 8)


def test_corrupt_header_json(bundle):
    raw = bytearray(dumps(bundle))
    raw[12] = ord("!")
    with pytest.raises(ModelFormatError):
        loads(bytes(raw))


def test_inconsistent_dims(rng):
    nets = {"a": Network.build([(2, 3)], rng)}
    raw = dumps(ModelBundle("x", nets)).replace(b'"in":2', b'"in":4')
    with pytest.raises(ModelFormatError):
        loads(raw)


def test_save_load_file(tmp_path, bundle):
    p = tmp_path / "m.tdnm"
    serialization.save(str(p), bundle)
    assert p.read_bytes() == dumps(bundle)
    assert dumps(serialization.load(str(p))) == dumps(bundle)


def test_save_missing_dir(tmp_path, bundle):
    with pytest.raises(FileNotFoundError):
        serialization.save(str(tmp_path / "nope" / "m.tdnm"), bundle)
    assert not (tmp_path / "nope").exists()
