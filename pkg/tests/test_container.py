import numpy as np
import pytest

from lavatar import container as ct


def test_round_trip_preserves_bits(rng):
    arrays = {
        "floats": rng.normal(size=(4, 3)).astype(np.float32),
        "indices": rng.integers(0, 100, size=(7,)).astype(np.uint32),
        "signed": np.array([-1, 0, 5], dtype=np.int32),
    }
    blob = ct.write_container(arrays)
    back = ct.read_container(blob)
    assert set(back) == set(arrays)
    for name in arrays:
        assert back[name].dtype == arrays[name].dtype
        assert np.array_equal(back[name], arrays[name])


def test_write_is_deterministic(rng):
    arrays = {"a": rng.normal(size=(5,)).astype(np.float32)}
    assert ct.write_container(arrays) == ct.write_container(arrays)


def test_bad_magic_rejected():
    with pytest.raises(ct.ContainerError, match="magic"):
        ct.read_container(b"NOTSOSM1" + b"\x00" * 16)


def test_bad_version_rejected():
    blob = bytearray(ct.write_container({"a": np.zeros(1, dtype=np.float32)}))
    blob[8] = 99
    with pytest.raises(ct.ContainerError, match="version"):
        ct.read_container(bytes(blob))


def test_truncation_reports_byte_offset():
    blob = ct.write_container({"a": np.arange(10, dtype=np.float32)})
    with pytest.raises(ct.ContainerError) as err:
        ct.read_container(blob[:-12])
    assert err.value.offset is not None
    assert "offset" in str(err.value)


def test_text_blob_round_trip():
    text = '{"labels": {"0": "torso"}, "note": "špeciál"}'
    assert ct.unpack_text(ct.pack_text(text)) == text


def test_json_blob_round_trip():
    obj = {"kind": "avatar", "nested": {"values": [1, 2.5, "x"]}}
    assert ct.unpack_json(ct.pack_json(obj)) == obj
