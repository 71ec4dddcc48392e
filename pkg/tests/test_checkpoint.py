import struct

import numpy as np
import pytest

from gaitgraph.checkpoint import CheckpointError, read_checkpoint, write_checkpoint


def test_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"a": rng.normal(size=(3, 4)).astype(np.float32), "b/c": rng.normal(size=(2, 1, 5)),
               "scalar": np.array(1.5)}
    header = {"model": {"k": 9}, "note": "x"}
    p = write_checkpoint(tmp_path / "m.ckpt", header, tensors)
    h, t = read_checkpoint(p)
    assert h == header and list(t) == list(tensors)
    for k in tensors:
        assert t[k].dtype == tensors[k].dtype
        np.testing.assert_array_equal(t[k], tensors[k])
    assert not (tmp_path / "m.ckpt.tmp").exists()


def test_byte_layout(tmp_path):
    p = write_checkpoint(tmp_path / "m.ckpt", {}, {"w": np.arange(2, dtype=np.float64)})
    raw = p.read_bytes()
    assert raw[:4] == b"GGCK"
    version, hlen = struct.unpack("<II", raw[4:12])
    assert version == 1 and raw[12:12 + hlen] == b"{}"
    pos = 12 + hlen
    assert struct.unpack("<I", raw[pos:pos + 4]) == (1,)
    pos += 4
    assert struct.unpack("<I", raw[pos:pos + 4]) == (1,) and raw[pos + 4:pos + 5] == b"w"
    pos += 5
    assert struct.unpack("<II", raw[pos:pos + 8]) == (1, 2)
    assert raw[pos + 8] == 2
    assert np.frombuffer(raw[pos + 9:], dtype="<f8").tolist() == [0.0, 1.0]


def test_corrupt_files_rejected(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"NOPE")
    with pytest.raises(CheckpointError):
        read_checkpoint(p)
    good = write_checkpoint(tmp_path / "g.ckpt", {}, {"w": np.zeros(10)})
    p.write_bytes(good.read_bytes()[:-7])
    with pytest.raises(CheckpointError):
        read_checkpoint(p)
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "missing.ckpt")
    with pytest.raises(CheckpointError):
        write_checkpoint(tmp_path / "i.ckpt", {}, {"w": np.zeros(2, dtype=np.int64)})
