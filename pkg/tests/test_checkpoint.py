"""Binary checkpoint container."""

import struct

import numpy as np
import pytest

from orbitnet.checkpoint import (MAGIC, CheckpointError, load_checkpoint,
                                 save_checkpoint)


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, rng):
        arrays = {
            "layers.0.groups.0.A": rng.standard_normal((36, 36)),
            "layers.0.lam": rng.random(20),
            "bn.0.initialized": np.asarray(1.0),
            "head.bias": np.zeros(10),
        }
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, arrays)
        loaded = load_checkpoint(path)
        assert set(loaded) == set(arrays)
        for name, arr in arrays.items():
            np.testing.assert_array_equal(loaded[name], arr)
            assert loaded[name].dtype == np.float64

    def test_float32_payload_upcast(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, {"w": np.ones(3, dtype=np.float32)})
        assert load_checkpoint(path)["w"].dtype == np.float64

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "v9.ckpt"
        path.write_bytes(MAGIC + struct.pack("<II", 9, 0))
        with pytest.raises(CheckpointError, match="version 9"):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, tmp_path, rng):
        path = tmp_path / "t.ckpt"
        save_checkpoint(path, {"w": rng.standard_normal(100)})
        blob = path.read_bytes()
        path.write_bytes(blob[:-40])
        with pytest.raises(CheckpointError, match="past end"):
            load_checkpoint(path)

    def test_trailing_garbage_rejected(self, tmp_path, rng):
        path = tmp_path / "g.ckpt"
        save_checkpoint(path, {"w": rng.standard_normal(4)})
        path.write_bytes(path.read_bytes() + b"extra")
        with pytest.raises(CheckpointError, match="trailing"):
            load_checkpoint(path)
