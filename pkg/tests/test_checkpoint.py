"""Binary weight checkpoints: round-trips, versioning, corruption handling."""

import hashlib

import numpy as np
import pytest

from deeptrack.numcore import (
    CHECKPOINT_MAGIC,
    ConfigurationError,
    Tensor,
    load_weights,
    save_weights,
)

HASH = hashlib.sha256(b"config").hexdigest()


def sample_state(rng, dtype=np.float64):
    params = {
        "enc.w": Tensor(rng.normal(size=(4, 2, 3)).astype(dtype)),
        "enc.b": Tensor(rng.normal(size=4).astype(dtype)),
        "head.w": Tensor(rng.normal(size=(2, 4)).astype(dtype)),
    }
    buffers = {"enc.bn.mean": rng.normal(size=4).astype(dtype),
               "enc.bn.var": np.abs(rng.normal(size=4)).astype(dtype)}
    return params, buffers


class TestRoundTrip:
    def test_values_and_names_survive(self, tmp_path):
        rng = np.random.default_rng(0)
        params, buffers = sample_state(rng)
        path = tmp_path / "weights.bin"
        save_weights(path, params, buffers, HASH)
        loaded = load_weights(path)
        assert loaded.config_hash == HASH
        assert set(loaded.params) == set(params)
        assert set(loaded.buffers) == set(buffers)
        for name, tensor in params.items():
            assert np.array_equal(loaded.params[name], tensor.data)
        for name, arr in buffers.items():
            assert np.array_equal(loaded.buffers[name], arr)

    def test_save_is_deterministic_bytes(self, tmp_path):
        rng = np.random.default_rng(1)
        params, buffers = sample_state(rng)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_weights(a, params, buffers, HASH)
        save_weights(b, dict(reversed(list(params.items()))), buffers, HASH)
        assert a.read_bytes() == b.read_bytes()

    def test_float32_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(2)
        params, buffers = sample_state(rng, dtype=np.float32)
        path = tmp_path / "w32.bin"
        save_weights(path, params, buffers, HASH)
        loaded = load_weights(path)
        for name, tensor in params.items():
            back = loaded.params[name].astype(np.float32)
            assert back.tobytes() == tensor.data.tobytes()

    def test_save_load_save_identical(self, tmp_path):
        rng = np.random.default_rng(3)
        params, buffers = sample_state(rng)
        first = tmp_path / "first.bin"
        second = tmp_path / "second.bin"
        save_weights(first, params, buffers, HASH)
        loaded = load_weights(first)
        save_weights(second, loaded.params, loaded.buffers, loaded.config_hash)
        assert first.read_bytes() == second.read_bytes()


class TestFormatChecks:
    def test_magic_present(self, tmp_path):
        path = tmp_path / "w.bin"
        save_weights(path, {}, {}, HASH)
        assert path.read_bytes().startswith(CHECKPOINT_MAGIC)

    def test_not_a_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"definitely not weights")
        with pytest.raises(ConfigurationError):
            load_weights(path)

    def test_unsupported_version_rejected(self, tmp_path):
        path = tmp_path / "w.bin"
        save_weights(path, {}, {}, HASH)
        blob = bytearray(path.read_bytes())
        blob[len(CHECKPOINT_MAGIC)] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(ConfigurationError, match="version"):
            load_weights(path)

    def test_truncated_file_rejected(self, tmp_path):
        rng = np.random.default_rng(4)
        params, buffers = sample_state(rng)
        path = tmp_path / "w.bin"
        save_weights(path, params, buffers, HASH)
        path.write_bytes(path.read_bytes()[:40])
        with pytest.raises((ConfigurationError, Exception)):
            load_weights(path)

    def test_bad_hash_string_rejected(self, tmp_path):
        with pytest.raises(ConfigurationError):
            save_weights(tmp_path / "w.bin", {}, {}, "abcd")
