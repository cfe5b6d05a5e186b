import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from bilingual_gan.checkpoint import MAGIC, Checkpoint, CheckpointError, from_bytes, load, save, to_bytes
from bilingual_gan.nn import ModelConfig, Seq2Seq

arrays = hnp.arrays(
    np.float64,
    hnp.array_shapes(min_dims=0, max_dims=3, max_side=4),
    elements=st.floats(allow_nan=True, allow_infinity=True, width=64),
)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.text("abc.", min_size=1, max_size=6), arrays, max_size=4))
def test_round_trip_bit_exact(tensors):
    ck = Checkpoint(tensors, {"a": 1, "b": [0.1, None]}, 3, {"state": [1, 2]}, {"kind": "nmt"})
    back = from_bytes(to_bytes(ck))
    assert list(back.tensors) == list(tensors)
    for k, v in tensors.items():
        assert back.tensors[k].shape == v.shape
        assert back.tensors[k].tobytes() == v.tobytes()
    assert (back.config, back.epoch, back.rng_state, back.extra) == (ck.config, 3, ck.rng_state, ck.extra)


def test_model_round_trip_and_rng(tmp_path):
    m = Seq2Seq(ModelConfig((9, 8), emb_dim=4, hidden=3, attn_dim=2, max_len=5), seed=1)
    rng = np.random.default_rng(7)
    save(tmp_path / "m.ckpt", Checkpoint(m.state_dict(), rng_state=rng.bit_generator.state))
    ck = load(tmp_path / "m.ckpt")
    m2 = Seq2Seq(m.cfg, seed=2)
    m2.load_state_dict(ck.tensors)
    assert all(np.array_equal(m.params[k].data, m2.params[k].data) for k in m.params)
    restored = np.random.default_rng()
    restored.bit_generator.state = ck.rng_state
    assert restored.random() == rng.random()


def test_serialization_is_deterministic():
    ck = Checkpoint({"x": np.arange(3.0)}, {"b": 1, "a": 2})
    assert to_bytes(ck) == to_bytes(Checkpoint({"x": np.arange(3.0)}, {"a": 2, "b": 1}))


def test_rejects_bad_magic_version_and_truncation():
    buf = to_bytes(Checkpoint({"x": np.arange(4.0)}))
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"XXXXXXXX" + buf[8:])
    bumped = MAGIC + struct.pack("<I", 2) + buf[12:]
    with pytest.raises(CheckpointError, match="version 2"):
        from_bytes(bumped)
    with pytest.raises(CheckpointError, match="truncated"):
        from_bytes(buf[:-8])


def test_shape_mismatch_rejected():
    m = Seq2Seq(ModelConfig((9, 8), emb_dim=4, hidden=3, attn_dim=2, max_len=5), seed=1)
    other = Seq2Seq(ModelConfig((9, 8), emb_dim=4, hidden=5, attn_dim=2, max_len=5), seed=1)
    with pytest.raises(CheckpointError, match="shape mismatch"):
        m.load_state_dict(other.state_dict())
