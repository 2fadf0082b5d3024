import numpy as np
import pytest

from lavabridge.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from lavabridge.learner import LearnerConfig, SACLearner


def test_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(0)
    nets = {
        "policy": [rng.standard_normal((4, 8)), rng.standard_normal(8)],
        "q1": [rng.standard_normal((6, 8)), rng.standard_normal(8), rng.standard_normal((8, 1))],
    }
    path = tmp_path / "ck.bin"
    save_checkpoint(path, nets)
    loaded = load_checkpoint(path)
    assert list(loaded) == ["policy", "q1"]
    for name in nets:
        for a, b in zip(nets[name], loaded[name]):
            assert a.dtype == np.float64 and b.dtype == np.float64
            assert np.array_equal(a, b)


def test_header_layout(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, {"p": [np.zeros((2, 3))]})
    blob = path.read_bytes()
    assert blob[:8] == b"LBCKPT01"
    # version 1, one network, name "p", one array of shape (2, 3)
    assert blob[8:12] == (1).to_bytes(4, "little")
    assert blob[12:16] == (1).to_bytes(4, "little")
    assert blob[16:18] == (1).to_bytes(2, "little")
    assert blob[18:19] == b"p"
    assert len(blob) == 19 + 4 + 1 + 8 + 2 * 3 * 8


def test_learner_networks_round_trip(tmp_path):
    cfg = LearnerConfig(hidden=(8, 8), batch_size=4, buffer_capacity=16)
    learner = SACLearner(cfg, init_rng=np.random.default_rng(1),
                         noise_rng=np.random.default_rng(2))
    path = tmp_path / "ck.bin"
    save_checkpoint(path, learner.named_networks())
    loaded = load_checkpoint(path)
    assert set(loaded) == {"policy", "q1", "q2", "q1_target", "q2_target"}
    for name, params in learner.named_networks().items():
        for a, b in zip(params, loaded[name]):
            assert np.array_equal(a, b)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "ck.bin"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_truncated_payload_rejected(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, {"p": [np.ones((4, 4))]})
    blob = path.read_bytes()
    path.write_bytes(blob[:-16])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_trailing_garbage_rejected(tmp_path):
    path = tmp_path / "ck.bin"
    save_checkpoint(path, {"p": [np.ones(3)]})
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)
