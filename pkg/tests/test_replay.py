import hashlib

import numpy as np
import pytest

from lavabridge.env import Action, State, Vec2
from lavabridge.replay import ReplayBuffer, Transition, prefill_demo


def mk_transition(tag: float, done=False):
    s = State(Vec2(tag, tag), Vec2(0.0, 0.0))
    s2 = State(Vec2(tag + 0.5, tag), Vec2(0.1, 0.0))
    return Transition(s, Action(Vec2(0.1, -0.1)), 0.0, s2, done)


def stored_tags(buf):
    return sorted(buf.states[: buf.size, 0].tolist())


class TestRingBehavior:
    def test_fifo_eviction_exact(self):
        buf = ReplayBuffer(capacity=8)
        for i in range(13):  # 5 past capacity: tags 0..4 evicted exactly
            buf.add(mk_transition(float(i)))
        assert buf.size == 8
        assert stored_tags(buf) == [float(i) for i in range(5, 13)]

    def test_size_tracks_until_capacity(self):
        buf = ReplayBuffer(capacity=4)
        for i in range(3):
            buf.add(mk_transition(float(i)))
        assert len(buf) == 3
        buf.add(mk_transition(3.0))
        buf.add(mk_transition(4.0))
        assert len(buf) == 4

    def test_done_flag_roundtrip(self):
        buf = ReplayBuffer(capacity=4)
        buf.add(mk_transition(1.0, done=True))
        buf.add(mk_transition(2.0, done=False))
        assert buf.dones[0] == 1.0
        assert buf.dones[1] == 0.0


class TestFrozenPrefix:
    def test_prefill_sets_prefix(self):
        buf = ReplayBuffer(capacity=10)
        prefill_demo(buf, [mk_transition(float(i), done=(i == 4)) for i in range(5)])
        assert buf.frozen_prefix_len == 5
        assert buf.size == 5
        assert buf.online_size == 0

    def test_prefill_empty_is_noop(self):
        buf = ReplayBuffer(capacity=10)
        prefill_demo(buf, [])
        assert buf.frozen_prefix_len == 0
        assert buf.size == 0

    def test_prefill_overflow_rejected(self):
        buf = ReplayBuffer(capacity=3)
        with pytest.raises(ValueError, match="capacity"):
            prefill_demo(buf, [mk_transition(float(i)) for i in range(4)])

    def test_prefill_requires_fresh_buffer(self):
        buf = ReplayBuffer(capacity=4)
        buf.add(mk_transition(0.0))
        with pytest.raises(ValueError, match="empty"):
            prefill_demo(buf, [mk_transition(1.0)])

    def test_eviction_cycles_online_region_only(self):
        buf = ReplayBuffer(capacity=6)
        prefill_demo(buf, [mk_transition(100.0 + i) for i in range(2)])
        for i in range(9):  # online region holds 4; the last 4 survive
            buf.add(mk_transition(float(i)))
        assert stored_tags(buf) == [5.0, 6.0, 7.0, 8.0, 100.0, 101.0]

    def test_prefix_bitwise_stable_under_stress(self):
        buf = ReplayBuffer(capacity=512)
        prefill_demo(buf, [mk_transition(1000.0 + i, done=(i % 7 == 0)) for i in range(50)])

        def prefix_digest():
            h = hashlib.sha256()
            n = buf.frozen_prefix_len
            for arr in (buf.states, buf.actions, buf.rewards, buf.next_states, buf.dones):
                h.update(arr[:n].tobytes())
            return h.hexdigest()

        before = prefix_digest()
        rng = np.random.default_rng(0)
        s = rng.uniform(0, 10, size=4)
        for i in range(1_000_000):
            buf.add_arrays(s, 0.1, -0.1, 0.0, s, False)
        assert prefix_digest() == before
        assert buf.size == 512

    def test_fully_frozen_buffer_rejects_online_adds(self):
        buf = ReplayBuffer(capacity=3)
        prefill_demo(buf, [mk_transition(float(i)) for i in range(3)])
        with pytest.raises(ValueError, match="frozen"):
            buf.add(mk_transition(9.0))


class TestSampling:
    def test_batch_larger_than_size_rejected(self):
        buf = ReplayBuffer(capacity=8)
        buf.add(mk_transition(0.0))
        with pytest.raises(ValueError, match="batch"):
            buf.sample(2, np.random.default_rng(0))

    def test_sample_shapes(self):
        buf = ReplayBuffer(capacity=8)
        for i in range(6):
            buf.add(mk_transition(float(i)))
        s, a, r, s2, done = buf.sample(4, np.random.default_rng(1))
        assert s.shape == (4, 4) and a.shape == (4, 2)
        assert r.shape == (4,) and s2.shape == (4, 4) and done.shape == (4,)

    def test_sampling_covers_frozen_and_online(self):
        buf = ReplayBuffer(capacity=16)
        prefill_demo(buf, [mk_transition(100.0)] * 4)
        for i in range(4):
            buf.add(mk_transition(0.0))
        rng = np.random.default_rng(2)
        seen = set()
        for _ in range(200):
            s, *_ = buf.sample(2, rng)
            seen.update(s[:, 0].tolist())
        assert seen == {100.0, 0.0}
