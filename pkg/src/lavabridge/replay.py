"""Ring replay buffer with a freezable demonstration prefix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import Action, State

__all__ = ["Transition", "ReplayBuffer", "prefill_demo"]


@dataclass(frozen=True)
class Transition:
    """One environment step. ``done`` marks true environment termination
    (goal or lava), never timeouts, so bootstrapping stays horizon-agnostic."""

    state: State
    action: Action
    reward: float
    next_state: State
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO storage over flat float64 arrays.

    The first ``frozen_prefix_len`` rows are exempt from eviction: online
    insertions cycle through the remaining slots oldest-first. Sampling is
    uniform over everything currently stored, frozen rows included.
    """

    def __init__(self, capacity: int, state_dim: int = 4, act_dim: int = 2):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim), dtype=np.float64)
        self.actions = np.zeros((capacity, act_dim), dtype=np.float64)
        self.rewards = np.zeros(capacity, dtype=np.float64)
        self.next_states = np.zeros((capacity, state_dim), dtype=np.float64)
        self.dones = np.zeros(capacity, dtype=np.float64)
        self.frozen_prefix_len = 0
        self._size = 0
        self._pos = 0  # next online slot

    def __len__(self) -> int:
        return self._size

    @property
    def size(self) -> int:
        return self._size

    @property
    def online_size(self) -> int:
        """Insertions currently stored outside the frozen prefix."""
        return self._size - self.frozen_prefix_len

    def add(self, tr: Transition) -> None:
        self.add_arrays(
            tr.state.as_array(), tr.action.force.x, tr.action.force.y,
            tr.reward, tr.next_state.as_array(), tr.done,
        )

    def add_arrays(self, s, ax: float, ay: float, r: float, s2, done: bool) -> None:
        if self.frozen_prefix_len >= self.capacity:
            raise ValueError("buffer is fully frozen; no online slots left")
        i = self._pos
        self.states[i] = s
        self.actions[i, 0] = ax
        self.actions[i, 1] = ay
        self.rewards[i] = r
        self.next_states[i] = s2
        self.dones[i] = 1.0 if done else 0.0
        self._pos += 1
        if self._pos >= self.capacity:
            self._pos = self.frozen_prefix_len  # wrap into the evictable region
        if self._size < self.capacity:
            self._size += 1

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size > self._size:
            raise ValueError(f"batch size {batch_size} exceeds buffer size {self._size}")
        return rng.integers(self._size, size=batch_size)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = self.sample_indices(batch_size, rng)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
            self.dones[idx],
        )


def prefill_demo(buffer: ReplayBuffer, transitions) -> None:
    """Load demonstration transitions into the frozen prefix.

    Must be called on a fresh buffer; the prefix is never evicted afterwards.
    """
    transitions = list(transitions)
    if buffer.size != 0 or buffer.frozen_prefix_len != 0:
        raise ValueError("prefill requires an empty buffer")
    if len(transitions) > buffer.capacity:
        raise ValueError(
            f"{len(transitions)} demo transitions exceed capacity {buffer.capacity}"
        )
    for tr in transitions:
        buffer.add(tr)
    buffer.frozen_prefix_len = len(transitions)
    buffer._pos = len(transitions) if len(transitions) < buffer.capacity else 0
