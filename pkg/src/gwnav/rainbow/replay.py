"""Prioritized replay memory with protected demonstration transitions,
plus the n-step transition assembler shared by online training, transition
generation and demo ingestion."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    obs: object                 # Observation (4 shared uint8 frames)
    action: int
    reward: float               # n-step discounted return
    next_obs: object            # observation n steps ahead (or at episode end)
    done: bool
    is_demo: bool


class SumMinTree:
    """Array-backed segment tree over priorities with vectorized batched
    prefix-sum descent (used for stratified proportional sampling)."""

    def __init__(self, capacity: int):
        self.n = 1
        while self.n < capacity:
            self.n *= 2
        self.sums = np.zeros(2 * self.n, dtype=np.float64)
        self.mins = np.full(2 * self.n, np.inf, dtype=np.float64)
        self.depth = self.n.bit_length() - 1

    def set(self, idx: np.ndarray, values: np.ndarray) -> None:
        i = np.asarray(idx, dtype=np.int64) + self.n
        self.sums[i] = values
        self.mins[i] = values
        parents = np.unique(i // 2)
        while parents[0] >= 1:
            left, right = 2 * parents, 2 * parents + 1
            self.sums[parents] = self.sums[left] + self.sums[right]
            self.mins[parents] = np.minimum(self.mins[left], self.mins[right])
            if parents[0] == 1:
                break
            parents = np.unique(parents // 2)

    @property
    def total(self) -> float:
        return float(self.sums[1])

    @property
    def min_value(self) -> float:
        return float(self.mins[1])

    def values(self, idx: np.ndarray) -> np.ndarray:
        return self.sums[np.asarray(idx, dtype=np.int64) + self.n]

    def find(self, mass: np.ndarray) -> np.ndarray:
        """Leaf indices i such that prefix_sum(i) <= mass < prefix_sum(i+1)."""
        u = np.asarray(mass, dtype=np.float64).copy()
        i = np.ones(len(u), dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * i
            ls = self.sums[left]
            go_left = u < ls
            i = np.where(go_left, left, left + 1)
            u = np.where(go_left, u, u - ls)
        return i - self.n


class PrioritizedReplay:
    """Proportional PER (sampling probability ~ priority^alpha, fixed beta).

    Demonstration transitions occupy a protected prefix and are never evicted;
    ring eviction applies to the online region only. Demos must therefore be
    pushed before any online transition.
    """

    def __init__(self, capacity: int, alpha: float, beta: float, seed: int = 0):
        self.capacity = capacity
        self.alpha = alpha
        self.beta = beta
        self.data = np.empty(capacity, dtype=object)
        self.tree = SumMinTree(capacity)
        self.n_demo = 0
        self.size = 0
        self._cursor = 0
        self.max_priority = 1.0
        self.rng = np.random.Generator(np.random.PCG64(seed))

    def __len__(self) -> int:
        return self.size

    def push(self, transition: Transition) -> int:
        if transition.is_demo:
            if self.size != self.n_demo:
                raise RuntimeError("demo transitions must be pushed before online ones")
            if self.n_demo >= self.capacity:
                raise RuntimeError("replay capacity exhausted by demos")
            idx = self.n_demo
            self.n_demo += 1
            self.size += 1
        else:
            ring = self.capacity - self.n_demo
            if ring <= 0:
                raise RuntimeError("no online capacity left")
            idx = self.n_demo + self._cursor
            self._cursor = (self._cursor + 1) % ring
            self.size = max(self.size, idx + 1)
        self.data[idx] = transition
        self.tree.set(np.array([idx]), np.array([self.max_priority ** self.alpha]))
        return idx

    def sample(self, batch_size: int):
        """Stratified proportional sample.

        Returns (transitions, indices, is_weights); weights are normalized by
        the maximum weight over the buffer.
        """
        if self.size == 0:
            raise RuntimeError("sample from empty replay")
        total = self.tree.total
        bounds = np.linspace(0.0, total, batch_size + 1)
        u = self.rng.uniform(bounds[:-1], bounds[1:])
        u = np.minimum(u, np.nextafter(total, 0.0))
        idx = self.tree.find(u)
        idx = np.minimum(idx, self.size - 1)
        probs = self.tree.values(idx) / total
        weights = (self.size * probs) ** (-self.beta)
        p_min = self.tree.min_value / total
        weights = weights / ((self.size * p_min) ** (-self.beta))
        return [self.data[i] for i in idx], idx, weights.astype(np.float32)

    def update_priorities(self, idx: np.ndarray, priorities: np.ndarray) -> None:
        priorities = np.asarray(priorities, dtype=np.float64)
        if np.any(priorities <= 0):
            raise ValueError("priorities must be > 0")
        self.max_priority = max(self.max_priority, float(priorities.max()))
        self.tree.set(np.asarray(idx), priorities ** self.alpha)

    def demo_count(self) -> int:
        return self.n_demo


class NStepAssembler:
    """Folds per-step experience into n-step transitions.

    Push one (obs, action, reward, next_obs, done, is_demo) per environment
    step; a list of completed transitions is returned (empty during the first
    n-1 steps). On `done`, the tail is flushed with truncated horizons, so an
    episode of T steps always yields exactly T transitions.
    """

    def __init__(self, n_step: int, gamma: float):
        self.n = n_step
        self.gamma = gamma
        self.buf: deque = deque()

    def push(self, obs, action, reward, next_obs, done, is_demo=False) -> list[Transition]:
        self.buf.append((obs, action, reward))
        out = []
        if len(self.buf) == self.n:
            out.append(self._make(next_obs, done))
            self.buf.popleft()
        if done:
            while self.buf:
                out.append(self._make(next_obs, True))
                self.buf.popleft()
            self.buf.clear()
        return [Transition(o, a, r, no, d, is_demo) for (o, a, r, no, d) in out]

    def _make(self, next_obs, done):
        ret = 0.0
        for k, (_, _, r) in enumerate(self.buf):
            ret += (self.gamma ** k) * r
        obs0, a0, _ = self.buf[0]
        return (obs0, a0, ret, next_obs, done)

    def reset(self) -> None:
        self.buf.clear()
