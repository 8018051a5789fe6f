"""Counter-based random draws keyed on (seed, trajectory, step).

Every draw is read from numpy's Philox bit generator at a counter position
computed from the trajectory index, so the values seen by trajectory ``i`` at
step ``k`` never depend on how trajectories are split across workers.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1

# stream tags keep independent drivers apart
TAG_THETA = 1
TAG_V = 2
TAG_W = 3
TAG_XI = 4
TAG_INIT = 5
TAG_BATCH = 6
TAG_BATCH2 = 7
TAG_BATCH3 = 8
TAG_MISC = 9


def _raw(seed: int, tag: int, step: int, sub: int, lo: int, hi: int, words: int) -> np.ndarray:
    """Raw uint64 words for trajectories lo..hi-1, ``words`` per trajectory (multiple of 4)."""
    bg = np.random.Philox(
        key=[seed & _MASK64, 0],
        counter=[lo * (words // 4), step & _MASK64, tag & _MASK64, sub & _MASK64],
    )
    return bg.random_raw((hi - lo) * words).reshape(hi - lo, words)


def _to_unit(raw: np.ndarray) -> np.ndarray:
    # 53 random bits, strictly inside (0, 1)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


class Stream:
    """Draws for a contiguous block of trajectories at one (step, sub-step).

    Successive calls to the sampling methods use fresh sub-streams, so a
    sampler may call ``normal`` twice and get independent values.
    """

    def __init__(self, seed: int, step: int, lo: int, hi: int, tag: int = TAG_XI, sub: int = 0):
        self.seed = int(seed)
        self.step = int(step)
        self.lo = int(lo)
        self.hi = int(hi)
        self.tag = int(tag)
        self.sub = int(sub)
        self._calls = 0

    @property
    def n(self) -> int:
        return self.hi - self.lo

    def _next_tag(self) -> int:
        self._calls += 1
        return (self.tag << 16) + self._calls

    def uniform(self, count: int) -> np.ndarray:
        words = 4 * ((count + 3) // 4)
        raw = _raw(self.seed, self._next_tag(), self.step, self.sub, self.lo, self.hi, words)
        return _to_unit(raw[:, :count])

    def normal(self, count: int) -> np.ndarray:
        return normals(self.seed, self._next_tag(), self.step, self.lo, self.hi, count, self.sub)

    def integers(self, high: int, count: int) -> np.ndarray:
        u = self.uniform(count)
        return np.minimum((u * high).astype(np.int64), high - 1)

    def signs(self, count: int) -> np.ndarray:
        return np.where(self.uniform(count) < 0.5, -1.0, 1.0)


def normals(seed: int, tag: int, step: int, lo: int, hi: int, count: int, sub: int = 0) -> np.ndarray:
    """Standard normals of shape (hi-lo, count) via Box-Muller on fixed word positions."""
    pairs = (count + 1) // 2
    words = 4 * ((2 * pairs + 3) // 4)
    u = _to_unit(_raw(seed, tag, step, sub, lo, hi, words))
    u1 = u[:, 0 : 2 * pairs : 2]
    u2 = u[:, 1 : 2 * pairs : 2]
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = 2.0 * np.pi * u2
    out = np.empty((hi - lo, 2 * pairs))
    out[:, 0::2] = rad * np.cos(ang)
    out[:, 1::2] = rad * np.sin(ang)
    return out[:, :count]


def chunks(n: int, threads: int) -> list[tuple[int, int]]:
    threads = max(1, min(int(threads), n)) if n > 0 else 1
    edges = np.linspace(0, n, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
