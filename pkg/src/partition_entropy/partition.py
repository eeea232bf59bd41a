"""Partition states, ranked masses and the uniform-sampling construction.

A sample of size n taken from ranked masses ``s`` is summarised by its
class sizes listed in order of first appearance.  Those counts are a
sufficient statistic for every estimator in this package, so the full
label sequence is never stored.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .rng import RandomStream

TAIL = -1
"""Returned by :func:`sample_class` for a point in the unaccounted tail."""

SUM_TOL = 1e-12
DEFAULT_MAX_TAIL = 1e-9


@dataclass(frozen=True)
class PartitionCounts:
    """Class sizes in order of first appearance (the empty state is allowed)."""

    counts: tuple[int, ...] = ()

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 1 for c in counts):
            raise ValueError(f"class sizes must be >= 1, got {counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def k(self) -> int:
        return len(self.counts)

    def __len__(self):
        return len(self.counts)

    def __iter__(self):
        return iter(self.counts)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    def multiset(self) -> tuple[int, ...]:
        """Counts sorted decreasing; forgets the order of appearance."""
        return tuple(sorted(self.counts, reverse=True))

    def to_json(self) -> str:
        return json.dumps(list(self.counts))

    @classmethod
    def from_json(cls, text: str) -> "PartitionCounts":
        data = json.loads(text)
        if not isinstance(data, list):
            raise ValueError("PartitionCounts JSON must be an array of integers")
        return cls(tuple(data))


@dataclass(frozen=True)
class RankedMasses:
    """Decreasing nonnegative weights plus the mass lost to truncation.

    ``sum(weights) + tail`` must equal one to within ``SUM_TOL``.
    """

    weights: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        tail = float(self.tail)
        if w.size:
            if not (np.isfinite(w[0]) and w[-1] >= 0):
                raise ValueError("weights must be finite and nonnegative")
            if (w[1:] > w[:-1]).any():
                raise ValueError("weights must be sorted in decreasing order")
        if not (0.0 <= tail <= 1.0):
            raise ValueError(f"tail must lie in [0, 1], got {tail}")
        total = math.fsum(w.tolist()) + tail
        if not abs(total - 1.0) <= SUM_TOL:
            raise ValueError(f"weights + tail must sum to 1, got {total!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "tail", tail)

    @classmethod
    def from_unsorted(cls, weights, tail: float = 0.0) -> "RankedMasses":
        return cls(np.sort(np.asarray(weights, dtype=float))[::-1], tail)

    def __len__(self):
        return self.weights.size

    def to_dict(self) -> dict:
        return {"weights": [float(w) for w in self.weights], "tail": self.tail}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "RankedMasses":
        if not isinstance(data, dict) or "weights" not in data:
            raise ValueError('RankedMasses JSON must look like {"weights": [...], "tail": x}')
        return cls(data["weights"], data.get("tail", 0.0))

    @classmethod
    def from_json(cls, text: str) -> "RankedMasses":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class TransitionDistribution:
    """Law of the next state: ``probs[j]`` grows class j, ``probs[k]`` opens a new one.

    For the empty state there is a single outcome, the singleton ``(1,)``.
    """

    state: PartitionCounts
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.state.k + 1,):
            raise ValueError(f"expected {self.state.k + 1} probabilities, got {p.shape}")
        if np.any(p < 0) or abs(math.fsum(p.tolist()) - 1.0) > SUM_TOL:
            raise ValueError("transition probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)

    def successors(self) -> list[PartitionCounts]:
        return successors(self.state)

    def items(self):
        return zip(self.successors(), self.probs)


def successors(pi: PartitionCounts) -> list[PartitionCounts]:
    """All states reachable in one observation: each class grown, then a new class."""
    c = pi.counts
    out = [PartitionCounts(c[:j] + (c[j] + 1,) + c[j + 1:]) for j in range(len(c))]
    out.append(PartitionCounts(c + (1,)))
    return out


def plugin_entropy(pi: PartitionCounts) -> float:
    """Entropy (nats) of the empirical class frequencies ``counts / n``."""
    if pi.n == 0:
        raise ValueError("plug-in entropy needs at least one observation")
    p = pi.as_array() / pi.n
    return float(-np.sum(p * np.log(p))) + 0.0  # + 0.0 turns -0.0 into 0.0


def plugin_additive(pi: PartitionCounts, f: Callable[[float], float]) -> float:
    """``sum_i f(counts[i] / n)`` for an additive functional ``f``."""
    n = pi.n
    if n == 0:
        raise ValueError("plug-in estimate needs at least one observation")
    return math.fsum(f(c / n) for c in pi.counts)


def entropy_of_masses(s: RankedMasses) -> float:
    """Entropy of the listed weights only; the tail is left to the caller."""
    w = s.weights[s.weights > 0]
    return float(-np.sum(w * np.log(w))) + 0.0


def _lookup(cumulative: np.ndarray, tail: float, u):
    idx = np.searchsorted(cumulative, u, side="right")
    beyond = idx >= cumulative.size
    if tail > 0:
        return np.where(beyond, TAIL, idx)
    # float roundoff can leave the last cumulative sum a hair below 1
    return np.minimum(idx, cumulative.size - 1)


def sample_class(s: RankedMasses, u: float) -> int:
    """Index of the consecutive interval of length ``weights[i]`` holding ``u``.

    Returns :data:`TAIL` when ``u`` falls in the final tail segment.
    """
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    return int(_lookup(np.cumsum(s.weights), s.tail, u))


class PartitionPath:
    """One growing sample path drawn from fixed ranked masses.

    Each call to :meth:`grow` appends fresh uniforms to the same path, so the
    states seen at increasing sample sizes are nested.  Tail hits are pooled
    into a single pseudo-class.
    """

    def __init__(self, s: RankedMasses, rng: RandomStream, max_tail: float = DEFAULT_MAX_TAIL):
        if s.tail > max_tail:
            raise ValueError(
                f"tail mass {s.tail:.3g} exceeds {max_tail:.3g}; truncate the masses more finely"
            )
        self.masses = s
        self.rng = rng
        self._cumulative = np.cumsum(s.weights)
        self._labels: dict[int, int] = {}
        self._counts: list[int] = []

    @property
    def n(self) -> int:
        return sum(self._counts)

    @property
    def counts(self) -> PartitionCounts:
        return PartitionCounts(tuple(self._counts))

    def grow(self, m: int) -> PartitionCounts:
        if m < 0:
            raise ValueError("cannot grow a path by a negative number of draws")
        if m == 0:
            return self.counts
        u = self.rng.random(m)
        idx = _lookup(self._cumulative, self.masses.tail, u)
        cls, first, cnt = np.unique(idx, return_index=True, return_counts=True)
        for j in np.argsort(first, kind="stable"):
            key = int(cls[j])
            label = self._labels.get(key)
            if label is None:
                label = self._labels[key] = len(self._counts)
                self._counts.append(0)
            self._counts[label] += int(cnt[j])
        return self.counts


def simulate_partition(
    s: RankedMasses, n: int, rng: RandomStream, max_tail: float = DEFAULT_MAX_TAIL
) -> PartitionCounts:
    """Draw n uniforms, map each to its interval and relabel by first visit."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    return PartitionPath(s, rng, max_tail=max_tail).grow(n)
