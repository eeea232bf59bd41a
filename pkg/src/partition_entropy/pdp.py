"""The two-parameter Poisson-Dirichlet family PD(alpha, theta).

Sequential (Chinese restaurant) and stick-breaking samplers, the prior and
posterior mean entropy in closed form, and the structured posterior sampler
that mixes a Dirichlet draw over the observed classes with a fresh
PD(alpha, theta + alpha k) for the unseen ones.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .partition import PartitionCounts, RankedMasses, TransitionDistribution, successors
from .rng import RandomStream
from .special_fn import digamma, log_gamma
from .variates import dirichlet_draw, log_beta_draw

DEFAULT_TAIL_EPS = 1e-12
MAX_STICKS = 10**6


@dataclass(frozen=True)
class PdpParams:
    """Discount ``alpha`` in [0, 1) and concentration ``theta`` > -alpha."""

    alpha: float
    theta: float

    def __post_init__(self):
        a, t = float(self.alpha), float(self.theta)
        if not (0.0 <= a < 1.0):
            raise ValueError(f"alpha must satisfy 0 <= alpha < 1, got {a}")
        if not (t > -a) or not math.isfinite(t):
            raise ValueError(f"theta must exceed -alpha (theta={t}, alpha={a})")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "theta", t)

    def shifted(self, k: int) -> "PdpParams":
        """Parameters of the unseen-class remainder after k classes: (alpha, theta + alpha k)."""
        return PdpParams(self.alpha, self.theta + self.alpha * k)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "theta": self.theta}

    @classmethod
    def from_dict(cls, data: dict) -> "PdpParams":
        return cls(data["alpha"], data["theta"])


class PosteriorEntropyParts(NamedTuple):
    """Posterior mean entropy with its two digamma sums kept for inspection."""

    a_term: float
    b_term: float
    value: float


# ---------------------------------------------------------------------------
# sequential construction


def crp_transition(params: PdpParams, pi: PartitionCounts) -> TransitionDistribution:
    """One-step law of the next state under the Pitman predictive rule."""
    if pi.n == 0:
        return TransitionDistribution(pi, np.ones(1))
    a, t = params.alpha, params.theta
    denom = t + pi.n
    probs = np.empty(pi.k + 1)
    probs[:-1] = (pi.as_array() - a) / denom
    probs[-1] = (t + a * pi.k) / denom
    return TransitionDistribution(pi, probs)


class _Uniforms:
    # block-buffered uniforms so the per-customer loop stays in Python scalars
    def __init__(self, rng: RandomStream, block: int):
        self.rng = rng
        self.block = max(block, 16)
        self.buf = rng.random(self.block).tolist()
        self.pos = 0

    def __call__(self) -> float:
        if self.pos == len(self.buf):
            self.buf = self.rng.random(self.block).tolist()
            self.pos = 0
        u = self.buf[self.pos]
        self.pos += 1
        return u


def crp_sample(params: PdpParams, n: int, rng: RandomStream) -> PartitionCounts:
    """Run the restaurant for n customers from the empty state."""
    if n < 1:
        raise ValueError("n must be a positive integer")
    a, t = params.alpha, params.theta
    uniform = _Uniforms(rng, 3 * n)
    counts: list[int] = []
    seats: list[int] = []  # table label of every seated customer
    for m in range(n):
        k = len(counts)
        if m == 0 or uniform() * (t + m) < t + a * k:
            counts.append(1)
            seats.append(k)
            continue
        # existing table with probability proportional to counts[j] - alpha:
        # pick a seated customer uniformly, keep their table w.p. 1 - alpha/counts[j]
        while True:
            j = seats[int(uniform() * m)]
            if a == 0.0 or uniform() * counts[j] >= a:
                break
        counts[j] += 1
        seats.append(j)
    return PartitionCounts(tuple(counts))


def kernel_law(params: PdpParams, n: int) -> dict[PartitionCounts, float]:
    """Exact law of the n-th state as the product of one-step kernels along all paths."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    law = {PartitionCounts(): 1.0}
    for _ in range(n):
        nxt: dict[PartitionCounts, float] = {}
        for state, p in law.items():
            for succ, q in crp_transition(params, state).items():
                nxt[succ] = nxt.get(succ, 0.0) + p * float(q)
        law = nxt
    return law


def log_eppf(params: PdpParams, pi: PartitionCounts) -> float:
    """Log probability of one particular set partition of {1..n} with these block sizes."""
    if pi.n == 0:
        return 0.0
    a, t = params.alpha, params.theta
    out = sum(math.log(t + i * a) for i in range(1, pi.k))
    out -= log_gamma(t + pi.n) - log_gamma(t + 1.0)
    lg1 = log_gamma(1.0 - a)
    out += sum(log_gamma(c - a) - lg1 for c in pi.counts)
    return out


def appearance_probability(params: PdpParams, pi: PartitionCounts) -> float:
    """Probability that the first n observations produce exactly these ordered counts.

    Sums the EPPF over the set partitions whose blocks, ordered by least
    element, have sizes ``pi.counts``.
    """
    log_ways = 0.0
    remaining = pi.n
    for c in pi.counts:
        log_ways += math.log(math.comb(remaining - 1, c - 1))
        remaining -= c
    return math.exp(log_ways + log_eppf(params, pi))


# ---------------------------------------------------------------------------
# stick breaking


@dataclass(frozen=True)
class StickBreakingDraw:
    """A truncated stick-breaking draw.

    ``size_biased`` keeps the sticks in generation order; ``masses`` holds the
    same weights ranked.  ``sticks_drawn`` is the number of sticks K.
    """

    masses: RankedMasses
    size_biased: np.ndarray
    sticks_drawn: int


_ROW_CHUNK = 1024


@functools.lru_cache(maxsize=256)
def typical_sticks(params: PdpParams, tail_eps: float, cap: int = MAX_STICKS) -> int:
    """Sticks needed for the expected log remainder to drop below log(tail_eps).

    Returns ``cap + 1`` when the target is not reached within ``cap`` sticks.
    """
    a, t = params.alpha, params.theta
    log_eps = math.log(tail_eps)
    acc, start, block = 0.0, 1, 256
    while start <= cap:
        j = np.arange(start, min(start + block, cap + 1), dtype=float)
        cum = acc + np.cumsum(digamma(t + a * j) - digamma(1.0 + t + a * (j - 1)))
        hit = np.flatnonzero(cum < log_eps)
        if hit.size:
            return int(start + hit[0])
        acc = cum[-1]
        start += j.size
        block *= 4
    return cap + 1


def _break_rows(params, rows, log_eps, rng, max_sticks):
    # log stick lengths (generation order) and final log remainder, per row
    a, t = params.alpha, params.theta
    log_rest = np.zeros(rows)
    final_rest = np.zeros(rows)
    active = np.arange(rows)
    segments: list[list[np.ndarray]] = [[] for _ in range(rows)]
    start = 1
    # first block covers the typical row; stragglers continue in doubling blocks
    first = max(16, int(1.25 * min(typical_sticks(params, math.exp(log_eps)), max_sticks)))
    block = first
    while active.size:
        if start > max_sticks:
            raise RuntimeError(
                f"stick breaking hit the {max_sticks}-stick cap before the remainder fell "
                f"below tail_eps={math.exp(log_eps):g}; loosen tail_eps for alpha={a}, theta={t}"
            )
        j = np.arange(start, min(start + block, max_sticks + 1), dtype=float)
        b_param = np.broadcast_to(t + a * j, (active.size, j.size))
        log_b, log_1mb = log_beta_draw(1.0 - a, b_param, rng)
        cum = log_rest[active, None] + np.cumsum(log_1mb, axis=1)
        before = np.concatenate((log_rest[active, None], cum[:, :-1]), axis=1)
        log_w = log_b + before
        hit = cum < log_eps
        finished = hit.any(axis=1)
        stop = np.where(finished, hit.argmax(axis=1) + 1, j.size)
        for i, row in enumerate(active):
            segments[row].append(log_w[i, : stop[i]])
        done_rows = active[finished]
        final_rest[done_rows] = cum[finished, stop[finished] - 1]
        log_rest[active] = cum[:, -1]
        active = active[~finished]
        start += j.size
        block = max(16, first // 4) if block == first else 2 * block
    return [np.concatenate(seg) for seg in segments], final_rest


def _as_draw(log_sticks: np.ndarray, log_rest: float) -> StickBreakingDraw:
    sticks = np.exp(log_sticks)
    tail = math.exp(log_rest)
    sticks *= (1.0 - tail) / np.sum(sticks)
    masses = RankedMasses(np.sort(sticks)[::-1], tail)
    return StickBreakingDraw(masses, sticks, sticks.size)


def stick_breaking_batch(
    params: PdpParams,
    count: int,
    tail_eps: float,
    rng: RandomStream,
    max_sticks: int = MAX_STICKS,
) -> list[StickBreakingDraw]:
    """``count`` independent truncated stick-breaking draws, vectorized across draws.

    Stick j is ``Beta(1 - alpha, theta + alpha j)``; each draw stops at the
    first stick leaving a remainder below ``tail_eps``.  Raises
    ``RuntimeError`` if ``max_sticks`` sticks do not get there.
    """
    if not 0.0 < tail_eps < 1.0:
        raise ValueError("tail_eps must lie in (0, 1)")
    log_eps = math.log(tail_eps)
    out: list[StickBreakingDraw] = []
    for lo in range(0, count, _ROW_CHUNK):
        rows = min(_ROW_CHUNK, count - lo)
        logs, rests = _break_rows(params, rows, log_eps, rng, max_sticks)
        out.extend(_as_draw(lw, lr) for lw, lr in zip(logs, rests))
    return out


def stick_breaking_draw(
    params: PdpParams,
    tail_eps: float,
    rng: RandomStream,
    max_sticks: int = MAX_STICKS,
) -> StickBreakingDraw:
    """A single truncated stick-breaking draw."""
    return stick_breaking_batch(params, 1, tail_eps, rng, max_sticks)[0]


def stick_breaking(params: PdpParams, tail_eps: float, rng: RandomStream) -> RankedMasses:
    """Ranked masses from a truncated stick-breaking draw (see :func:`stick_breaking_draw`)."""
    return stick_breaking_draw(params, tail_eps, rng).masses


def expected_log_remainder(params: PdpParams, sticks: int) -> float:
    """E log of the unbroken stick length after ``sticks`` breaks."""
    if sticks == 0:
        return 0.0
    a, t = params.alpha, params.theta
    j = np.arange(1, sticks + 1, dtype=float)
    # E log(1 - B) for B ~ Beta(p, q) is psi(q) - psi(p + q)
    return float(np.sum(digamma(t + a * j) - digamma(1.0 + t + a * (j - 1))))


def feasible_tail_eps(params: PdpParams, tail_eps: float, stick_budget: int) -> float:
    """Loosen ``tail_eps`` to what ``stick_budget`` sticks reach on the log-average.

    Heavy-tailed parameters (alpha near one) leave a remainder decaying like a
    small power of the stick count, so a fixed tiny target can be out of reach.
    """
    reachable = math.exp(expected_log_remainder(params, stick_budget))
    return min(max(tail_eps, reachable), 0.5)


def expected_tail_entropy(params: PdpParams, masses: RankedMasses, sticks_drawn: int) -> float:
    """Expected entropy carried by the unbroken remainder of a stick-breaking draw.

    After K sticks the remainder is ``tail`` times an independent
    PD(alpha, theta + alpha K), so its conditional mean entropy is
    ``tail * prior_mean(shifted) - tail * log(tail)``.
    """
    tail = masses.tail
    if tail <= 0.0:
        return 0.0
    if tail >= 1.0:
        raise ValueError("expected_tail_entropy needs tail < 1")
    return tail * prior_mean_entropy(params.shifted(sticks_drawn)) - tail * math.log(tail)


# ---------------------------------------------------------------------------
# entropy in closed form


def prior_mean_entropy(params: PdpParams) -> float:
    return digamma(params.theta + 1.0) - digamma(1.0 - params.alpha)


def _b_term(alpha: float, counts: np.ndarray) -> float:
    if counts.size == 0:
        return 0.0
    vals, mult = np.unique(counts, return_counts=True)
    x = vals - alpha
    return float(np.sum(mult * x * digamma(x + 1.0)))


def posterior_entropy(params: PdpParams, pi: PartitionCounts) -> PosteriorEntropyParts:
    """Posterior mean entropy given the observed class sizes.

    At the empty state this is the prior mean.  Requires ``theta + n > 0``.
    """
    a, t = params.alpha, params.theta
    n = pi.n
    if n == 0:
        if t <= 0:
            raise ValueError("posterior entropy of the empty state needs theta > 0")
        return PosteriorEntropyParts(t * digamma(1.0 - a), 0.0, prior_mean_entropy(params))
    a_term = (t + a * pi.k) * digamma(1.0 - a)
    b_term = _b_term(a, pi.as_array())
    value = digamma(t + n + 1.0) - (a_term + b_term) / (t + n)
    return PosteriorEntropyParts(a_term, b_term, value)


def successor_posterior_entropies(params: PdpParams, pi: PartitionCounts) -> np.ndarray:
    """Posterior entropy at every successor state, in :func:`successors` order.

    Equivalent to calling :func:`posterior_entropy` on each successor but
    O(k) overall: each successor changes one term of the digamma sum.
    """
    a, t = params.alpha, params.theta
    c = pi.as_array().astype(float)
    k = c.size
    n1 = pi.n + 1
    psi_1ma = digamma(1.0 - a)
    b = _b_term(a, pi.as_array())
    out = np.empty(k + 1)
    if k:
        x = c - a
        delta = (x + 1.0) * digamma(x + 2.0) - x * digamma(x + 1.0)
        out[:k] = -((t + a * k) * psi_1ma + (b + delta)) / (t + n1)
    out[k] = -((t + a * (k + 1)) * psi_1ma + b + (1.0 - a) * digamma(2.0 - a)) / (t + n1)
    return out + digamma(t + n1 + 1.0)


# ---------------------------------------------------------------------------
# posterior sampler


@dataclass(frozen=True)
class PosteriorDraw:
    """A posterior draw with the pieces needed for the tail correction.

    ``observed`` holds the Dirichlet weights of the seen classes in their
    original order, before ranking.
    """

    masses: RankedMasses
    remainder_params: PdpParams
    sticks_drawn: int
    observed: np.ndarray

    def expected_tail_entropy(self) -> float:
        return expected_tail_entropy(self.remainder_params, self.masses, self.sticks_drawn)


def posterior_sample_batch(
    params: PdpParams,
    pi: PartitionCounts,
    count: int,
    tail_eps: float,
    rng: RandomStream,
    max_sticks: int = MAX_STICKS,
) -> list[PosteriorDraw]:
    """``count`` independent draws of the masses given the observed counts ``pi``.

    The observed classes get ``(p_1..p_k, r) ~ Dirichlet(c_1 - alpha, ..,
    c_k - alpha, theta + alpha k)``; the leftover ``r`` is spread over a
    fresh PD(alpha, theta + alpha k) draw.
    """
    if pi.n == 0:
        raise ValueError("posterior_sample needs at least one observation")
    rest = params.shifted(pi.k)
    dir_params = np.append(pi.as_array() - params.alpha, rest.theta)
    p = dirichlet_draw(dir_params, rng, size=count)
    fresh = stick_breaking_batch(rest, count, tail_eps, rng, max_sticks=max_sticks)
    out = []
    for row, draw in zip(p, fresh):
        r = row[-1]
        weights = np.concatenate((row[:-1], r * draw.size_biased))
        tail = r * draw.masses.tail
        weights *= (1.0 - tail) / np.sum(weights)
        masses = RankedMasses(np.sort(weights)[::-1], tail)
        out.append(PosteriorDraw(masses, rest, draw.sticks_drawn, row[:-1]))
    return out


def posterior_sample_draw(
    params: PdpParams,
    pi: PartitionCounts,
    tail_eps: float,
    rng: RandomStream,
    max_sticks: int = MAX_STICKS,
) -> PosteriorDraw:
    return posterior_sample_batch(params, pi, 1, tail_eps, rng, max_sticks)[0]


def posterior_sample(
    params: PdpParams, pi: PartitionCounts, tail_eps: float, rng: RandomStream
) -> RankedMasses:
    return posterior_sample_draw(params, pi, tail_eps, rng).masses
