"""Exact and Monte Carlo checks for the posterior entropy estimator.

Exact checks enumerate the one-step successors of a state; Monte Carlo
checks compare a sample mean against a closed form at a fixed number of
standard errors.  Every Monte Carlo routine takes a :class:`RandomStream`
and derives one child stream per trial (or per batch of draws), so results
depend only on ``(seed, stream_id)`` and never on the worker count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, TypeVar

import numpy as np

from .partition import (
    DEFAULT_MAX_TAIL,
    PartitionCounts,
    PartitionPath,
    RankedMasses,
    entropy_of_masses,
    plugin_entropy,
    simulate_partition,
)
from .pdp import (
    DEFAULT_TAIL_EPS,
    PdpParams,
    crp_sample,
    crp_transition,
    expected_tail_entropy,
    feasible_tail_eps,
    kernel_law,
    posterior_entropy,
    posterior_sample_batch,
    prior_mean_entropy,
    stick_breaking_batch,
    stick_breaking_draw,
    successor_posterior_entropies,
)
from .rng import RandomStream

THREADS_ENV = "PARTITION_ENTROPY_THREADS"

SIGMAS = 4.0
MARTINGALE_TOL = 1e-9
INCREASING_TOL = 1e-12
VARIANCE_TOL = 1e-10

# sticks per draw allowed when relaxing tail_eps for Monte Carlo means
MC_STICK_BUDGET = 1000
# convergence paths need tail <= DEFAULT_MAX_TAIL, so they get a larger budget
PATH_STICK_BUDGET = 50_000
BATCH = 1000

T = TypeVar("T")


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    value = int(raw)
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def map_ordered(fn: Callable[[int], T], count: int, threads: int | None = None) -> list[T]:
    """``[fn(0), .., fn(count - 1)]``, possibly evaluated on several threads."""
    threads = worker_count() if threads is None else threads
    if threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=min(threads, count)) as pool:
        return list(pool.map(fn, range(count)))


class MonteCarloCheck(NamedTuple):
    """A Monte Carlo mean, its standard error and the value it should match."""

    mc_mean: float
    std_err: float
    expected: float

    @property
    def z(self) -> float:
        diff = self.mc_mean - self.expected
        if self.std_err == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.std_err

    def within(self, sigmas: float = SIGMAS) -> bool:
        return abs(self.z) < sigmas


def _mean_and_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), math.nan
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


# ---------------------------------------------------------------------------
# exact checks


def _one_step(params: PdpParams, pi: PartitionCounts):
    # kernel, posterior entropy at every successor, posterior entropy now
    q = crp_transition(params, pi).probs
    return q, successor_posterior_entropies(params, pi), posterior_entropy(params, pi).value


def martingale_residual(params: PdpParams, pi: PartitionCounts) -> float:
    """``E[H_{n+1} | pi] - H_n`` by enumerating the successors of ``pi``."""
    q, nxt, now = _one_step(params, pi)
    return float(q @ nxt) - now


def increasing_process_step(params: PdpParams, pi: PartitionCounts) -> float:
    """Increment of the compensator of the squared posterior-entropy martingale."""
    q, nxt, now = _one_step(params, pi)
    return float(q @ (nxt * nxt)) - now * now


def conditional_variance(params: PdpParams, pi: PartitionCounts) -> float:
    """``Var[H_{n+1} | pi]`` computed directly from the successor values."""
    q, nxt, _ = _one_step(params, pi)
    centred = nxt - q @ nxt
    return float(q @ (centred * centred))


@dataclass(frozen=True)
class MartingaleScan:
    """Exact checks over random states drawn by the restaurant sampler."""

    params: PdpParams
    states: list[PartitionCounts]
    residuals: np.ndarray
    steps: np.ndarray
    variances: np.ndarray

    @property
    def max_abs_residual(self) -> float:
        return float(np.abs(self.residuals).max())

    @property
    def min_step(self) -> float:
        return float(self.steps.min())

    @property
    def max_variance_mismatch(self) -> float:
        return float(np.abs(self.steps - self.variances).max())

    def passed(self) -> bool:
        return (
            self.max_abs_residual < MARTINGALE_TOL
            and self.min_step > -INCREASING_TOL
            and self.max_variance_mismatch < VARIANCE_TOL
        )


def martingale_scan(
    params: PdpParams, states: int, rng: RandomStream, max_n: int = 200
) -> MartingaleScan:
    """Check the martingale identity and the increasing process on random states.

    State i has a sample size uniform on 1..max_n and is drawn by
    :func:`crp_sample` from ``rng.derive(i)``.
    """
    drawn = []
    for i in range(states):
        srng = rng.derive(i)
        n = 1 + int(srng.integers(max_n))
        drawn.append(crp_sample(params, n, srng))
    res, steps, var = np.empty(states), np.empty(states), np.empty(states)
    for i, pi in enumerate(drawn):
        q, nxt, now = _one_step(params, pi)
        mean = float(q @ nxt)
        centred = nxt - mean
        res[i] = mean - now
        steps[i] = float(q @ (nxt * nxt)) - now * now
        var[i] = float(q @ (centred * centred))
    return MartingaleScan(params, drawn, res, steps, var)


# ---------------------------------------------------------------------------
# convergence along one growing sample path


class Checkpoint(NamedTuple):
    n: int
    plugin: float
    posterior: float
    truth: float
    abs_err_plugin: float
    abs_err_posterior: float
    gap: float


@dataclass(frozen=True)
class EstimateTrace:
    """Plug-in and posterior estimates along one nested sample path."""

    trial: int
    checkpoints: list[Checkpoint]

    def __post_init__(self):
        ns = [c.n for c in self.checkpoints]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("checkpoint sample sizes must be strictly increasing")


def _checkpoint(n: int, plugin: float, posterior: float, truth: float) -> Checkpoint:
    return Checkpoint(
        n, plugin, posterior, truth, abs(plugin - truth), abs(posterior - truth), abs(posterior - plugin)
    )


METRICS = ("err_plugin", "err_posterior", "gap")


@dataclass(frozen=True)
class CheckpointSummary:
    n: int
    mean: dict[str, float]
    median: dict[str, float]
    std_err: dict[str, float]


@dataclass(frozen=True)
class ConvergenceResult:
    traces: list[EstimateTrace]
    summary: list[CheckpointSummary]
    tail_eps: float
    has_posterior: bool = True

    def means(self, metric: str) -> list[float]:
        return [s.mean[metric] for s in self.summary]

    def strictly_decreasing(self, metric: str) -> bool:
        m = self.means(metric)
        return all(b < a for a, b in zip(m, m[1:]))

    def rows(self):
        """Rows ``(n, trial, plugin, posterior, truth, abs_err_plugin, abs_err_posterior, gap)``."""
        for c_idx in range(len(self.summary)):
            for tr in self.traces:
                c = tr.checkpoints[c_idx]
                yield (c.n, tr.trial, c.plugin, c.posterior, c.truth,
                       c.abs_err_plugin, c.abs_err_posterior, c.gap)

    def summary_dict(self) -> dict:
        def clean(x):
            return None if x is None or not math.isfinite(x) else x

        out = {}
        for s in self.summary:
            entry = {}
            for m in METRICS:
                entry[f"mean_{m}"] = clean(s.mean[m])
                entry[f"median_{m}"] = clean(s.median[m])
                entry[f"std_err_{m}"] = clean(s.std_err[m])
            out[str(s.n)] = entry
        return out


def _summarise(traces: list[EstimateTrace], checkpoints: Sequence[int]) -> list[CheckpointSummary]:
    out = []
    for i, n in enumerate(checkpoints):
        cols = {
            "err_plugin": [t.checkpoints[i].abs_err_plugin for t in traces],
            "err_posterior": [t.checkpoints[i].abs_err_posterior for t in traces],
            "gap": [t.checkpoints[i].gap for t in traces],
        }
        mean, median, se = {}, {}, {}
        for m, v in cols.items():
            mean[m], se[m] = _mean_and_se(v)
            median[m] = float(np.median(v))
        out.append(CheckpointSummary(int(n), mean, median, se))
    return out


def _check_checkpoints(checkpoints: Sequence[int]) -> list[int]:
    cps = [int(c) for c in checkpoints]
    if not cps or cps[0] < 1 or any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError("checkpoints must be a nonempty strictly increasing list of positive integers")
    return cps


def path_tail_eps(params: PdpParams, tail_eps: float = DEFAULT_TAIL_EPS) -> float:
    """Truncation used for convergence paths; must not exceed the sampler's tail limit."""
    eps = feasible_tail_eps(params, tail_eps, PATH_STICK_BUDGET)
    if eps > DEFAULT_MAX_TAIL:
        raise ValueError(
            f"alpha={params.alpha}, theta={params.theta}: the stick remainder does not fall below "
            f"{DEFAULT_MAX_TAIL:g} within {PATH_STICK_BUDGET} sticks; convergence paths need a lighter tail"
        )
    return eps


def convergence_experiment(
    params: PdpParams,
    checkpoints: Sequence[int],
    trials: int,
    rng: RandomStream,
    tail_eps: float = DEFAULT_TAIL_EPS,
    threads: int | None = None,
) -> ConvergenceResult:
    """Track plug-in and posterior estimates along growing sample paths.

    Trial i draws masses by stick breaking and one nested sample path from
    them, both from ``rng.derive(i)``.  The truth is the entropy of the drawn
    sticks plus the expected entropy of the unbroken remainder.
    """
    cps = _check_checkpoints(checkpoints)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    eps = path_tail_eps(params, tail_eps)

    def one(i: int) -> EstimateTrace:
        trng = rng.derive(i)
        draw = stick_breaking_draw(params, eps, trng)
        truth = entropy_of_masses(draw.masses) + expected_tail_entropy(
            params, draw.masses, draw.sticks_drawn
        )
        path = PartitionPath(draw.masses, trng)
        out = []
        for n in cps:
            pi = path.grow(n - path.n)
            out.append(_checkpoint(n, plugin_entropy(pi), posterior_entropy(params, pi).value, truth))
        return EstimateTrace(i, out)

    traces = map_ordered(one, trials, threads)
    return ConvergenceResult(traces, _summarise(traces, cps), eps)


def plugin_convergence_experiment(
    masses: Sequence[RankedMasses],
    checkpoints: Sequence[int],
    trials: int,
    rng: RandomStream,
    threads: int | None = None,
) -> ConvergenceResult:
    """Plug-in convergence for user-supplied masses; trial i uses ``masses[i % len(masses)]``.

    No closed-form posterior exists for a general prior, so the posterior
    columns are NaN.
    """
    cps = _check_checkpoints(checkpoints)
    if not masses:
        raise ValueError("need at least one RankedMasses")
    if trials < 1:
        raise ValueError("trials must be >= 1")

    def one(i: int) -> EstimateTrace:
        s = masses[i % len(masses)]
        truth = entropy_of_masses(s)
        path = PartitionPath(s, rng.derive(i))
        out = []
        for n in cps:
            pi = path.grow(n - path.n)
            out.append(_checkpoint(n, plugin_entropy(pi), math.nan, truth))
        return EstimateTrace(i, out)

    traces = map_ordered(one, trials, threads)
    return ConvergenceResult(traces, _summarise(traces, cps), 0.0, has_posterior=False)


# ---------------------------------------------------------------------------
# Monte Carlo means against closed forms


def _batched(draw_batch: Callable[[int, RandomStream], list], trials: int, rng: RandomStream, threads):
    sizes = [min(BATCH, trials - lo) for lo in range(0, trials, BATCH)]
    parts = map_ordered(lambda b: draw_batch(sizes[b], rng.derive(b)), len(sizes), threads)
    return [x for part in parts for x in part]


def mc_tail_eps(params: PdpParams, tail_eps: float = DEFAULT_TAIL_EPS) -> float:
    """Truncation for Monte Carlo entropy means (unbiased after the tail correction)."""
    return feasible_tail_eps(params, tail_eps, MC_STICK_BUDGET)


def prior_mean_check(
    params: PdpParams,
    trials: int,
    rng: RandomStream,
    tail_eps: float = DEFAULT_TAIL_EPS,
    threads: int | None = None,
) -> MonteCarloCheck:
    """Mean tail-corrected entropy of stick-breaking draws vs the closed-form prior mean."""
    if trials < 100:
        raise ValueError("prior_mean_check needs at least 100 trials")
    eps = mc_tail_eps(params, tail_eps)

    def batch(size, brng):
        return [
            entropy_of_masses(d.masses) + expected_tail_entropy(params, d.masses, d.sticks_drawn)
            for d in stick_breaking_batch(params, size, eps, brng)
        ]

    mean, se = _mean_and_se(_batched(batch, trials, rng, threads))
    return MonteCarloCheck(mean, se, prior_mean_entropy(params))


def posterior_agreement_check(
    params: PdpParams,
    pi: PartitionCounts,
    trials: int,
    rng: RandomStream,
    tail_eps: float = DEFAULT_TAIL_EPS,
    threads: int | None = None,
) -> MonteCarloCheck:
    """Mean tail-corrected entropy of posterior draws vs the digamma closed form."""
    if pi.n < 1:
        raise ValueError("posterior_agreement_check needs n >= 1")
    if trials < 100:
        raise ValueError("posterior_agreement_check needs at least 100 trials")
    eps = mc_tail_eps(params.shifted(pi.k), tail_eps)

    def batch(size, brng):
        return [
            entropy_of_masses(d.masses) + d.expected_tail_entropy()
            for d in posterior_sample_batch(params, pi, size, eps, brng)
        ]

    mean, se = _mean_and_se(_batched(batch, trials, rng, threads))
    return MonteCarloCheck(mean, se, posterior_entropy(params, pi).value)


def plugin_bias_check(
    s: RankedMasses, n: int, trials: int, rng: RandomStream, threads: int | None = None
) -> MonteCarloCheck:
    """Mean plug-in entropy of independent n-samples from fixed masses vs their entropy."""
    if s.tail != 0:
        raise ValueError("plugin_bias_check needs masses without a tail")
    values = map_ordered(lambda i: plugin_entropy(simulate_partition(s, n, rng.derive(i))), trials, threads)
    mean, se = _mean_and_se(values)
    if all(v == values[0] for v in values):
        se = 0.0
    return MonteCarloCheck(mean, se, entropy_of_masses(s))


def new_class_at_two_check(
    params: PdpParams,
    trials: int,
    rng: RandomStream,
    tail_eps: float = 1e-2,
    threads: int | None = None,
) -> MonteCarloCheck:
    """Frequency of two classes after two draws via stick breaking plus uniform sampling.

    The reference is ``(theta + alpha) / (theta + 1)`` from the predictive
    rule.  Pooling the tail into one pseudo-class biases the frequency by at
    most ``tail_eps**2``.
    """
    exact = (params.theta + params.alpha) / (params.theta + 1.0)

    def batch(size, brng):
        draws = stick_breaking_batch(params, size, tail_eps, brng)
        return [simulate_partition(d.masses, 2, brng, max_tail=tail_eps).k == 2 for d in draws]

    hits = _batched(batch, trials, rng, threads)
    freq = float(np.mean(hits))
    return MonteCarloCheck(freq, math.sqrt(exact * (1.0 - exact) / trials), exact)


def crp_law_check(
    params: PdpParams, n: int, trials: int, rng: RandomStream, threads: int | None = None
) -> dict[tuple[int, ...], MonteCarloCheck]:
    """Empirical law of the count multiset under :func:`crp_sample` vs the kernel product."""
    exact: dict[tuple[int, ...], float] = {}
    for state, p in kernel_law(params, n).items():
        key = state.multiset()
        exact[key] = exact.get(key, 0.0) + p

    def batch(size, brng):
        return [crp_sample(params, n, brng).multiset() for _ in range(size)]

    seen = _batched(batch, trials, rng, threads)
    freq: dict[tuple[int, ...], int] = {}
    for key in seen:
        freq[key] = freq.get(key, 0) + 1
    out = {}
    for key, p in sorted(exact.items(), reverse=True):
        out[key] = MonteCarloCheck(freq.get(key, 0) / trials, math.sqrt(p * (1.0 - p) / trials), p)
    extra = set(freq) - set(exact)
    if extra:
        raise AssertionError(f"sampler produced states outside the kernel support: {sorted(extra)}")
    return out
