import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partition_entropy import verify
from partition_entropy.partition import PartitionCounts, RankedMasses, successors
from partition_entropy.pdp import PdpParams, crp_transition, posterior_entropy
from partition_entropy.rng import RandomStream
from partition_entropy.verify import (
    EstimateTrace,
    MonteCarloCheck,
    conditional_variance,
    convergence_experiment,
    increasing_process_step,
    map_ordered,
    martingale_residual,
    martingale_scan,
    path_tail_eps,
    plugin_bias_check,
    plugin_convergence_experiment,
    posterior_agreement_check,
    prior_mean_check,
    worker_count,
)


@st.composite
def params_and_state(draw):
    alpha = draw(st.sampled_from([0.0, 0.25, 0.5, 0.75, 0.99]))
    theta = draw(st.floats(min_value=-alpha + 1e-3, max_value=100.0))
    counts = draw(st.lists(st.integers(min_value=1, max_value=500), min_size=1, max_size=25))
    return PdpParams(alpha, theta), PartitionCounts(tuple(counts))


def slow_residual(params, pi):
    # straight enumeration through the public pieces
    q = crp_transition(params, pi).probs
    nxt = [posterior_entropy(params, s).value for s in successors(pi)]
    return math.fsum(float(p) * h for p, h in zip(q, nxt)) - posterior_entropy(params, pi).value


# ----------------------------
# exact checks
# ----------------------------


def test_residual_at_empty_state():
    assert abs(martingale_residual(PdpParams(0.0, 1.0), PartitionCounts())) < 1e-12


@pytest.mark.parametrize("alpha, theta, counts", [(0.3, 2.0, (3, 1)), (0.5, 0.5, (10, 5, 1))])
def test_residual_examples(alpha, theta, counts):
    params, pi = PdpParams(alpha, theta), PartitionCounts(counts)
    assert abs(martingale_residual(params, pi)) < 1e-9
    assert abs(slow_residual(params, pi)) < 1e-9


def test_increasing_process_examples():
    assert abs(increasing_process_step(PdpParams(0.0, 1.0), PartitionCounts())) < 1e-12
    assert increasing_process_step(PdpParams(0.3, 2.0), PartitionCounts((3, 1))) >= -1e-12


@settings(max_examples=300, deadline=None)
@given(params_and_state())
def test_martingale_identity_property(ps):
    params, pi = ps
    assert abs(martingale_residual(params, pi)) < 1e-9


@settings(max_examples=300, deadline=None)
@given(params_and_state())
def test_increasing_process_equals_conditional_variance(ps):
    params, pi = ps
    step = increasing_process_step(params, pi)
    assert step > -1e-12
    assert abs(step - conditional_variance(params, pi)) < 1e-10


def test_martingale_scan_small_grid():
    for a in (0.0, 0.5):
        for t in (0.1, 10.0):
            scan = martingale_scan(PdpParams(a, t), 100, RandomStream(3))
            assert scan.passed()
            assert len(scan.states) == 100
            assert all(1 <= s.n <= 200 for s in scan.states)


def test_martingale_scan_reproducible():
    a = martingale_scan(PdpParams(0.25, 1.0), 50, RandomStream(9))
    b = martingale_scan(PdpParams(0.25, 1.0), 50, RandomStream(9))
    assert a.states == b.states and np.array_equal(a.residuals, b.residuals)


# ----------------------------
# Monte Carlo checks
# ----------------------------


def test_monte_carlo_check_z():
    assert MonteCarloCheck(1.1, 0.05, 1.0).z == pytest.approx(2.0)
    assert MonteCarloCheck(1.0, 0.0, 1.0).within()
    assert not MonteCarloCheck(1.1, 0.0, 1.0).within()


def test_prior_check_reports_finite_error():
    chk = prior_mean_check(PdpParams(0.3, 1.0), 500, RandomStream(1))
    assert chk.std_err > 0 and math.isfinite(chk.std_err)
    assert chk.within()


def test_checks_need_enough_trials():
    with pytest.raises(ValueError):
        prior_mean_check(PdpParams(0.0, 1.0), 50, RandomStream(1))
    with pytest.raises(ValueError):
        posterior_agreement_check(PdpParams(0.0, 1.0), PartitionCounts((1,)), 50, RandomStream(1))
    with pytest.raises(ValueError):
        posterior_agreement_check(PdpParams(0.0, 1.0), PartitionCounts(), 500, RandomStream(1))


def test_posterior_check_dirichlet_process_single_observation():
    chk = posterior_agreement_check(PdpParams(0.0, 1.0), PartitionCounts((1,)), 10_000, RandomStream(2))
    assert chk.expected == pytest.approx(1.0, abs=1e-14)
    assert chk.within()


def test_plugin_bias_is_downward():
    chk = plugin_bias_check(RankedMasses([0.5, 0.5]), 100, 10_000, RandomStream(4))
    assert chk.mc_mean <= math.log(2.0) + 4 * chk.std_err
    assert chk.mc_mean < math.log(2.0)


def test_plugin_bias_degenerate_masses():
    chk = plugin_bias_check(RankedMasses([1.0]), 50, 200, RandomStream(4))
    assert chk.mc_mean == 0.0 and chk.std_err == 0.0 and chk.expected == 0.0


def test_plugin_bias_vanishes_for_large_samples():
    chk = plugin_bias_check(RankedMasses([0.5, 0.5]), 100_000, 200, RandomStream(5))
    assert abs(chk.mc_mean - math.log(2.0)) < 0.001


def test_plugin_bias_rejects_tail():
    with pytest.raises(ValueError):
        plugin_bias_check(RankedMasses([0.9], 0.1), 10, 10, RandomStream(0))


# ----------------------------
# convergence
# ----------------------------


def test_convergence_dirichlet_process():
    res = convergence_experiment(PdpParams(0.0, 1.0), [100, 1000, 10_000], 200, RandomStream(11))
    assert res.strictly_decreasing("err_posterior")
    assert res.means("gap")[-1] < res.means("gap")[0]
    assert res.tail_eps == 1e-12


def test_convergence_trace_fields():
    res = convergence_experiment(PdpParams(0.3, 1.0), [10, 100], 3, RandomStream(1))
    for tr in res.traces:
        for c in tr.checkpoints:
            assert c.abs_err_plugin == abs(c.plugin - c.truth)
            assert c.abs_err_posterior == abs(c.posterior - c.truth)
            assert c.gap == abs(c.posterior - c.plugin)
    rows = list(res.rows())
    assert len(rows) == 6 and rows[0][:2] == (10, 0) and rows[3][:2] == (100, 0)
    summary = res.summary_dict()
    assert set(summary) == {"10", "100"}
    assert "mean_err_posterior" in summary["10"] and "std_err_gap" in summary["100"]


def test_single_trial_is_bit_identical():
    a = convergence_experiment(PdpParams(0.3, 1.0), [100, 1000], 1, RandomStream(42))
    b = convergence_experiment(PdpParams(0.3, 1.0), [100, 1000], 1, RandomStream(42))
    assert a.traces == b.traces
    assert math.isnan(a.summary[0].std_err["gap"])
    assert a.summary_dict()["100"]["std_err_gap"] is None


def test_convergence_independent_of_threads():
    args = (PdpParams(0.3, 1.0), [10, 100, 1000], 8, RandomStream(7))
    one = convergence_experiment(*args, threads=1)
    many = convergence_experiment(*args, threads=4)
    assert one.traces == many.traces


def test_convergence_rejects_bad_input():
    with pytest.raises(ValueError):
        convergence_experiment(PdpParams(0.0, 1.0), [100, 10], 2, RandomStream(0))
    with pytest.raises(ValueError):
        convergence_experiment(PdpParams(0.0, 1.0), [], 2, RandomStream(0))
    with pytest.raises(ValueError):
        convergence_experiment(PdpParams(0.0, 1.0), [10], 0, RandomStream(0))
    # heavy tail: no truncation below the sampler limit is reachable
    with pytest.raises(ValueError):
        path_tail_eps(PdpParams(0.5, 0.5))


def test_trace_requires_increasing_n():
    c = verify._checkpoint(10, 0.1, 0.2, 0.3)
    with pytest.raises(ValueError):
        EstimateTrace(0, [c, c])


def test_plugin_convergence_for_fixed_masses():
    masses = [RankedMasses([0.5, 0.3, 0.2]), RankedMasses(np.full(50, 0.02))]
    res = plugin_convergence_experiment(masses, [10, 100, 1000], 100, RandomStream(3))
    assert not res.has_posterior
    assert res.strictly_decreasing("err_plugin")
    assert all(math.isnan(c.posterior) for tr in res.traces for c in tr.checkpoints)
    assert res.summary_dict()["10"]["mean_gap"] is None


# ----------------------------
# threading
# ----------------------------


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(verify.THREADS_ENV, "3")
    assert worker_count() == 3
    monkeypatch.setenv(verify.THREADS_ENV, "0")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv(verify.THREADS_ENV)
    assert worker_count() >= 1


def test_map_ordered_keeps_order():
    assert map_ordered(lambda i: i * i, 50, threads=8) == [i * i for i in range(50)]
    assert map_ordered(lambda i: i, 0, threads=8) == []
