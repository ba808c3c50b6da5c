import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ensemble_repeater import analytic as an
from ensemble_repeater import chain
from ensemble_repeater.chain import SimConfig, run_trials, simulate_chain, trial_rng
from ensemble_repeater.params import RepeaterParams

SMALL = RepeaterParams(L_total=250.0, n=2)  # 4 links of 62.5 km


def expected_max_geometric(p, copies=2):
    """E[max of `copies` iid Geom(p) on {1, 2, ...}] = sum_m 1 - (1 - (1-p)^m)^copies."""
    m = np.arange(0, 200_000)
    return float(np.sum(1.0 - (1.0 - (1.0 - p) ** m) ** copies))


def naive_chain(rng, n, P0, Pi, Ppr, u, lat):
    # straightforward recursive reference: attempt by attempt, no shortcuts
    def level(k):
        if k == 0:
            return u * rng.geometric(P0)
        t = 0.0
        while True:
            t += max(level(k - 1), level(k - 1)) + lat
            if rng.random() < Pi:
                return t

    t = 0.0
    while True:
        t += level(n)
        if rng.random() < Ppr:
            return t


def z_score(stats, expected):
    return abs(stats.mean - expected) / stats.stderr


def test_max_geometric_helper():
    p = 0.3
    assert expected_max_geometric(p) == pytest.approx(2 / p - 1 / (1 - (1 - p) ** 2), rel=1e-12)


# --- draws -------------------------------------------------------------------------

def test_geometric_mean_and_tiny_probability():
    rng = np.random.default_rng(0)
    draws = chain._geometric(rng, 0.05, 200_000)
    assert draws.min() >= 1
    assert draws.mean() == pytest.approx(20.0, rel=0.01)
    tiny = chain._geometric(rng, 1e-21, 1000)
    assert np.all(np.isfinite(tiny)) and tiny.mean() == pytest.approx(1e21, rel=0.1)
    assert np.all(chain._geometric(rng, 1.0, 5) == 1)
    with pytest.raises(ValueError):
        chain._geometric(rng, 0.0)


def test_charging_time_exact_mean():
    r, p, eta_d = 1e6, 1e-2, 0.9
    stats = run_trials(SimConfig(RepeaterParams(p=p, eta_d=eta_d, r=r), trials=50_000, seed=3, mode="charging"))
    exact = expected_max_geometric(p * eta_d, 4) / r
    assert z_score(stats, exact) < 4
    # the harmonic-sum closed form is the small-probability limit of the same quantity
    assert exact == pytest.approx(an.charging_time(r, p, eta_d), rel=0.01)


def test_source_time_full_restart_mean(working_point):
    params = working_point.replace(alpha2=0.5, r=1e6, p=0.05)
    ps = an.source_success_prob(params.alpha2, params.eta)
    exact = expected_max_geometric(params.p * params.eta_d, 4) / params.r / ps
    stats = run_trials(SimConfig(params, trials=20_000, seed=5, mode="source"))
    assert z_score(stats, exact) < 4


def test_source_time_paper_factor(working_point):
    stats = run_trials(SimConfig(working_point, trials=20_000, seed=6, mode="source", restart_policy="paper-factor"))
    assert z_score(stats, an.source_prep_time(working_point)) < 4


def test_restart_policies_differ_by_three_halves(working_point):
    # a single full-restart source takes ~T_eta/P_s; the calibrated policy charges 3/2 of that
    params = working_point.replace(r=1e8)
    full = run_trials(SimConfig(params, trials=20_000, seed=19, mode="source"))
    calibrated = run_trials(SimConfig(params, trials=20_000, seed=20, mode="source", restart_policy="paper-factor"))
    assert calibrated.mean / full.mean == pytest.approx(1.5, rel=0.05)


def test_max_of_two_source_times_reproduces_three_halves(working_point):
    # waiting for sources at both ends of a link costs ~1.5x a single source wait
    rng = np.random.default_rng(11)
    single = working_point.replace(r=1e8)
    left = chain.sample_source_time(single, rng, size=20_000)
    right = chain.sample_source_time(single, rng, size=20_000)
    t_eta = an.charging_time(single.r, single.p, single.eta_d)
    ps = an.source_success_prob(single.alpha2, single.eta)
    assert np.maximum(left, right).mean() == pytest.approx(1.5 * t_eta / ps, rel=0.05)


def test_unknown_policy_rejected(working_point):
    with pytest.raises(ValueError, match="policy"):
        chain.sample_source_time(working_point, np.random.default_rng(0), "sometimes")


# --- link and chain means ----------------------------------------------------

def test_link_mean_wald(working_point):
    P0 = an.chain_probabilities(working_point)[0]
    stats = run_trials(SimConfig(working_point, trials=100_000, seed=1, mode="link"))
    assert z_score(stats, working_point.link_delay / P0) < 3
    assert stats.attempts[0] / stats.successes[0] == pytest.approx(1 / P0, rel=0.02)


def test_simulate_link_api(working_point):
    t = chain.simulate_link(working_point, trial_rng(0, 0))
    assert t > 0 and (t / working_point.link_delay) == pytest.approx(round(t / working_point.link_delay))
    assert chain.simulate_link(working_point, trial_rng(0, 0), P0=1.0) == working_point.link_delay


@pytest.mark.parametrize("n", [0, 1, 2, 3])
def test_certain_success_is_deterministic(n):
    params = RepeaterParams(L_total=1000.0, n=n)
    t = simulate_chain(params, trial_rng(0, 0), probabilities=(1.0, 1.0, 1.0))
    assert t == pytest.approx((n + 1) * params.link_delay, rel=1e-12)
    t0 = simulate_chain(params, trial_rng(0, 0), probabilities=(1.0, 1.0, 1.0), swap_latency="none")
    assert t0 == pytest.approx(params.link_delay, rel=1e-12)


def test_n0_mean():
    params = RepeaterParams(L_total=100.0, n=0)
    P0, _, Ppr = 0.05, 1.0, 0.4
    stats = run_trials(SimConfig(params, trials=20_000, seed=2, probabilities=(P0, 0.5, Ppr)))
    assert z_score(stats, params.link_delay / (P0 * Ppr)) < 4


@pytest.mark.parametrize("latency", ["link", "none", 1e-3])
def test_n1_exact_mean(latency):
    params = SMALL.replace(n=1)
    P0, Pi, Ppr = 0.02, 0.3, 0.6
    u = params.link_delay
    lat = {"link": u, "none": 0.0}.get(latency, latency)
    exact = (u * expected_max_geometric(P0) + lat) / (Pi * Ppr)
    stats = run_trials(SimConfig(params, trials=20_000, seed=4, probabilities=(P0, Pi, Ppr), swap_latency=latency))
    assert z_score(stats, exact) < 4


def test_fast_path_matches_generic(monkeypatch):
    cfg = SimConfig(SMALL, trials=5000, seed=8, probabilities=(0.05, 0.4, 0.7))
    fast = run_trials(cfg)
    monkeypatch.setattr(chain, "FAST_PATH_MIN_P0", 2.0)
    slow = run_trials(cfg)
    assert fast.mean != slow.mean  # different code paths, different draws
    pooled = math.hypot(fast.stderr, slow.stderr)
    assert abs(fast.mean - slow.mean) / pooled < 4


def test_against_naive_reference():
    P0, Pi, Ppr = 0.3, 0.5, 0.8
    u = SMALL.link_delay
    rng = np.random.default_rng(123)
    ref = np.array([naive_chain(rng, 2, P0, Pi, Ppr, u, u) for _ in range(20_000)])
    stats = run_trials(SimConfig(SMALL, trials=20_000, seed=9, probabilities=(P0, Pi, Ppr)))
    pooled = math.hypot(stats.stderr, ref.std(ddof=1) / math.sqrt(len(ref)))
    assert abs(stats.mean - ref.mean()) / pooled < 4


def test_source_prep_in_chain():
    params = RepeaterParams(L_total=100.0, n=0, include_source_prep=True, r=1e8)
    P0, Ppr = 0.2, 0.5
    t_src = 1.5 * an.charging_time(params.r, params.p, params.eta_d)
    ps = an.source_success_prob(params.alpha2, params.eta)
    per_cycle = params.link_delay + t_src * expected_max_geometric(ps)
    stats = run_trials(SimConfig(params, trials=5000, seed=10, probabilities=(P0, 1.0, Ppr),
                                 restart_policy="paper-factor"))
    assert z_score(stats, per_cycle / (P0 * Ppr)) < 4


def test_chain_tracks_eq3_at_working_point(working_point):
    for n in (0, 1):
        p = working_point.replace(n=n)
        stats = run_trials(SimConfig(p, trials=2000, seed=12))
        assert stats.mean / an.total_time_product(p) == pytest.approx(1.0, abs=0.06)


# --- bookkeeping and reproducibility -------------------------------------------

def test_counters_consistent():
    stats = run_trials(SimConfig(SMALL, trials=500, seed=13, probabilities=(0.1, 0.5, 0.6)))
    n = SMALL.n
    for k in range(1, n + 1):
        assert stats.successes[k - 1] == 2 * stats.attempts[k]
    assert stats.postselection[1] == stats.trials
    assert stats.successes[n] == stats.postselection[0]
    assert stats.trials <= stats.postselection[0] <= stats.attempts[n]
    assert stats.successes[0] <= stats.attempts[0]


def test_counters_without_fast_path(monkeypatch):
    monkeypatch.setattr(chain, "FAST_PATH_MIN_P0", 2.0)
    _, c = simulate_chain(SMALL, trial_rng(1, 0), probabilities=(0.1, 0.5, 0.6), counters=True)
    assert c.successes[0] == 2 * c.attempts[1]
    assert c.successes[1] == 2 * c.attempts[2]


def test_same_seed_same_result():
    cfg = SimConfig(SMALL, trials=300, seed=14)
    a, b = run_trials(cfg, keep_samples=True), run_trials(cfg, keep_samples=True)
    np.testing.assert_array_equal(a.samples, b.samples)
    assert run_trials(SimConfig(SMALL, trials=300, seed=15)).mean != a.mean


def test_workers_do_not_change_results():
    cfg = SimConfig(SMALL, trials=400, seed=16)
    one = run_trials(cfg, workers=1, keep_samples=True)
    two = run_trials(cfg, workers=2, keep_samples=True)
    np.testing.assert_array_equal(one.samples, two.samples)
    assert one.attempts == two.attempts and one.successes == two.successes


def test_stderr_scaling():
    a = run_trials(SimConfig(SMALL, trials=2000, seed=17))
    b = run_trials(SimConfig(SMALL, trials=8000, seed=18))
    assert a.stderr / b.stderr == pytest.approx(2.0, rel=0.25)
    assert run_trials(SimConfig(SMALL, trials=1, seed=1)).stderr is None


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(0, 3))
def test_samples_positive_and_multiple_of_cycle(seed, n):
    params = RepeaterParams(L_total=400.0, n=n)
    t = simulate_chain(params, trial_rng(seed, 0), probabilities=(0.3, 0.6, 0.7))
    cycles = t / params.link_delay
    assert cycles >= n + 1
    assert cycles == pytest.approx(round(cycles), abs=1e-6)


@pytest.mark.parametrize("kwargs", [dict(trials=0), dict(seed=-1), dict(mode="all"), dict(restart_policy="x")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(SMALL, **kwargs)


def test_bad_overrides_rejected():
    with pytest.raises(ValueError):
        simulate_chain(SMALL, trial_rng(0, 0), probabilities=(0.5, 0.0, 1.0))
    with pytest.raises(ValueError):
        simulate_chain(SMALL, trial_rng(0, 0), swap_latency=-1.0)
