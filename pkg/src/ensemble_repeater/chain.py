"""Monte Carlo simulation of the nested repeater chain.

Every stochastic wait is sampled on a counted-trials basis (integer numbers
of attempts times a cycle duration). A level-k pair is built by repeatedly
waiting for two independent level-(k-1) pairs and attempting a swap; a
failed swap discards both halves. The finished end-to-end pair is accepted
by post-selection, whose failure restarts the whole chain.

Each trial draws from its own random stream derived from ``(seed, trial
index)``, so results do not depend on how trials are split over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .params import RepeaterParams

RESTART_POLICIES = ("full-restart", "paper-factor")
MODES = ("chain", "link", "source", "charging")


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent random stream for trial ``index`` of a run seeded with ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


#: Below this link probability the level-1 shortcut would overflow int64 counts.
FAST_PATH_MIN_P0 = 1e-12


def _geometric(rng, p, size=None):
    """Number of Bernoulli(p) trials up to and including the first success.

    Inverse-CDF draw kept in float64 so that tiny ``p`` cannot overflow.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"success probability must lie in (0, 1], got {p!r}")
    if p == 1.0:
        return np.ones(size) if size is not None else 1.0
    m = np.ceil(np.log1p(-rng.random(size)) / math.log1p(-p))
    return np.maximum(m, 1.0)


def _negative_binomial(rng, n, p):
    # failures before n successes, elementwise; n may contain zeros
    n = np.asarray(n)
    out = np.zeros(n.shape, dtype=np.int64)
    if p >= 1.0:
        return out
    mask = n > 0
    if mask.any():
        out[mask] = rng.negative_binomial(n[mask], p)
    return out


def sample_charging_time(r, p, eta_d, rng, size=None):
    """Time until all four ensembles hold a heralded excitation.

    Each ensemble is retried independently at rate ``r`` with per-attempt
    success ``p*eta_d``; the wait is the largest of the four attempt counts
    divided by ``r``, drawn by inverting the CDF of the maximum,
    P(max <= m) = (1 - (1-q)^m)^4.
    """
    q = p * eta_d
    if not 0.0 < q <= 1.0:
        raise ValueError(f"per-attempt success p*eta_d must lie in (0, 1], got {q!r}")
    if q == 1.0:
        return np.full(size, 1.0 / r) if size is not None else 1.0 / r
    u = rng.random(size)
    m = np.ceil(np.log1p(-(u**0.25)) / math.log1p(-q))
    m = np.maximum(m, 1.0)
    return m / r


def sample_source_time(params: RepeaterParams, rng, policy="full-restart", size=None):
    """Time to prepare one heralded local pair.

    ``full-restart`` recharges all four ensembles after every failed partial
    readout, so the time is a geometric number of charging waits.
    ``paper-factor`` returns the geometric cycle count times 1.5 * T_eta,
    which reproduces the closed-form source time in expectation.
    """
    ps = analytic.source_success_prob(params.alpha2, params.eta)
    cycles = _geometric(rng, ps, size)
    if policy == "paper-factor":
        return cycles * 1.5 * analytic.charging_time(params.r, params.p, params.eta_d)
    if policy != "full-restart":
        raise ValueError(f"unknown restart policy {policy!r}; expected one of {RESTART_POLICIES}")
    cycles = np.atleast_1d(cycles)
    waits = sample_charging_time(params.r, params.p, params.eta_d, rng, int(cycles.sum()))
    totals = np.add.reduceat(waits, _offsets(cycles))
    return totals if size is not None else float(totals[0])


def _offsets(counts):
    return np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.int64)


def _segment_sum(values, counts):
    return np.add.reduceat(values, _offsets(counts)) if len(counts) else np.zeros(0)


def _binomial_count(rng, trials, p):
    if trials <= 0 or p <= 0.0:
        return 0
    if trials < 2**62:
        return int(rng.binomial(trials, p))
    # counts beyond int64 only occur for astronomically long runs; tally only
    draw = rng.normal(trials * p, math.sqrt(trials * p * (1.0 - p)))
    return int(min(max(round(draw), 0), trials))


@dataclass
class _Counters:
    attempts: list
    successes: list
    postselection: list = field(default_factory=lambda: [0, 0])


class _ChainSampler:
    """Samples completion times of one trial, level by level, with one generator."""

    def __init__(self, params, rng, probabilities, swap_latency, policy):
        self.params = params
        self.rng = rng
        self.P0, self.Pi, self.Ppr = probabilities
        self.delay = params.link_delay
        self.latency = swap_latency
        self.policy = policy
        self.counters = _Counters([0] * (params.n + 1), [0] * (params.n + 1))

    def _link_cycles(self, cycles):
        # duration of `cycles` link attempt cycles, one entry per group
        t = cycles * self.delay
        if self.params.include_source_prep:
            total = int(cycles.sum())
            left = sample_source_time(self.params, self.rng, self.policy, total)
            right = sample_source_time(self.params, self.rng, self.policy, total)
            t = t + _segment_sum(np.maximum(left, right), cycles)
        return t

    def links(self, size, p=None):
        """`size` independent link completion times (attempt success ``p``)."""
        p = self.P0 if p is None else p
        cycles = _geometric(self.rng, p, size)
        self.counters.attempts[0] += int(cycles.sum())
        return self._link_cycles(cycles)

    def _fast_level1(self, attempts):
        # exact max-of-two-geometrics decomposition: max = A + B*C with
        # A ~ Geom(1-(1-P0)^2), B ~ Bernoulli(2(1-P0)/(2-P0)), C ~ Geom(P0)
        P0, rng = self.P0, self.rng
        a = 1.0 - (1.0 - P0) ** 2
        b = 2.0 * (1.0 - P0) / (2.0 - P0)
        sum_a = attempts + _negative_binomial(rng, attempts, a)
        k = rng.binomial(attempts, b) if b > 0 else np.zeros_like(attempts)
        sum_c = k + _negative_binomial(rng, k, P0)
        self.counters.attempts[0] += int(2 * sum_a.sum() + sum_c.sum())
        self.counters.successes[0] += int(2 * attempts.sum())
        return (sum_a + sum_c) * self.delay + attempts * self.latency

    def level(self, k, size, p=None):
        """`size` independent completion times of a level-``k`` pair.

        Successes at level ``k`` are tallied by the caller.
        """
        if k == 0:
            return self.links(size, p)
        p = self.Pi if p is None else p
        attempts = _geometric(self.rng, p, size)
        self.counters.attempts[k] += int(attempts.sum())
        if k == 1 and not self.params.include_source_prep and self.P0 >= FAST_PATH_MIN_P0:
            return self._fast_level1(attempts.astype(np.int64))
        s = int(attempts.sum())
        halves = self.level(k - 1, 2 * s)
        self.counters.successes[k - 1] += 2 * s
        per_attempt = np.maximum(halves[:s], halves[s:]) + self.latency
        return _segment_sum(per_attempt, attempts)

    def chain(self) -> float:
        """One end-to-end distribution time including post-selection retries."""
        n, top_p = self.params.n, (self.Pi if self.params.n else self.P0)
        combined = top_p * self.Ppr
        if n == 0:
            t = self.links(1, combined)
        else:
            t = self.level(n, 1, combined)
        # recover how many top-level successes were rejected by post-selection
        attempts = self.counters.attempts[n]
        rejected_share = top_p * (1.0 - self.Ppr) / (1.0 - combined) if combined < 1.0 else 0.0
        passed_top = 1 + _binomial_count(self.rng, attempts - 1, rejected_share)
        self.counters.successes[n] += passed_top
        self.counters.postselection[0] += passed_top
        self.counters.postselection[1] += 1
        return float(t[0])


def _resolve_probabilities(params, probabilities):
    if probabilities is None:
        return analytic.chain_probabilities(params)
    probs = tuple(float(x) for x in probabilities)
    if len(probs) != 3 or not all(0.0 < x <= 1.0 for x in probs):
        raise ValueError(f"probabilities must be three values (P0, Pi, Ppr) in (0, 1], got {probabilities!r}")
    return probs


def _resolve_latency(params, swap_latency):
    if swap_latency is None or swap_latency == "link":
        return params.link_delay
    if swap_latency == "none":
        return 0.0
    latency = float(swap_latency)
    if latency < 0:
        raise ValueError("swap latency must be non-negative")
    return latency


def simulate_link(params: RepeaterParams, rng, P0=None, policy="full-restart") -> float:
    """Time to establish one elementary link (geometric number of attempt cycles)."""
    sampler = _ChainSampler(params, rng, _resolve_probabilities(params, None) if P0 is None
                            else (P0, 1.0, 1.0), 0.0, policy)
    return float(sampler.links(1)[0])


def simulate_chain(params: RepeaterParams, rng, probabilities=None, swap_latency=None,
                   policy="full-restart", counters=False):
    """One end-to-end distribution time for the nested chain.

    Parameters
    ----------
    probabilities : (P0, Pi, Ppr), optional
        Override the analytic link, swap and post-selection probabilities.
    swap_latency : {"link", "none"} or float, optional
        Duration added to every swap attempt; "link" (default) is L0/c.
    counters : bool
        Also return per-level ``(attempts, successes)`` tallies.
    """
    sampler = _ChainSampler(params, rng, _resolve_probabilities(params, probabilities),
                            _resolve_latency(params, swap_latency), policy)
    t = sampler.chain()
    return (t, sampler.counters) if counters else t


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo run configuration.

    ``mode`` selects what a trial samples: the full ``chain``, a single
    ``link``, one ``source`` preparation or one ``charging`` wait.
    """

    params: RepeaterParams
    trials: int = 10_000
    seed: int = 42
    restart_policy: str = "full-restart"
    probabilities: tuple | None = None
    swap_latency: object = "link"
    mode: str = "chain"

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.restart_policy not in RESTART_POLICIES:
            raise ValueError(f"restart_policy must be one of {RESTART_POLICIES}, got {self.restart_policy!r}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class SimStats:
    """Summary of a Monte Carlo run.

    ``stderr`` is ``None`` for a single trial. ``attempts[k]`` and
    ``successes[k]`` tally link (k=0) and swap (k>=1) operations; for the
    chain mode ``successes[k-1] == 2 * attempts[k]`` and the post-selection
    tallies end with exactly ``trials`` successes.
    """

    mean: float
    stderr: float | None
    trials: int
    seed: int
    attempts: tuple = ()
    successes: tuple = ()
    postselection: tuple = ()
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)


def _run_chunk(args):
    config, start, stop = args
    p = config.params
    times = np.empty(stop - start)
    attempts = [0] * (p.n + 1)
    successes = [0] * (p.n + 1)
    post = [0, 0]
    probs = _resolve_probabilities(p, config.probabilities)
    latency = _resolve_latency(p, config.swap_latency)
    for j, i in enumerate(range(start, stop)):
        rng = trial_rng(config.seed, i)
        if config.mode == "charging":
            times[j] = sample_charging_time(p.r, p.p, p.eta_d, rng)
        elif config.mode == "source":
            times[j] = sample_source_time(p, rng, config.restart_policy)
        elif config.mode == "link":
            sampler = _ChainSampler(p, rng, probs, latency, config.restart_policy)
            times[j] = sampler.links(1)[0]
            attempts[0] += sampler.counters.attempts[0]
            successes[0] += 1
        else:
            sampler = _ChainSampler(p, rng, probs, latency, config.restart_policy)
            times[j] = sampler.chain()
            c = sampler.counters
            attempts = [x + y for x, y in zip(attempts, c.attempts)]
            successes = [x + y for x, y in zip(successes, c.successes)]
            post = [post[0] + c.postselection[0], post[1] + c.postselection[1]]
    return times, attempts, successes, post


def run_trials(config: SimConfig, workers: int = 1, keep_samples: bool = False) -> SimStats:
    """Run ``config.trials`` independent trials, optionally over several processes.

    The result is bit-identical for any ``workers`` value.
    """
    n = int(config.trials)
    workers = max(1, min(int(workers), n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    chunks = [(config, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers == 1:
        parts = [_run_chunk(c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, chunks))
    times = np.concatenate([pt[0] for pt in parts])
    attempts = tuple(int(sum(pt[1][k] for pt in parts)) for k in range(len(parts[0][1])))
    successes = tuple(int(sum(pt[2][k] for pt in parts)) for k in range(len(parts[0][2])))
    post = tuple(int(sum(pt[3][k] for pt in parts)) for k in range(2))
    mean = float(np.mean(times))
    stderr = float(np.std(times, ddof=1) / math.sqrt(n)) if n > 1 else None
    return SimStats(mean, stderr, n, int(config.seed), attempts, successes, post,
                    times if keep_samples else None)
