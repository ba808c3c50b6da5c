"""Closed-form rates, times and fidelities of the partial-readout repeater.

All functions are pure and operate on floats or on the immutable types of
:mod:`ensemble_repeater.params`.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .params import RateBreakdown, RepeaterParams, StateWeights

#: First-order fidelity coefficients (a, b, c, d) keyed by nesting level, for
#: F = 1 - [(a - b*eta) + (c - d*eta)*alpha2] * (1 - eta_d) * p.
FIDELITY_COEFFICIENTS = {4: (418.0, 260.0, 47.0, 205.0)}

#: Defaults for the direct-transmission comparison curve.
DIRECT_PAIR_RATE_HZ = 10e9
DIRECT_LOSS_DB_PER_KM = 0.2


class UnsupportedNestingError(ValueError):
    """No fidelity coefficients are known for the requested nesting level."""


class InfeasibleError(ValueError):
    """No readout weight satisfies the requested fidelity bound."""


def ideal_pair_prob(alpha2: float) -> float:
    """Pair preparation probability 2 alpha^4 beta^4 at unit efficiency."""
    beta2 = 1.0 - alpha2
    return 2.0 * alpha2**2 * beta2**2


def charging_time(r: float, p: float, eta_d: float) -> float:
    """Mean time to herald a stored excitation in all four ensembles.

    Uses the small-probability harmonic-sum value 25/(12 r p eta_d).
    """
    return 25.0 / (12.0 * r * p * eta_d)


def source_weights(alpha2: float, eta: float) -> StateWeights:
    """Weights (c2, c1, c0) of the locally prepared mixed state."""
    if not eta > 0.0:
        raise ValueError("eta must be positive: no coincidences can be detected at eta = 0")
    if not 0.0 < alpha2 < 1.0:
        raise ValueError(f"alpha2 must lie in (0, 1), got {alpha2!r}")
    beta2 = 1.0 - alpha2
    denom = (1.0 - alpha2 * eta) ** 2
    c2 = beta2**2 / denom
    c1 = alpha2 * beta2 * (1.0 - eta) / (2.0 * denom)
    c0 = alpha2**2 * (1.0 - eta) ** 2 / denom
    return StateWeights(c2, c1, c0, source=True)


def source_success_prob(alpha2: float, eta: float) -> float:
    """Probability that one partial-readout attempt heralds a pair."""
    return 2.0 * eta**2 * alpha2**2 * (1.0 - alpha2 * eta) ** 2


def source_prep_time(params: RepeaterParams) -> float:
    """Mean local pair preparation time, 3 T_eta / (2 P_s_eta)."""
    t_eta = charging_time(params.r, params.p, params.eta_d)
    return 1.5 * t_eta / source_success_prob(params.alpha2, params.eta)


def _bell_amplitude(weights: StateWeights) -> float:
    return weights.c2 / 2.0 + weights.c1


def link_generation_prob(weights: StateWeights, eta: float, eta_t: float) -> float:
    """Success probability of one elementary-link attempt (two-photon detection)."""
    return 2.0 * eta**2 * eta_t**2 * _bell_amplitude(weights) ** 2


def swap_prob(weights: StateWeights, eta: float) -> float:
    """Success probability of one local entanglement swap."""
    return link_generation_prob(weights, eta, 1.0)


def swap_map(weights: StateWeights) -> StateWeights:
    """Weights after a two-photon swap of two links carrying ``weights``."""
    c2, c1 = weights.c2, weights.c1
    norm = (c2 + 2.0 * c1) ** 2
    if norm <= 0.0:
        raise ValueError("swap undefined: no detectable component (c2 = c1 = 0)")
    return StateWeights(c2**2 / norm, c1 * c2 / norm, 4.0 * c1**2 / norm, source=weights.source)


def postselection_prob(weights: StateWeights, eta: float) -> float:
    """Probability of the final two-spin-wave post-selection, c2 eta^2."""
    return weights.c2 * eta**2


def attempt_cycle(params: RepeaterParams) -> float:
    """Duration of one link attempt: L0/c, plus the source time if enabled."""
    cycle = params.link_delay
    if params.include_source_prep:
        cycle += source_prep_time(params)
    return cycle


def chain_probabilities(params: RepeaterParams) -> tuple[float, float, float]:
    """(P0, Pi, Ppr) for the analytic source weights of ``params``."""
    w = source_weights(params.alpha2, params.eta)
    return (
        link_generation_prob(w, params.eta, params.eta_t),
        swap_prob(w, params.eta),
        postselection_prob(w, params.eta),
    )


def eq3_time(n: int, cycle: float, P0: float, Pi: float, Ppr: float) -> float:
    """(3/2)^n * cycle / (P0 * Pi^n * Ppr) for explicit probabilities."""
    probs = [P0] + [Pi] * n + [Ppr]
    if min(probs) <= 0.0:
        raise ZeroDivisionError("a success probability is zero: distribution time is infinite")
    return 1.5**n * cycle / math.prod(probs)


def total_time_product(params: RepeaterParams) -> float:
    """Mean distribution time as the product of per-stage probabilities."""
    P0, Pi, Ppr = chain_probabilities(params)
    return eq3_time(params.n, attempt_cycle(params), P0, Pi, Ppr)


def total_time_closed_form(params: RepeaterParams) -> float:
    """Mean distribution time in closed form in alpha2, eta and eta_t.

    Algebraically identical to :func:`total_time_product`; the same cycle
    duration (including the source time when enabled) is used.
    """
    n, eta = params.n, params.eta
    k = 2 * (n + 2)
    ratio = (1.0 - params.alpha2 * eta) ** k / (params.eta_t**2 * eta**k * params.beta2 ** (2 * (n + 2)))
    return 2.0 * 3.0**n * attempt_cycle(params) * ratio


def final_fidelity(alpha2: float, p: float, eta: float, eta_d: float, n: int = 4) -> float:
    """First-order-in-p fidelity of the distributed pair.

    Only nesting levels listed in :data:`FIDELITY_COEFFICIENTS` are supported.
    A negative first-order value is clamped to 0 with a warning.
    """
    if n not in FIDELITY_COEFFICIENTS:
        raise UnsupportedNestingError(f"fidelity coefficients are only known for n in {sorted(FIDELITY_COEFFICIENTS)}, got n={n}")
    a, b, c, d = FIDELITY_COEFFICIENTS[n]
    fid = 1.0 - ((a - b * eta) + (c - d * eta) * alpha2) * (1.0 - eta_d) * p
    if fid < 0.0:
        warnings.warn(f"first-order fidelity {fid:.4g} is negative; p={p} is outside the linear regime", RuntimeWarning, stacklevel=2)
        return 0.0
    return fid


def direct_transmission_time(L: float, pair_rate: float = DIRECT_PAIR_RATE_HZ,
                             loss_db_per_km: float = DIRECT_LOSS_DB_PER_KM) -> float:
    """Mean time to get one photon through ``L`` km of fiber from a ``pair_rate`` source."""
    if L < 0:
        raise ValueError(f"distance must be non-negative, got {L!r}")
    if pair_rate <= 0:
        raise ValueError(f"pair rate must be positive, got {pair_rate!r}")
    return 1.0 / (pair_rate * 10.0 ** (-loss_db_per_km * L / 10.0))


def rate_breakdown(params: RepeaterParams) -> RateBreakdown:
    """Evaluate every closed-form quantity for ``params``.

    ``F_final`` is ``None`` when no fidelity coefficients exist for ``params.n``.
    """
    weights = source_weights(params.alpha2, params.eta)
    P0, Pi, Ppr = chain_probabilities(params)
    fid = None
    if params.n in FIDELITY_COEFFICIENTS:
        fid = final_fidelity(params.alpha2, params.p, params.eta, params.eta_d, params.n)
    return RateBreakdown(
        T_charge=charging_time(params.r, params.p, params.eta_d),
        T_source=source_prep_time(params),
        P_s_eta=source_success_prob(params.alpha2, params.eta),
        weights=weights,
        P0=P0,
        Pi=Pi,
        Ppr=Ppr,
        T_tot_product=total_time_product(params),
        T_tot_closed=total_time_closed_form(params),
        F_final=fid,
    )


def _grid_times(params, grid, F_min):
    times = np.full(len(grid), np.inf)
    for i, a2 in enumerate(grid):
        if a2 * params.eta > 0.99:
            continue
        if F_min > 0 and final_fidelity(a2, params.p, params.eta, params.eta_d, params.n) < F_min:
            continue
        times[i] = total_time_product(params.replace(alpha2=float(a2)))
    return times


def optimize_alpha(params: RepeaterParams, F_min: float = 0.0,
                   coarse_step: float = 1e-2, fine_step: float = 1e-4):
    """Readout weight minimizing the distribution time subject to a fidelity floor.

    Deterministic two-stage grid search over alpha2 in (0, 1). The fidelity
    floor is only enforced when ``F_min > 0``, which requires a nesting level
    with known fidelity coefficients.

    Returns
    -------
    alpha2 : float
    breakdown : RateBreakdown
        Evaluated at the optimum.

    Raises
    ------
    InfeasibleError
        If no grid point reaches ``F_min``.
    """
    if F_min > 0 and params.n not in FIDELITY_COEFFICIENTS:
        raise UnsupportedNestingError(f"fidelity constraint needs n in {sorted(FIDELITY_COEFFICIENTS)}, got n={params.n}")
    coarse = np.round(np.arange(coarse_step, 1.0 - coarse_step / 2, coarse_step), 12)
    times = _grid_times(params, coarse, F_min)
    best = int(np.argmin(times))
    if not np.isfinite(times[best]):
        raise InfeasibleError(f"no alpha2 on the grid reaches F >= {F_min} (p={params.p}, eta_d={params.eta_d})")
    lo = max(coarse[best] - coarse_step, fine_step)
    hi = min(coarse[best] + coarse_step, 1.0 - fine_step)
    count = int(round((hi - lo) / fine_step)) + 1
    fine = np.round(lo + fine_step * np.arange(count), 12)
    fine_times = _grid_times(params, fine, F_min)
    best_fine = int(np.argmin(fine_times))
    alpha2 = float(fine[best_fine])
    return alpha2, rate_breakdown(params.replace(alpha2=alpha2))


def optimal_nesting(params: RepeaterParams, max_links: int = 16) -> int:
    """Nesting level with the shortest distribution time, at most ``max_links`` links."""
    n_max = int(math.floor(math.log2(max_links)))
    times = [total_time_product(params.replace(n=n)) for n in range(n_max + 1)]
    return int(np.argmin(times))


def sweep_curves(params: RepeaterParams, distances, max_links: int = 16):
    """Rows (distance_km, protocol, links, time_s) for direct and partial-readout curves."""
    rows = []
    for L in distances:
        L = float(L)
        rows.append((L, "direct", 1, direct_transmission_time(L)))
        at_L = params.replace(L_total=L)
        n = optimal_nesting(at_L, max_links)
        rows.append((L, "partial-readout", 2**n, total_time_product(at_L.replace(n=n))))
    return rows
