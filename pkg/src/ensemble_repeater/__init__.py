"""Partial-readout atomic-ensemble quantum repeater: closed-form rates,
a Fock-space linear-optics oracle and a Monte Carlo chain simulator."""

from .params import IDEAL_WEIGHTS, ParameterError, RateBreakdown, RepeaterParams, StateWeights, validate
from .analytic import (
    charging_time,
    direct_transmission_time,
    final_fidelity,
    ideal_pair_prob,
    link_generation_prob,
    optimize_alpha,
    postselection_prob,
    rate_breakdown,
    source_prep_time,
    source_success_prob,
    source_weights,
    swap_map,
    swap_prob,
    total_time_closed_form,
    total_time_product,
)

__version__ = "0.1.0"
