"""Sequence-graph models for state preparation and measurement correction."""

from .bell import ReadoutModel, correct_bell_correlations, noisy_bell_state, simulate_raw_counts
from .dag import (
    DagError,
    DagModel,
    conditional_probability,
    outcome_distribution,
    parse_dag,
)
from .inversion import (
    SpamResult,
    Target,
    beta_parameters,
    clock_pi_correction,
    invert,
    mc_uncertainty,
    targets_from_dataset,
)

__all__ = [
    "DagError",
    "DagModel",
    "ReadoutModel",
    "SpamResult",
    "Target",
    "beta_parameters",
    "clock_pi_correction",
    "conditional_probability",
    "correct_bell_correlations",
    "invert",
    "mc_uncertainty",
    "noisy_bell_state",
    "outcome_distribution",
    "parse_dag",
    "simulate_raw_counts",
    "targets_from_dataset",
]
