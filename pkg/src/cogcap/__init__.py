"""Effective capacity of cognitive radio links with energy-detection sensing."""

from .channel import LinkParams, SnrSet, snr_set
from .effective_capacity import (EffCapResult, effective_capacity,
                                 effective_capacity_limit_theta0, evaluate)
from .markov import StateModel, build_state_model, spectral_radius_rank1
from .power_policy import PowerPolicy, fixed_policy, solve_thresholds, verify_kkt
from .sensing import SensingChar, SensingParams, characterize

__version__ = "0.1.0"
