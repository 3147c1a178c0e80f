"""Normalized effective capacity of the four-state cognitive link."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import LinkParams, snr_set
from .markov import StateModel, build_state_model, spectral_radius_rank1
from .numerics import geometric_breakpoints, integrate_expectation
from .power_policy import (FIXED, OPTIMAL, PowerPolicy, _optimal_mu,
                           cutoff_breakpoints, make_policy)
from .sensing import SensingChar, characterize

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class EffCapResult:
    """Effective capacity in bits/s/Hz and the pieces of the log argument.

    ``term_busy + term_idle + term_outage`` is the expectation inside the
    logarithm; it lies in (0, 1].
    """

    r_e: float
    policy: PowerPolicy
    sensing: SensingChar
    term_busy: float
    term_idle: float
    term_outage: float

    @property
    def log_argument(self) -> float:
        return self.term_busy + self.term_idle + self.term_outage


def _fixed_breakpoints(a: float, snr: float, m: float) -> list[float]:
    # (1 + z snr)^-a falls off on the scale 1/((a+1) snr); resolve it down
    # to a hundredth of that scale.
    scale = 1.0 / ((a + 1.0) * snr)
    return geometric_breakpoints(min(scale / 100.0, m), max(m, scale), per_decade=2)


def _moment_parts(pp: PowerPolicy, branch: str, form: str) -> tuple[float, float]:
    """(M, 1 - M) for M = E{(1 + mu z snr)^-a}, each integrated directly.

    The deficit form keeps precision as a -> 0, the direct form as M -> 0.
    """
    gamma, snr = pp.branch(branch)
    a, m = pp.a, pp.fading_mean
    if a == 0.0 or snr <= 0.0 or (pp.mode == OPTIMAL and math.isinf(gamma)):
        return 1.0, 0.0

    if pp.mode == FIXED:
        bps = _fixed_breakpoints(a, snr, m)

        def log_factor(z):
            return -a * np.log1p(z * snr)

        def moment(z):
            return np.exp(log_factor(z))

        def deficit(z):
            return -np.expm1(log_factor(z))

    elif form == "simplified":
        # above the cutoff 1 + mu z snr = (z/gamma)^(1/(a+1)); below it mu = 0
        bps = cutoff_breakpoints(gamma, m)
        expo = a / (a + 1.0)
        below = -math.expm1(-gamma / m)

        def log_factor(z):
            return expo * np.log(gamma / np.maximum(z, gamma))

        def moment(z):
            return np.where(z > gamma, np.exp(log_factor(z)), 0.0)

        def deficit(z):
            return -np.expm1(log_factor(z))

        d = integrate_expectation(deficit, m, breakpoints=bps)
        if d < 0.5:
            return 1.0 - d, d
        mm = below + integrate_expectation(moment, m, breakpoints=bps)
        return mm, d

    elif form == "raw":
        bps = cutoff_breakpoints(gamma, m)

        def log_factor(z):
            return -a * np.log1p(_optimal_mu(z, gamma, a, snr) * z * snr)

        def moment(z):
            return np.exp(log_factor(z))

        def deficit(z):
            return -np.expm1(log_factor(z))

    else:
        raise ValueError(f"form must be 'simplified' or 'raw', got {form!r}")

    d = integrate_expectation(deficit, m, breakpoints=bps)
    if d < 0.5:
        return 1.0 - d, d
    return integrate_expectation(moment, m, breakpoints=bps), d


def rate_moment(pp: PowerPolicy, branch: str, form: str = "simplified") -> float:
    """E_z{exp(-(T-N) theta r)} = E_z{(1 + mu z snr)^-a} for one branch.

    ``form`` selects, for optimal policies, between the closed-form
    integrand above the cutoff (``simplified``) and direct substitution
    of the power law (``raw``); fixed policies ignore it.
    """
    return _moment_parts(pp, branch, form)[0]


def _coefficients(m: StateModel) -> tuple[float, float, float]:
    return m.busy_branch, m.p4, m.p2


def effective_capacity(p: LinkParams, sc: SensingChar, mode: str = OPTIMAL,
                       policy: PowerPolicy | None = None) -> EffCapResult:
    """Normalized effective capacity -ln(E) / (theta T B) at ``p.theta``.

    ``theta == 0`` is routed to :func:`effective_capacity_limit_theta0`.
    """
    s = snr_set(p)
    pp = policy if policy is not None else make_policy(p, s, mode)
    model = build_state_model(p.prior_busy, sc)
    c_busy, c_idle, c_out = _coefficients(model)
    m_busy, d_busy = _moment_parts(pp, "busy", "simplified")
    m_idle, d_idle = _moment_parts(pp, "idle", "simplified")
    terms = (c_busy * m_busy, c_idle * m_idle, c_out)
    if p.theta == 0.0:
        r_e = effective_capacity_limit_theta0(p, sc, mode)
        return EffCapResult(r_e, pp, sc, *terms)
    loss = c_busy * d_busy + c_idle * d_idle
    if loss < 0.5:
        log_arg = math.log1p(-loss)
    else:
        log_arg = math.log(sum(terms))
    r_e = -log_arg / (p.theta * p.frame * p.bandwidth)
    return EffCapResult(max(r_e, 0.0), pp, sc, *terms)


def state_moments(pp: PowerPolicy) -> tuple[float, float, float, float]:
    """Per-state moment generating values; state 2 carries no service."""
    busy = rate_moment(pp, "busy")
    return busy, 1.0, busy, rate_moment(pp, "idle")


def effective_capacity_via_spectral_radius(p: LinkParams, sc: SensingChar,
                                           pp: PowerPolicy) -> float:
    model = build_state_model(p.prior_busy, sc)
    sp = spectral_radius_rank1(state_moments(pp), model)
    return -math.log(sp) / (p.theta * p.frame * p.bandwidth)


def _mean_log_rate(pp: PowerPolicy, branch: str) -> float:
    # E_z{log2(1 + mu z snr)}
    gamma, snr = pp.branch(branch)
    m = pp.fading_mean
    if snr <= 0.0:
        return 0.0
    if pp.mode == FIXED:
        return integrate_expectation(lambda z: np.log1p(z * snr) / _LN2, m,
                                     breakpoints=_fixed_breakpoints(0.0, snr, m))
    if math.isinf(gamma):
        return 0.0
    a = pp.a

    def g(z):
        return np.log(np.maximum(z, gamma) / gamma) / ((a + 1.0) * _LN2)

    return integrate_expectation(g, m, breakpoints=cutoff_breakpoints(gamma, m))


def effective_capacity_limit_theta0(p: LinkParams, sc: SensingChar, mode: str = OPTIMAL) -> float:
    """Mean service rate in bits/s/Hz, the theta -> 0 limit of the effective capacity.

    The optimal-mode policy in this limit is water-filling (a = 0).
    """
    s = snr_set(p)
    pp = make_policy(p, s, mode, theta=0.0)
    model = build_state_model(p.prior_busy, sc)
    c_busy, c_idle, _ = _coefficients(model)
    rate = c_busy * _mean_log_rate(pp, "busy") + c_idle * _mean_log_rate(pp, "idle")
    return p.transmit_time / p.frame * rate


def evaluate(p: LinkParams, threshold: float, mode: str = OPTIMAL) -> EffCapResult:
    """Effective capacity with the exact energy-detector characterization at ``threshold``."""
    return effective_capacity(p, characterize(p.sensing_params(threshold)), mode)

