"""QoS-driven power adaptation and the cutoffs that saturate the power budgets."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import LinkParams, SnrSet
from .markov import StateModel
from .numerics import (Tolerance, find_root, geometric_breakpoints,
                       integrate_expectation)

OPTIMAL = "optimal"
FIXED = "fixed"
MODES = (OPTIMAL, FIXED)

# cutoffs are solved in log space; exp(-700) is still a normal double
_LOG_GAMMA_LIMITS = (-700.0, 700.0)
_INITIAL_BRACKET = (math.log(1e-8), math.log(1e4))
_SOLVE_TOL = Tolerance(abs_tol=1e-12, rel_tol=1e-13, max_iter=300)


def qos_exponent_a(p: LinkParams, theta: float | None = None) -> float:
    """a = (T - N) * B * theta / ln 2, the exponent in exp(-(T-N) theta r) = (1 + x)^-a."""
    th = p.theta if theta is None else theta
    return p.transmit_time * p.bandwidth * th / math.log(2.0)


@dataclass(frozen=True)
class PowerPolicy:
    """Normalized power laws for the detected-busy and detected-idle branches.

    In ``optimal`` mode the laws are zero up to the cutoffs ``gamma1`` /
    ``gamma2``; ``gamma1 = inf`` encodes a busy branch with no power budget.
    In ``fixed`` mode both laws are identically one (or zero for an empty
    budget) and the cutoffs are unused.
    """

    a: float
    gamma1: float
    gamma2: float
    snr1: float
    snr4: float
    mode: str = OPTIMAL
    fading_mean: float = 1.0
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.a >= 0:
            raise ValueError(f"a must be >= 0, got {self.a!r}")

    def branch(self, which: str) -> tuple[float, float]:
        """(cutoff, snr) of the ``busy`` or ``idle`` branch."""
        if which == "busy":
            return self.gamma1, self.snr1
        if which == "idle":
            return self.gamma2, self.snr4
        raise ValueError(f"branch must be 'busy' or 'idle', got {which!r}")


def _optimal_mu(z, gamma: float, a: float, snr: float):
    # (1/snr) * (gamma^(-1/(a+1)) z^(-a/(a+1)) - 1/z) written as
    # expm1(log(z/gamma)/(a+1)) / (snr z) to stay exact for tiny gamma.
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape)
    if snr <= 0.0 or math.isinf(gamma):
        return out
    on = z > gamma
    zon = z[on]
    out[on] = np.expm1(np.log(zon / gamma) / (a + 1.0)) / (snr * zon)
    return out


def _mu(pp: PowerPolicy, which: str, z):
    gamma, snr = pp.branch(which)
    if pp.mode == FIXED:
        return np.full(np.shape(z), 1.0 if snr > 0 else 0.0)
    return _optimal_mu(z, gamma, pp.a, snr)


def mu1(pp: PowerPolicy, z):
    """Busy-branch normalized power at gain ``z`` (array-friendly)."""
    return _mu(pp, "busy", z)


def mu2(pp: PowerPolicy, z):
    """Idle-branch normalized power at gain ``z``."""
    return _mu(pp, "idle", z)


def cutoff_breakpoints(gamma: float, fading_mean: float) -> list[float]:
    # Integrands above the cutoff vary on a log scale in z; split each
    # decade between the cutoff and the fading mean.
    if not gamma < fading_mean:
        return [gamma]
    return geometric_breakpoints(gamma, fading_mean, per_decade=2)


def average_power(gamma: float, a: float, snr: float, fading_mean: float) -> float:
    """E_z{mu(z)} of the optimal law with cutoff ``gamma``."""
    if math.isinf(gamma) or snr <= 0.0:
        return 0.0
    return integrate_expectation(lambda z: _optimal_mu(z, gamma, a, snr), fading_mean,
                                 breakpoints=cutoff_breakpoints(gamma, fading_mean))


@functools.lru_cache(maxsize=4096)
def _solve_cutoff(a: float, snr: float, fading_mean: float) -> float:
    if snr <= 0.0:
        return math.inf

    def excess(log_gamma):
        return average_power(math.exp(log_gamma), a, snr, fading_mean) - 1.0

    return math.exp(find_root(excess, _INITIAL_BRACKET, _SOLVE_TOL, limits=_LOG_GAMMA_LIMITS))


def solve_thresholds(p: LinkParams, s: SnrSet, theta: float | None = None) -> PowerPolicy:
    """Optimal policy whose cutoffs make both average-power constraints tight.

    The two branches separate, so each cutoff is an independent scalar root
    of ``E{mu(z)} = 1``; that function decreases strictly in the cutoff.
    A zero busy budget (``snr1 == 0``) yields ``gamma1 = inf``: no
    transmission in detected-busy frames.
    """
    a = qos_exponent_a(p, theta)
    g1 = _solve_cutoff(a, s.snr1, p.fading_mean)
    g2 = _solve_cutoff(a, s.snr4, p.fading_mean)
    return PowerPolicy(a=a, gamma1=g1, gamma2=g2, snr1=s.snr1, snr4=s.snr4,
                       mode=OPTIMAL, fading_mean=p.fading_mean)


def fixed_policy(p: LinkParams, s: SnrSet, theta: float | None = None) -> PowerPolicy:
    """Constant-power, rate-adaptive transmission (mu1 = mu2 = 1)."""
    return PowerPolicy(a=qos_exponent_a(p, theta), gamma1=0.0, gamma2=0.0, snr1=s.snr1,
                       snr4=s.snr4, mode=FIXED, fading_mean=p.fading_mean)


def make_policy(p: LinkParams, s: SnrSet, mode: str, theta: float | None = None) -> PowerPolicy:
    if mode == OPTIMAL:
        return solve_thresholds(p, s, theta)
    if mode == FIXED:
        return fixed_policy(p, s, theta)
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


@dataclass(frozen=True)
class KKTReport:
    lambda1: float
    lambda2: float
    stationarity: float
    slackness: float
    saturation: float
    skipped: bool = False

    @property
    def max_residual(self) -> float:
        return max(self.stationarity, self.slackness, self.saturation)


def _branch_residuals(pp: PowerPolicy, which: str, weight: float, samples: int):
    gamma, snr = pp.branch(which)
    if weight <= 0.0 or snr <= 0.0 or math.isinf(gamma):
        return 0.0, 0.0, 0.0, 0.0
    a, m = pp.a, pp.fading_mean
    lam = gamma * weight * a * snr
    # stationarity where mu > 0: lam = a snr z w / (1 + mu z snr)^(a+1), compared in logs
    u = (np.arange(samples) + 0.5) / samples
    z_on = gamma - m * np.log1p(-u)
    x = _optimal_mu(z_on, gamma, a, snr) * z_on * snr
    log_ratio = np.log(z_on) - (a + 1.0) * np.log1p(x) - math.log(gamma)
    stationarity = float(np.max(np.abs(np.expm1(log_ratio))))
    # where mu = 0 the Lagrangian derivative must be nonnegative: a snr z w <= lam
    z_off = gamma * u
    slackness = float(max(0.0, np.max(z_off / gamma - 1.0)))
    saturation = abs(average_power(gamma, a, snr, m) - 1.0)
    return lam, stationarity, slackness, saturation


def verify_kkt(pp: PowerPolicy, m: StateModel, s: SnrSet, samples: int = 50) -> KKTReport:
    """First-order optimality diagnostics of an optimal-mode policy.

    Rebuilds the Lagrange multipliers from the cutoffs and reports the
    largest relative stationarity residual above each cutoff, any violation
    of the sign condition below it, and the constraint gap |E{mu} - 1|.
    ``a = 0`` makes the multipliers vanish, so the check is skipped.
    """
    if pp.mode != OPTIMAL:
        raise ValueError("KKT diagnostics apply to optimal-mode policies only")
    if pp.a == 0.0:
        return KKTReport(0.0, 0.0, 0.0, 0.0, 0.0, skipped=True)
    lam1, st1, sl1, sat1 = _branch_residuals(pp, "busy", m.busy_branch, samples)
    lam2, st2, sl2, sat2 = _branch_residuals(pp, "idle", m.p4, samples)
    return KKTReport(lambda1=lam1, lambda2=lam2, stationarity=max(st1, st2),
                     slackness=max(sl1, sl2), saturation=max(sat1, sat2))
