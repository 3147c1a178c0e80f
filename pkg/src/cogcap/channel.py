"""Link parameters, per-scenario SNRs and instantaneous capacities / rates.

All quantities are linear scale; dB conversion happens only in the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sensing import SensingParams


@dataclass(frozen=True)
class LinkParams:
    """Physical and system constants of the secondary link.

    ``fading_mean`` is the mean of ``z = |h|^2`` (exponentially
    distributed); powers are average transmit powers in the busy and idle
    branches; ``theta`` is the QoS exponent per bit.
    """

    bandwidth: float = 1e4
    frame: float = 0.1
    sensing: float = 0.01
    prior_busy: float = 0.1
    noise_power: float = 1.0
    primary_power: float = 1.0
    fading_mean: float = 1.0
    avg_power_busy: float = 2e4
    avg_power_idle: float = 1e5
    theta: float = 0.01

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth!r}")
        if not 0 < self.sensing < self.frame:
            raise ValueError(f"need 0 < sensing < frame, got sensing={self.sensing!r}, "
                             f"frame={self.frame!r}")
        if not 0.0 <= self.prior_busy <= 1.0:
            raise ValueError(f"prior_busy must lie in [0, 1], got {self.prior_busy!r}")
        if not self.noise_power > 0:
            raise ValueError(f"noise_power must be > 0, got {self.noise_power!r}")
        if not self.primary_power >= 0:
            raise ValueError(f"primary_power must be >= 0, got {self.primary_power!r}")
        if not self.fading_mean > 0:
            raise ValueError(f"fading_mean must be > 0, got {self.fading_mean!r}")
        if not self.avg_power_busy >= 0:
            raise ValueError(f"avg_power_busy must be >= 0, got {self.avg_power_busy!r}")
        if not self.avg_power_idle > 0:
            raise ValueError(f"avg_power_idle must be > 0, got {self.avg_power_idle!r}")
        if self.avg_power_busy > self.avg_power_idle:
            raise ValueError(f"avg_power_busy ({self.avg_power_busy!r}) must not exceed "
                             f"avg_power_idle ({self.avg_power_idle!r})")
        if not self.theta >= 0:
            raise ValueError(f"theta must be >= 0, got {self.theta!r}")

    @property
    def transmit_time(self) -> float:
        return self.frame - self.sensing

    def sensing_params(self, threshold: float) -> SensingParams:
        return SensingParams(N=self.sensing, B=self.bandwidth, noise_power=self.noise_power,
                             primary_power=self.primary_power, threshold=threshold)

    @classmethod
    def from_snr(cls, snr1: float, snr4: float, **kw) -> "LinkParams":
        """Build parameters whose busy/idle average powers give ``snr1`` and ``snr4``."""
        b = kw.get("bandwidth", cls.bandwidth)
        n = kw.get("noise_power", cls.noise_power)
        s = kw.get("primary_power", cls.primary_power)
        return cls(avg_power_busy=snr1 * b * (n + s), avg_power_idle=snr4 * b * n, **kw)


@dataclass(frozen=True)
class SnrSet:
    snr1: float
    snr2: float
    snr3: float
    snr4: float

    def for_scenario(self, scenario: int) -> float:
        if scenario not in (1, 2, 3, 4):
            raise ValueError(f"scenario must be 1..4, got {scenario!r}")
        return (self.snr1, self.snr2, self.snr3, self.snr4)[scenario - 1]


def snr_set(p: LinkParams) -> SnrSet:
    """Average SNRs of the four sensing scenarios (busy/idle x detected busy/idle)."""
    if p.bandwidth <= 0 or p.noise_power <= 0:
        raise ValueError("bandwidth and noise power must be positive")
    interfered = p.bandwidth * (p.noise_power + p.primary_power)
    clean = p.bandwidth * p.noise_power
    return SnrSet(snr1=p.avg_power_busy / interfered, snr2=p.avg_power_idle / interfered,
                  snr3=p.avg_power_busy / clean, snr4=p.avg_power_idle / clean)


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def _capacity(bandwidth, mu, z, snr):
    return bandwidth * np.log1p(np.multiply(mu, z) * snr) / math.log(2.0)


def instantaneous_capacity(scenario: int, z, mu, s: SnrSet, bandwidth: float):
    """Capacity B*log2(1 + mu*z*snr_k) in bits/s of scenario ``k`` at gain ``z``.

    ``mu`` is the normalized power of the branch the transmitter chose
    (busy branch in scenarios 1 and 3, idle branch in 2 and 4).
    """
    return _capacity(bandwidth, mu, z, s.for_scenario(scenario))


def transmission_rates(z, mu1_val, mu2_val, s: SnrSet, bandwidth: float):
    """Rates (r1, r2) chosen for detected-busy and detected-idle frames.

    The transmitter trusts its sensing decision: r1 is matched to the
    interfered SNR of scenario 1, r2 to the clean SNR of scenario 4.
    """
    return _capacity(bandwidth, mu1_val, z, s.snr1), _capacity(bandwidth, mu2_val, z, s.snr4)
