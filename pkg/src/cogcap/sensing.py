"""Energy-detection spectrum sensing: false-alarm and detection probabilities."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .numerics import gaussian_q, reg_upper_gamma

# Trials per random stream in simulate_detector. Fixed, so the result does
# not depend on how many workers split the chunks.
DETECTOR_CHUNK = 10_000


@dataclass(frozen=True)
class SensingParams:
    """Energy detector setup.

    Attributes:
        N: sensing duration in seconds.
        B: bandwidth in Hz; ``N * B`` is the number of complex samples.
        noise_power: noise variance per complex sample.
        primary_power: primary-user signal variance per complex sample.
        threshold: detection threshold applied to the average energy.
    """

    N: float
    B: float
    noise_power: float = 1.0
    primary_power: float = 1.0
    threshold: float = 1.0

    def __post_init__(self):
        if not (self.N > 0 and self.B > 0):
            raise ValueError(f"N and B must be > 0, got N={self.N!r}, B={self.B!r}")
        if not self.noise_power > 0:
            raise ValueError(f"noise_power must be > 0, got {self.noise_power!r}")
        if not self.primary_power >= 0:
            raise ValueError(f"primary_power must be >= 0, got {self.primary_power!r}")
        if not self.threshold >= 0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold!r}")

    @property
    def samples(self) -> float:
        return self.N * self.B


@dataclass(frozen=True)
class SensingChar:
    p_false_alarm: float
    p_detect: float

    def __post_init__(self):
        for name in ("p_false_alarm", "p_detect"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")


def _exceedance(p: SensingParams, variance: float) -> float:
    nb = p.samples
    return reg_upper_gamma(nb * p.threshold / variance, nb)


def false_alarm_prob(p: SensingParams) -> float:
    """Pr(Y > threshold | noise only) = 1 - P(NB*threshold/noise_power, NB)."""
    return _exceedance(p, p.noise_power)


def detection_prob(p: SensingParams) -> float:
    """Pr(Y > threshold | primary present) with variance noise + primary."""
    return _exceedance(p, p.noise_power + p.primary_power)


def characterize(p: SensingParams) -> SensingChar:
    return SensingChar(false_alarm_prob(p), detection_prob(p))


def gaussian_approx_char(p: SensingParams) -> SensingChar:
    """Central-limit approximation of the exact chi-square characterization.

    Under each hypothesis ``Y`` has mean ``v`` and standard deviation
    ``v / sqrt(NB)`` where ``v`` is the per-sample variance, so the
    exceedance probability is ``Q((threshold - v) * sqrt(NB) / v)``.
    """
    if p.samples < 1:
        raise ValueError(f"Gaussian approximation needs N*B >= 1, got {p.samples!r}")
    root = math.sqrt(p.samples)

    def tail(v):
        return gaussian_q((p.threshold - v) * root / v)

    return SensingChar(tail(p.noise_power), tail(p.noise_power + p.primary_power))


def _chunk_exceedances(p: SensingParams, n_samples: int, thresholds: np.ndarray, trials: int,
                       seed_seq) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed_seq)
    # complex CN(0, v) has independent real/imag parts of variance v/2
    sn = math.sqrt(p.noise_power / 2.0)
    ss = math.sqrt(p.primary_power / 2.0)
    shape = (trials, n_samples)
    noise_re = rng.standard_normal(shape) * sn
    noise_im = rng.standard_normal(shape) * sn
    y0 = np.sort(_kernels.energy_statistic(noise_re, noise_im))
    # fresh noise under H1: the two hypotheses are independent experiments
    y_re = rng.standard_normal(shape) * sn + rng.standard_normal(shape) * ss
    y_im = rng.standard_normal(shape) * sn + rng.standard_normal(shape) * ss
    y1 = np.sort(_kernels.energy_statistic(y_re, y_im))
    # number of statistics strictly above each threshold
    h0 = trials - np.searchsorted(y0, thresholds, side="right")
    h1 = trials - np.searchsorted(y1, thresholds, side="right")
    return h0, h1


def simulate_detector_curve(p: SensingParams, thresholds, trials: int, seed: int,
                            workers: int = 1) -> list[SensingChar]:
    """Empirical (P_f, P_d) at several thresholds from one set of simulated trials.

    ``p.threshold`` is ignored. ``N*B`` is rounded to the nearest integer
    (at least one sample). Chunks of ``DETECTOR_CHUNK`` trials each draw
    from their own spawned stream, so the result for a given seed is the
    same for any ``workers``.
    """
    if int(trials) != trials or trials < 1:
        raise ValueError(f"trials must be a positive integer, got {trials!r}")
    levels = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if np.any(levels < 0):
        raise ValueError("thresholds must be >= 0")
    n_samples = max(1, int(round(p.samples)))
    sizes = [DETECTOR_CHUNK] * (trials // DETECTOR_CHUNK)
    if trials % DETECTOR_CHUNK:
        sizes.append(trials % DETECTOR_CHUNK)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = list(zip(sizes, streams))

    def run(job):
        return _chunk_exceedances(p, n_samples, levels, *job)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]
    h0 = np.sum([r[0] for r in results], axis=0)
    h1 = np.sum([r[1] for r in results], axis=0)
    return [SensingChar(float(a) / trials, float(b) / trials) for a, b in zip(h0, h1)]


def simulate_detector(p: SensingParams, trials: int, seed: int, workers: int = 1) -> SensingChar:
    """Empirical (P_f, P_d) of the energy detector at ``p.threshold``.

    Seeds match :func:`simulate_detector_curve`: the same seed gives the
    same trials whatever thresholds are scored.
    """
    return simulate_detector_curve(p, [p.threshold], trials, seed, workers)[0]
