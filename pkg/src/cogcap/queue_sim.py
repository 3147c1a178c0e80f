"""Monte Carlo check of the QoS exponent: frame-level buffer simulation.

A constant number of bits arrives per frame, the channel serves the
per-frame amount drawn from the four-state model, and the buffer follows the
Lindley recursion. The decay rate of log P(Q >= q) in q is estimated from the
empirical tail and compared with the QoS exponent used to compute the
effective capacity.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .channel import LinkParams
from .effective_capacity import effective_capacity
from .power_policy import OPTIMAL, PowerPolicy, mu1, mu2
from .sensing import SensingChar

# frames generated per random stream; fixed so results do not depend on chunking
SERVICE_CHUNK = 1 << 20
MIN_EVENTS = 30


class UnstableQueueError(ValueError):
    """Arrival rate is not below the mean service rate."""


class InsufficientTailError(RuntimeError):
    """Too few exceedance events to fit a tail slope."""


@dataclass(frozen=True)
class SimConfig:
    """Buffer simulation setup.

    ``q_grid`` lists queue thresholds in bits; leave it empty to let
    :func:`fit_tail` pick one from the simulated queue.
    """

    frames: int
    arrival_rate: float = 0.0
    q_grid: tuple[float, ...] = ()
    seed: int = 0
    warmup: int = 1000

    def __post_init__(self):
        if not self.frames > self.warmup >= 0:
            raise ValueError(f"need frames > warmup >= 0, got frames={self.frames!r}, "
                             f"warmup={self.warmup!r}")
        if not self.arrival_rate >= 0:
            raise ValueError(f"arrival_rate must be >= 0, got {self.arrival_rate!r}")
        grid = np.asarray(self.q_grid, dtype=float)
        if grid.size and np.any(np.diff(grid) <= 0):
            raise ValueError("q_grid must be strictly increasing")


def simulate_service_process(p: LinkParams, pp: PowerPolicy, sc: SensingChar, frames: int,
                             seed: int, return_states: bool = False):
    """Bits served in each of ``frames`` frames.

    Per frame: the channel is busy with probability ``prior_busy``; the
    detector flags it busy with probability P_d (busy) or P_f (idle); the
    gain is exponential with mean ``fading_mean``. Detected-busy frames
    (states 1, 3) carry r1*(T-N) bits, state 4 carries r2*(T-N), state 2
    (missed detection: the rate exceeds the capacity) carries nothing.
    """
    frames = int(frames)
    sizes = [SERVICE_CHUNK] * (frames // SERVICE_CHUNK)
    if frames % SERVICE_CHUNK:
        sizes.append(frames % SERVICE_CHUNK)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    ln2 = math.log(2.0)
    scale = p.transmit_time * p.bandwidth / ln2
    service = np.empty(frames)
    states = np.empty(frames, dtype=np.int8) if return_states else None
    start = 0
    for n, stream in zip(sizes, streams):
        rng = np.random.default_rng(stream)
        busy = rng.random(n) < p.prior_busy
        u = rng.random(n)
        flagged = np.where(busy, u < sc.p_detect, u < sc.p_false_alarm)
        z = rng.exponential(p.fading_mean, n)
        bits = np.zeros(n)
        hi = flagged
        bits[hi] = scale * np.log1p(mu1(pp, z[hi]) * z[hi] * pp.snr1)
        lo = ~flagged & ~busy
        bits[lo] = scale * np.log1p(mu2(pp, z[lo]) * z[lo] * pp.snr4)
        service[start:start + n] = bits
        if states is not None:
            # 1: busy/flagged, 2: busy/missed, 3: idle/flagged, 4: idle/clear
            states[start:start + n] = np.where(busy, np.where(flagged, 1, 2),
                                               np.where(flagged, 3, 4))
        start += n
    if return_states:
        return service, states
    return service


@dataclass(frozen=True)
class TailFit:
    """Least-squares fit of log P(Q >= q) against q.

    ``counts`` are frames at or above each level, ``entries`` the number of
    separate excursions into it.
    """

    rate: float
    stderr: float
    q: np.ndarray = field(repr=False)
    prob: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)
    batch_rates: tuple[float, ...] = ()
    entries: np.ndarray = field(default=None, repr=False)

    @property
    def batch_stderr(self) -> float:
        r = np.asarray(self.batch_rates)
        if r.size < 2:
            return math.nan
        return float(r.std(ddof=1) / math.sqrt(r.size))


def _slope_fit(q: np.ndarray, logp: np.ndarray) -> tuple[float, float]:
    x = q - q.mean()
    sxx = float(x @ x)
    slope = float(x @ (logp - logp.mean())) / sxx
    if q.size > 2:
        resid = logp - logp.mean() - slope * x
        se = math.sqrt(float(resid @ resid) / (q.size - 2) / sxx)
    else:
        se = math.nan
    return slope, se


def auto_q_grid(service: np.ndarray, arrival: float, warmup: int = 0,
                min_events: int = MIN_EVENTS, points: int = 40) -> np.ndarray:
    """Evenly spaced thresholds over the usable part of the queue tail.

    A first pass on a geometric grid locates the largest level the queue
    enters at least ``min_events`` separate times; the grid starts at a
    quarter of it so the fit stays away from the non-asymptotic region
    near q = 0.
    """
    probe = np.geomspace(1e-6, 1e12, 361)
    _, ups, _, qmax = _kernels.lindley_exceedances(arrival, service, probe, warmup, 0.0)
    ok = probe[ups >= min_events]
    if ok.size == 0 or qmax <= 0.0:
        return np.array([])
    top = float(ok[-1])
    # refine the top between the last good probe and the next one
    fine = np.linspace(top, top * probe[1] / probe[0], 64)
    _, ups, _, _ = _kernels.lindley_exceedances(arrival, service, fine, warmup, 0.0)
    top = float(fine[ups >= min_events][-1])
    return np.linspace(0.25 * top, top, points)


def fit_tail(service: np.ndarray, cfg: SimConfig, min_events: int = MIN_EVENTS,
             batches: int = 10) -> TailFit:
    """Fit the exponential decay of the stationary queue tail.

    P(Q >= q) is the fraction of frames at or above ``q``. A level enters
    the fit only if the queue crossed up into ``[q, inf)`` at least
    ``min_events`` separate times: frames inside one excursion are strongly
    correlated, so distinct entries, not frames, measure how much
    independent evidence a level carries.

    Raises:
        UnstableQueueError: ``arrival_rate`` is not below the mean service.
        InsufficientTailError: fewer than two grid levels reach ``min_events``.
    """
    service = np.ascontiguousarray(service, dtype=float)
    arrival = float(cfg.arrival_rate)
    mean_service = float(service[cfg.warmup:].mean())
    if arrival >= mean_service:
        raise UnstableQueueError(f"arrival {arrival!r} bits/frame is not below the mean "
                                 f"service {mean_service!r} bits/frame")
    empty = np.array([])
    if arrival == 0.0:
        return TailFit(math.inf, 0.0, empty, empty, empty.astype(np.int64))
    grid = np.asarray(cfg.q_grid, dtype=float)
    if grid.size == 0:
        grid = auto_q_grid(service, arrival, cfg.warmup, min_events)
        if grid.size == 0:
            return TailFit(math.inf, 0.0, empty, empty, empty.astype(np.int64))

    # one pass per batch, carrying the queue across batch boundaries
    edges = np.linspace(cfg.warmup, service.size, batches + 1).astype(int)
    _, _, q0, _ = _kernels.lindley_exceedances(arrival, service[:cfg.warmup], grid, 0, 0.0)
    per_batch = []
    ups = np.zeros(grid.size, dtype=np.int64)
    for lo, hi in zip(edges[:-1], edges[1:]):
        c, u, q0, _ = _kernels.lindley_exceedances(arrival, service[lo:hi], grid, 0, q0)
        per_batch.append((c, hi - lo))
        ups += u
    counts = np.sum([c for c, _ in per_batch], axis=0)
    kept = service.size - cfg.warmup
    use = ups >= min_events
    if np.count_nonzero(use) < 2:
        raise InsufficientTailError(
            f"only {np.count_nonzero(use)} thresholds have >= {min_events} exceedance events "
            f"(max {int(ups.max()) if ups.size else 0})")
    q = grid[use]
    prob = counts[use] / kept
    slope, se = _slope_fit(q, np.log(prob))

    # batch slopes over the levels every batch reached, so no batch is dropped
    batch_counts = np.array([c[use] for c, _ in per_batch])
    common = np.all(batch_counts > 0, axis=0)
    batch_rates = []
    if np.count_nonzero(common) >= 2:
        for cb, (_, n) in zip(batch_counts, per_batch):
            batch_rates.append(-_slope_fit(q[common], np.log(cb[common] / n))[0])
    return TailFit(-slope, se, q, prob, counts[use], tuple(batch_rates), ups[use])


def estimate_decay_rate(service: np.ndarray, cfg: SimConfig) -> float:
    """Empirical decay rate of P(Q >= q); ``inf`` when the queue never builds."""
    return fit_tail(service, cfg).rate


@dataclass(frozen=True)
class ArrivalCheck:
    factor: float
    arrival: float
    decay: float | None
    stderr: float | None
    unstable: bool = False
    note: str = ""


@dataclass(frozen=True)
class ValidationReport:
    theta: float
    capacity_bits_per_frame: float
    mean_service: float
    checks: tuple[ArrivalCheck, ...]

    def check(self, factor: float) -> ArrivalCheck:
        for c in self.checks:
            if math.isclose(c.factor, factor):
                return c
        raise KeyError(factor)

    @property
    def passed(self) -> bool:
        """Decay at least theta below capacity and below theta (or unstable) above it."""
        ok = True
        for c in self.checks:
            if c.factor <= 0.9:
                ok &= (not c.unstable) and c.decay is not None and c.decay >= self.theta
            elif c.factor > 1.0:
                ok &= c.unstable or (c.decay is not None and c.decay < self.theta)
        return ok

    def lines(self) -> list[str]:
        out = [f"theta={self.theta:g}  capacity={self.capacity_bits_per_frame:.6g} bits/frame  "
               f"mean service={self.mean_service:.6g} bits/frame"]
        for c in self.checks:
            if c.unstable:
                out.append(f"  {c.factor:5.2f} x capacity: unstable ({c.note})")
            elif c.decay is None:
                out.append(f"  {c.factor:5.2f} x capacity: no estimate ({c.note})")
            else:
                out.append(f"  {c.factor:5.2f} x capacity: decay={c.decay:.6g} "
                           f"(+/- {c.stderr:.2g}, ratio to theta {c.decay / self.theta:.4f}) {c.note}")
        out.append("  result: " + ("PASS" if self.passed else "FAIL"))
        return out


def validate_effective_capacity(p: LinkParams, sc: SensingChar, mode: str, cfg: SimConfig,
                                theta: float | None = None,
                                factors: tuple[float, ...] = (0.9, 0.99, 1.01)) -> ValidationReport:
    """Simulate the buffer at arrival rates around the effective capacity.

    The service sequence is drawn once (``cfg.frames``, ``cfg.seed``) and
    reused for every arrival rate. Capacity is the effective capacity of
    ``p`` at ``theta`` (default ``p.theta``) in bits per frame, ``T*B*r_e``.
    Standard errors come from batch means; the 0.99 point sits within
    Monte Carlo noise of theta and is informational only.
    """
    th = p.theta if theta is None else theta
    if not th > 0:
        raise ValueError(f"theta must be > 0, got {th!r}")
    link = dataclasses.replace(p, theta=th)
    res = effective_capacity(link, sc, mode)
    capacity = p.frame * p.bandwidth * res.r_e
    service = simulate_service_process(link, res.policy, sc, cfg.frames, cfg.seed)
    mean_service = float(service[cfg.warmup:].mean())
    checks = []
    for f in factors:
        arrival = f * capacity
        sub = dataclasses.replace(cfg, arrival_rate=arrival)
        try:
            fit = fit_tail(service, sub)
        except UnstableQueueError as exc:
            checks.append(ArrivalCheck(f, arrival, None, None, unstable=True, note=str(exc)))
            continue
        except InsufficientTailError as exc:
            checks.append(ArrivalCheck(f, arrival, None, None, note=str(exc)))
            continue
        se = fit.batch_stderr if not math.isnan(fit.batch_stderr) else fit.stderr
        note = "" if f != 0.99 else "(within Monte Carlo noise; informational)"
        checks.append(ArrivalCheck(f, arrival, fit.rate, se, note=note))
    return ValidationReport(th, capacity, mean_service, tuple(checks))


def service_for_mode(p: LinkParams, sc: SensingChar, mode: str, frames: int, seed: int):
    res = effective_capacity(p, sc, mode)
    return simulate_service_process(p, res.policy, sc, frames, seed), res

