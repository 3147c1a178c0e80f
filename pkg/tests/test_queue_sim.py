import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import optimize

from cogcap.channel import LinkParams
from cogcap.effective_capacity import effective_capacity, effective_capacity_limit_theta0
from cogcap.markov import build_state_model
from cogcap.power_policy import FIXED, OPTIMAL
from cogcap.queue_sim import (InsufficientTailError, SimConfig, UnstableQueueError,
                              estimate_decay_rate, fit_tail, service_for_mode,
                              simulate_service_process, validate_effective_capacity)
from cogcap.sensing import SensingChar, characterize

from oracles import two_point_decay

FIG2 = LinkParams.from_snr(1.0, 10.0)


@pytest.fixture(scope="module")
def fig2_sc():
    return characterize(FIG2.sensing_params(1.4))


class TestServiceProcess:
    def test_always_busy_without_budget(self):
        p = LinkParams.from_snr(0.0, 10.0, prior_busy=1.0)
        sc = SensingChar(0.0, 1.0)
        res = effective_capacity(p, sc)
        assert np.all(simulate_service_process(p, res.policy, sc, 10_000, seed=1) == 0.0)

    def test_state_frequencies(self, fig2_sc):
        n = 10**6
        res = effective_capacity(FIG2, fig2_sc)
        _, states = simulate_service_process(FIG2, res.policy, fig2_sc, n, seed=11,
                                             return_states=True)
        probs = build_state_model(FIG2.prior_busy, fig2_sc).probs
        freq = np.bincount(states, minlength=5)[1:] / n
        sd = np.sqrt(probs * (1 - probs) / n)
        assert np.all(np.abs(freq - probs) <= 4 * sd + 1e-12)

    def test_missed_detection_carries_nothing(self, fig2_sc):
        res = effective_capacity(FIG2, fig2_sc)
        svc, states = simulate_service_process(FIG2, res.policy, fig2_sc, 200_000, seed=2,
                                               return_states=True)
        assert np.all(svc[states == 2] == 0.0)
        assert np.all(svc >= 0.0)

    @pytest.mark.parametrize("mode", [OPTIMAL, FIXED])
    def test_mean_matches_ergodic_rate(self, fig2_sc, mode):
        n = 10**6
        svc, _ = service_for_mode(FIG2, fig2_sc, mode, n, seed=21)
        limit = effective_capacity_limit_theta0(FIG2, fig2_sc, mode)
        # the policy here is the theta = 0.01 one; compare against the limit of that policy
        res = effective_capacity(dataclasses.replace(FIG2, theta=0.0), fig2_sc, mode)
        svc0 = simulate_service_process(FIG2, res.policy, fig2_sc, n, seed=21)
        assert svc0.mean() / (FIG2.frame * FIG2.bandwidth) == pytest.approx(limit, rel=5e-3)
        assert svc.mean() > 0

    def test_deterministic_per_seed(self, fig2_sc):
        res = effective_capacity(FIG2, fig2_sc)
        a = simulate_service_process(FIG2, res.policy, fig2_sc, 50_000, seed=5)
        b = simulate_service_process(FIG2, res.policy, fig2_sc, 50_000, seed=5)
        c = simulate_service_process(FIG2, res.policy, fig2_sc, 50_000, seed=6)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestDecayEstimate:
    def test_zero_arrivals(self):
        svc = np.random.default_rng(0).exponential(size=5000)
        assert estimate_decay_rate(svc, SimConfig(frames=5000, arrival_rate=0.0)) == math.inf

    def test_unstable(self):
        svc = np.ones(5000)
        with pytest.raises(UnstableQueueError):
            estimate_decay_rate(svc, SimConfig(frames=5000, arrival_rate=1.0))

    def test_insufficient_tail(self):
        svc = np.random.default_rng(1).exponential(size=3000)
        cfg = SimConfig(frames=3000, arrival_rate=0.9, q_grid=(200.0, 300.0, 400.0), warmup=10)
        with pytest.raises(InsufficientTailError):
            estimate_decay_rate(svc, cfg)

    @pytest.mark.parametrize("p,s,arrival", [(0.5, 2.0, 0.9), (0.3, 5.0, 1.35), (0.8, 1.0, 0.7)])
    def test_two_point_service(self, p, s, arrival):
        # sd of the estimate across seeds is 4-9% at this length
        frames = 10**7
        rng = np.random.default_rng(17)
        svc = np.where(rng.random(frames) < p, s, 0.0)
        assert arrival < p * s
        est = estimate_decay_rate(svc, SimConfig(frames=frames, arrival_rate=arrival))
        assert est == pytest.approx(two_point_decay(p, s, arrival), rel=0.15)

    def test_exponential_service_explicit_grid(self):
        # exponential(1) service, arrival A: decay solves exp(theta A)/(1 + theta) = 1
        frames, arrival = 2 * 10**6, 0.8
        svc = np.random.default_rng(4).exponential(size=frames)
        exact = optimize.brentq(lambda t: t * arrival - math.log1p(t), 1e-6, 10.0)
        cfg = SimConfig(frames=frames, arrival_rate=arrival, q_grid=tuple(np.linspace(2, 16, 15)))
        fit = fit_tail(svc, cfg)
        assert fit.rate == pytest.approx(exact, rel=0.15)
        assert np.all(fit.entries >= 30) and np.all(fit.counts >= fit.entries)
        assert len(fit.batch_rates) == 10

    def test_capacity_arrival_meets_theta(self, fig2_sc):
        frames = 2 * 10**6
        svc, res = service_for_mode(FIG2, fig2_sc, OPTIMAL, frames, seed=0)
        capacity = FIG2.frame * FIG2.bandwidth * res.r_e
        decay = estimate_decay_rate(svc, SimConfig(frames=frames, arrival_rate=capacity))
        assert decay >= 0.85 * FIG2.theta

    def test_doubled_theta_not_met_at_old_capacity(self, fig2_sc):
        frames = 2 * 10**6
        svc, res = service_for_mode(FIG2, fig2_sc, OPTIMAL, frames, seed=0)
        capacity = FIG2.frame * FIG2.bandwidth * res.r_e
        decay = estimate_decay_rate(svc, SimConfig(frames=frames, arrival_rate=capacity))
        assert decay < 2 * FIG2.theta


class TestValidation:
    def test_report_and_reproducibility(self, fig2_sc):
        cfg = SimConfig(frames=2 * 10**6, seed=0)
        rep = validate_effective_capacity(FIG2, fig2_sc, OPTIMAL, cfg)
        assert rep.check(0.9).decay > FIG2.theta
        assert [c.factor for c in rep.checks] == [0.9, 0.99, 1.01]
        assert any("result" in line for line in rep.lines())
        with ThreadPoolExecutor(max_workers=2) as pool:
            again = list(pool.map(lambda _: validate_effective_capacity(FIG2, fig2_sc, OPTIMAL,
                                                                        cfg), range(2)))
        assert again[0] == rep and again[1] == rep

    def test_overloaded_flags_instability(self, fig2_sc):
        cfg = SimConfig(frames=100_000, seed=1)
        rep = validate_effective_capacity(FIG2, fig2_sc, FIXED, cfg, factors=(0.9, 50.0))
        assert rep.check(50.0).unstable
        with pytest.raises(KeyError):
            rep.check(2.0)

    def test_rejects_zero_theta(self, fig2_sc):
        with pytest.raises(ValueError):
            validate_effective_capacity(FIG2, fig2_sc, OPTIMAL, SimConfig(frames=10), theta=0.0)


@pytest.mark.parametrize("kw", [dict(frames=10, warmup=10), dict(frames=10, warmup=0,
                                                                 arrival_rate=-1.0),
                                dict(frames=10, warmup=0, q_grid=(2.0, 1.0))])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)
