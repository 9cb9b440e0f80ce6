"""Monte-Carlo simulator checked against hand-derived closed forms.

The three-state model's live dynamics is the symmetric two-state chain
with generator [[-3/2, 1], [1, -3/2]], so every epoch quantity has an
elementary closed form; the simulator must reproduce them within
sampling error.  These closed forms are derived independently of both
the simulator and the analytic kernels.
"""
import math

import numpy as np
import pytest
from gmpy2 import mpq

from actmc.model import ModelError
from actmc.simulate import epoch_samples, simulate

from _models import t1, t1_variant, three_state


def dirac_theta(d: float) -> float:
    return 2.0 * (1.0 - math.exp(-d / 2))


def dirac_cost(d: float) -> float:
    return (
        5.0 * (1.0 - math.exp(-d / 2))
        - 0.4 * (1.0 - math.exp(-2.5 * d))
        + 2.0 * math.exp(-1.5 * d) * math.cosh(d)
    )


def dirac_pi_x(d: float) -> float:
    return (2.0 / 3.0) * math.exp(-1.5 * d) * math.sinh(d)


class TestSimulate:
    def test_t1_long_run_average(self):
        # always-firing timer: gain is d / (d + 1)
        m = t1()
        r = simulate(m, {"a": mpq(1, 2)}, horizon=2000.0, replications=10, seed=1)
        assert r.within(1 / 3), (r.mean, r.se)
        r = simulate(m, {"a": 2}, horizon=2000.0, replications=10, seed=1)
        assert r.within(2 / 3), (r.mean, r.se)

    def test_deterministic_under_seed(self):
        m = three_state()
        a = simulate(m, {"a": 1}, horizon=200.0, replications=4, seed=9)
        b = simulate(m, {"a": 1}, horizon=200.0, replications=4, seed=9)
        assert a == b
        c = simulate(m, {"a": 1}, horizon=200.0, replications=4, seed=10)
        assert c.mean != a.mean

    def test_missing_delay_rejected(self):
        with pytest.raises(ModelError, match="delay"):
            simulate(t1(), {}, horizon=10.0)

    def test_out_of_range_delay_rejected(self):
        with pytest.raises(ModelError, match="outside"):
            simulate(t1(), {"a": 10}, horizon=10.0)

    def test_needs_two_replications(self):
        with pytest.raises(ModelError, match="replications"):
            simulate(t1(), {"a": 1}, horizon=10.0, replications=1)


class TestEpochSamples:
    def test_t1_dirac_is_exact(self):
        samples = epoch_samples(t1(), "a", mpq(1, 2), count=2000, seed=3)
        assert np.allclose(samples.durations, 0.5, atol=1e-12)
        assert np.allclose(samples.costs, 0.5, atol=1e-12)
        assert all(samples.states[i] == "t" for i in samples.successors)

    @pytest.mark.parametrize("d", ["1/4", "3/2", "3"])
    def test_three_state_dirac_matches_closed_form(self, d):
        samples = epoch_samples(three_state(), "a", d, count=120_000, seed=11)
        x = float(mpq(d))
        assert abs(samples.mean_duration - dirac_theta(x)) <= 3 * samples.duration_se
        assert abs(samples.mean_cost - dirac_cost(x)) <= 3 * samples.cost_se
        # the successor split is the sharpest regression check on the
        # jump/firing bookkeeping
        assert abs(samples.successor_frequency("x") - dirac_pi_x(x)) <= (
            3 * samples.successor_se("x") + 1e-9
        )

    def test_three_state_uniform_matches_averaged_form(self):
        d = 1.5
        n = 4000
        grid = (np.arange(n) + 0.5) * d / n  # midpoint rule, smooth integrand
        theta = float(np.mean([dirac_theta(t) for t in grid]))
        pi_x = float(np.mean([dirac_pi_x(t) for t in grid]))
        samples = epoch_samples(three_state("uniform"), "a", "3/2", count=120_000, seed=12)
        assert abs(samples.mean_duration - theta) <= 3 * samples.duration_se
        assert abs(samples.successor_frequency("x") - pi_x) <= 3 * samples.successor_se("x")

    def test_uniform_mean_delay_when_never_absorbed(self):
        # the t1 chain never escapes, so the epoch duration is the timer
        samples = epoch_samples(t1_variant("uniform"), "a", 1, count=50_000, seed=5)
        assert abs(samples.mean_duration - 0.5) <= 3 * samples.duration_se

    def test_weibull_duration_distribution(self):
        # mean of the shape-k timer at parameter d is Gamma(1 + 1/k) / d
        m = t1_variant("weibull", shape=2)
        samples = epoch_samples(m, "a", "5/4", count=100_000, seed=8)
        expected = math.gamma(1.5) / 1.25
        assert abs(samples.mean_duration - expected) <= 3 * samples.duration_se

    def test_uniform_shift_duration_distribution(self):
        m = t1_variant("uniform-shift", window=mpq(1, 2))
        samples = epoch_samples(m, "a", 1, count=50_000, seed=6)
        assert abs(samples.mean_duration - 1.25) <= 3 * samples.duration_se
