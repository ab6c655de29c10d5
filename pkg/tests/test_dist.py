"""Cost laws: sampling, CDF round trips, and the conditional floor mean."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from threshold_mech import CostDistribution

UNI = CostDistribution("uniform", 1.0, 5.0)
BETA_LEFT = CostDistribution("scaled_beta", 1.0, 5.0, alpha=2.0, beta=5.0)
BETA_RIGHT = CostDistribution("scaled_beta", 1.0, 5.0, alpha=5.0, beta=2.0)


def beta_pdf_unit(u: float, a: float, b: float) -> float:
    """Hand-rolled Beta density on [0, 1] (oracle; avoids scipy.special)."""
    norm = math.gamma(a) * math.gamma(b) / math.gamma(a + b)
    return u ** (a - 1.0) * (1.0 - u) ** (b - 1.0) / norm


def beta_cdf_quadrature(u: float, a: float, b: float) -> float:
    val, _ = integrate.quad(beta_pdf_unit, 0.0, u, args=(a, b), epsabs=1e-12)
    return val


def beta_quantile_bisect(q: float, a: float, b: float) -> float:
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-10:
        mid = 0.5 * (lo + hi)
        if beta_cdf_quadrature(mid, a, b) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestParsing:
    def test_round_trip_specs(self):
        for spec in ("uniform:1,5", "beta:2,5:1,5", "beta:5,2:1,5"):
            assert CostDistribution.from_spec(spec).spec() == spec

    @pytest.mark.parametrize("bad", ["gauss:0,1", "uniform:5,1", "beta:2,5",
                                     "uniform:a,b", ""])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ValueError):
            CostDistribution.from_spec(bad)

    def test_non_log_concave_shapes_warn(self):
        with pytest.warns(UserWarning):
            CostDistribution("scaled_beta", 1.0, 5.0, alpha=0.5, beta=2.0)


class TestSampling:
    def test_rescale_endpoints(self):
        # underlying draws of 0 and 1 map to the support endpoints
        u = np.array([0.0, 1.0])
        assert BETA_LEFT.transform_uniforms(u) == pytest.approx([1.0, 5.0])
        assert UNI.transform_uniforms(u) == pytest.approx([1.0, 5.0])

    def test_uniform_mean_large_sample(self):
        rng = np.random.default_rng(7)
        x = UNI.sample(rng, 1_000_000)
        assert abs(x.mean() - 3.0) < 0.01

    @pytest.mark.parametrize("dist", [UNI, BETA_LEFT, BETA_RIGHT])
    def test_support_respected(self, dist):
        rng = np.random.default_rng(11)
        x = dist.sample(rng, 1_000_000)
        assert x.min() >= dist.c_low and x.max() <= dist.c_high

    def test_deterministic_given_stream(self):
        a = UNI.sample(np.random.default_rng(3), 100)
        b = UNI.sample(np.random.default_rng(3), 100)
        assert np.array_equal(a, b)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            UNI.sample(np.random.default_rng(0), 0)


class TestCdf:
    def test_uniform_midpoint(self):
        assert UNI.cdf(3.0) == 0.5

    def test_uniform_quantile_closed_form(self):
        # the pivotal-peak anchor for n=50, m=10
        q = 10.0 / 49.0
        assert UNI.inv_cdf(q) == pytest.approx(1.0 + 4.0 * q, abs=1e-12)
        assert UNI.inv_cdf(q) == pytest.approx(1.81633, abs=1e-5)

    def test_beta_median_matches_quadrature_bisection(self):
        want = 1.0 + 4.0 * beta_quantile_bisect(0.5, 2.0, 5.0)
        assert BETA_LEFT.inv_cdf(0.5) == pytest.approx(want, abs=1e-6)

    @pytest.mark.parametrize("dist", [UNI, BETA_LEFT, BETA_RIGHT])
    def test_round_trip(self, dist):
        # points drawn from the law itself; the flat density tails where the
        # quantile map is ill-conditioned carry no mass
        rng = np.random.default_rng(23)
        c = dist.sample(rng, 1000)
        back = np.array([dist.inv_cdf(dist.cdf(v)) for v in c])
        assert np.max(np.abs(back - c)) < 1e-9

    def test_monotone(self):
        qs = np.linspace(0.0, 1.0, 101)
        for dist in (UNI, BETA_LEFT):
            vals = np.array([dist.inv_cdf(q) for q in qs])
            assert np.all(np.diff(vals) >= 0.0)

    def test_inv_cdf_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            UNI.inv_cdf(1.5)
        with pytest.raises(ValueError):
            UNI.inv_cdf(-0.1)


class TestFloorMeanTail:
    def test_zero_subsidy(self):
        for a in (1.0, 2.5, 4.9):
            assert UNI.floor_mean_tail(a, 0.0) == 0.0

    def test_uniform_closed_form_mid(self):
        want = 0.05 * (math.log(5.0) - math.log(3.0)) / 2.0
        got = UNI.floor_mean_tail(3.0, 0.05)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(0.0127707, abs=1e-6)

    def test_uniform_closed_form_full_support(self):
        want = 0.05 * math.log(5.0) / 4.0
        got = UNI.floor_mean_tail(1.0, 0.05)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(0.0201180, abs=1e-6)

    @pytest.mark.parametrize("dist", [UNI, BETA_LEFT, BETA_RIGHT])
    @pytest.mark.parametrize("a", [1.0, 1.7, 3.0, 4.5])
    def test_matches_quadrature(self, dist, a):
        p = 0.3

        def integrand(c):
            if dist.kind == "uniform":
                f = 1.0 / 4.0
            else:
                f = beta_pdf_unit((c - 1.0) / 4.0, dist.alpha, dist.beta) / 4.0
            return (p / c) * f

        tail = 1.0 - dist.cdf(a)
        want, _ = integrate.quad(integrand, a, 5.0, epsabs=1e-12)
        assert dist.floor_mean_tail(a, p) == pytest.approx(want / tail, abs=1e-8)

    @pytest.mark.parametrize("dist", [UNI, BETA_LEFT])
    def test_decreasing_in_cutoff(self, dist):
        grid = np.linspace(1.0, 4.95, 60)
        vals = np.array([dist.floor_mean_tail(a, 0.4) for a in grid])
        assert np.all(np.diff(vals) < 0.0)

    def test_cutoff_at_upper_end_rejected(self):
        with pytest.raises(ValueError):
            UNI.floor_mean_tail(5.0, 0.05)

    def test_subsidy_above_support_clamps_and_warns(self):
        with pytest.warns(UserWarning):
            got = UNI.floor_mean_tail(1.0, 2.0)
        # integrand min(p/c, 1) == 1 on [1, 2], p/c beyond

        def integrand(c):
            return min(2.0 / c, 1.0) / 4.0

        want, _ = integrate.quad(integrand, 1.0, 5.0, epsabs=1e-12)
        assert got == pytest.approx(want / 1.0, abs=1e-8)
