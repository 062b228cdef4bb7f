"""Scaled jump profiles, convolution-series kernels, starting measures,
and the small-jump convergence experiment."""

import math

import numpy as np
import pytest
from scipy.special import ndtr

from freedyn.functions import TestFunction
from freedyn.kernels import GaussianProfile, KawasakiKernel
from freedyn.pointproc import RngStream
from freedyn.scaling import (
    NeymanScottMeasure,
    PoissonMeasure,
    g_t_series,
    run_scaling_experiment,
    scale_profile,
    verify_mu_conditions,
)
from freedyn.space import Domain


T100 = Domain.torus(1, 100.0)


class TestScaleProfile:
    def test_eps_one_unchanged(self):
        base = GaussianProfile(1, 1.0, 0.7)
        scaled = scale_profile(base, 1.0)
        xs = np.linspace(-3, 3, 31)[:, None]
        assert np.allclose(scaled.density(xs), base.density(xs))

    def test_gaussian_maps_to_gaussian(self):
        base = GaussianProfile(1, 2.0, 0.7)
        scaled = scale_profile(base, 0.25)
        assert scaled.profile.mass == pytest.approx(2.0)
        assert scaled.profile.std == pytest.approx(0.7 / 0.25)

    def test_definition_pointwise(self):
        # scaled(x) = eps^d * base(eps x)
        base = GaussianProfile(1, 1.5, 1.1)
        eps = 0.4
        scaled = scale_profile(base, eps)
        xs = np.linspace(-8, 8, 41)[:, None]
        assert np.allclose(scaled.density(xs), eps * base.density(eps * xs))

    def test_mass_invariant_by_quadrature(self):
        from scipy import integrate

        base = GaussianProfile(1, 1.0, 1.0)
        for eps in (0.1, 0.5, 2.0):
            scaled = scale_profile(base, eps)
            half = 12.0 / eps  # 12 standard deviations of the stretched profile
            mass, _ = integrate.quad(
                lambda x: scaled.density(np.array([[x]]))[0], -half, half,
                epsabs=1e-10, limit=400,
            )
            assert mass == pytest.approx(1.0, abs=1e-8)

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            scale_profile(GaussianProfile(1, 1.0, 1.0), 0.0)


class TestGtSeries:
    def test_mean_identity(self):
        series = g_t_series(GaussianProfile(1, 1.0, 0.7), 1.0, tol=1e-10)
        assert series.mean == pytest.approx(1.0 - math.exp(-1.0), abs=1e-9)
        assert series.mean_target == pytest.approx(1.0 - math.exp(-1.0), abs=1e-15)

    def test_short_time_mean_vanishes(self):
        series = g_t_series(GaussianProfile(1, 1.0, 0.7), 1e-8, tol=1e-12)
        assert series.mean == pytest.approx(0.0, abs=1e-7)

    def test_remainder_accounting_exact(self):
        series = g_t_series(GaussianProfile(1, 2.0, 0.5), 0.8, tol=1e-6)
        assert series.mean_target - series.mean == pytest.approx(
            series.remainder_mass, abs=1e-15
        )
        assert series.remainder_mass <= 1e-6 * 1.5  # tol up to the peak factor

    def test_density_integrates_to_mean(self):
        series = g_t_series(GaussianProfile(1, 1.0, 0.7), 1.0, tol=1e-10)
        xs = np.linspace(-12, 12, 200001)
        total = np.trapezoid(series.density(xs[:, None]), xs)
        assert total == pytest.approx(series.mean, abs=1e-8)

    def test_convolution_powers_closed_form(self):
        # n-fold self-convolution of a Gaussian(mass lam, std s) has
        # mass lam^n and std s*sqrt(n); check the series against a direct sum
        lam, s, t = 1.0, 0.7, 0.9
        series = g_t_series(GaussianProfile(1, lam, s), t, tol=1e-12)
        x = 0.35
        direct = 0.0
        for n in range(1, 80):
            w = math.exp(-lam * t + n * math.log(lam * t) - math.lgamma(n + 1))
            var = n * s * s
            direct += w * math.exp(-x * x / (2 * var)) / math.sqrt(2 * math.pi * var)
        assert series.density(np.array([[x]]))[0] == pytest.approx(direct, abs=1e-10)

    def test_density_against_jump_sampler(self):
        # Monte Carlo kernel-density estimate of the displacement law at 0,
        # conditioned on moving, matches the series density within 3 sigma
        lam, s, t = 1.0, 0.7, 1.0
        series = g_t_series(GaussianProfile(1, lam, s), t, tol=1e-10)
        kernel = KawasakiKernel(Domain.fullspace((-30.0,), (30.0,)), GaussianProfile(1, lam, s))
        gen = RngStream(42).generator()
        n = 200000
        out, _ = kernel.propagate_batch(np.zeros((n, 1)), np.full(n, t), gen)
        h = 0.05
        hits = np.abs(out[:, 0]) < h  # window around the origin, movers only
        moved = out[:, 0] != 0.0
        est_vals = (hits & moved) / (2 * h)
        mean = est_vals.mean()
        se = est_vals.std(ddof=1) / math.sqrt(n)
        # compare against the bin average of the series density
        xs = np.linspace(-h, h, 501)
        target = np.trapezoid(series.density(xs[:, None]), xs) / (2 * h)
        assert abs(mean - target) <= 3 * se + 1e-3


class TestPoissonMeasure:
    def test_first_correlation_is_intensity(self):
        m = PoissonMeasure(T100, 1.5)
        assert m.k1 == pytest.approx(1.5)

    def test_sample_counts(self):
        m = PoissonMeasure(T100, 1.0)
        rng = RngStream(1)
        counts = [len(m.sample(rng.child(i))) for i in range(2000)]
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(mean - 100.0) <= 3 * se

    def test_product_functional_closed_form(self):
        m = PoissonMeasure(T100, 2.0)
        phi = TestFunction.box(-0.5, (10.0,), (14.0,))
        val = m.expected_product_functional([(1.0, phi)], tol=1e-10)
        assert val == pytest.approx(math.exp(2.0 * phi.integral()), abs=1e-10)


class TestNeymanScottMeasure:
    MEAS = NeymanScottMeasure(T100, 2.0 / 3.0, 0.5, 0.25)

    def test_first_correlation(self):
        assert self.MEAS.k1 == pytest.approx(1.0)

    def test_pair_ursell_closed_form(self):
        # u2(r) = 2 rho q N(r; 0, 2 sigma_c^2)
        r = 0.3
        var = 2 * 0.25**2
        expected = 2 * (2.0 / 3.0) * 0.5 * math.exp(-r * r / (2 * var)) / math.sqrt(
            2 * math.pi * var
        )
        assert self.MEAS.u2(r) == pytest.approx(expected, rel=1e-12)

    def test_sampler_intensity(self):
        rng = RngStream(2)
        counts = [len(self.MEAS.sample(rng.child(i))) for i in range(2000)]
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(mean - 100.0) <= 3 * se

    def test_sampler_pair_moment(self):
        # E[N(N-1)] = (k1 V)^2 + V * integral(u2) = 10000 + 100 * 2 rho q
        rng = RngStream(3)
        vals = []
        for i in range(4000):
            n = len(self.MEAS.sample(rng.child(i)))
            vals.append(n * (n - 1))
        mean = np.mean(vals)
        se = np.std(vals, ddof=1) / math.sqrt(len(vals))
        expected = 10000.0 + 100.0 * 2 * (2.0 / 3.0) * 0.5
        assert abs(mean - expected) <= 3 * se

    def test_product_functional_against_trapezoid(self):
        # independent oracle: E prod(1+F) = exp[rho int((1+q)G + q G^2)]
        # with G the Gaussian-smoothed F, smoothing variance sigma_c^2
        phi = TestFunction.box(-0.5, (48.0,), (52.0,))
        val = self.MEAS.expected_product_functional([(1.0, phi)], tol=1e-10)
        c = np.linspace(0.0, 100.0, 200001)
        s = 0.25
        G = -0.5 * (ndtr((52.0 - c) / s) - ndtr((48.0 - c) / s))
        rho, q = 2.0 / 3.0, 0.5
        oracle = math.exp(rho * np.trapezoid((1 + q) * G + q * G * G, c))
        assert val == pytest.approx(oracle, abs=1e-9)

    def test_product_functional_against_monte_carlo(self):
        phi = TestFunction.box(-0.5, (48.0,), (52.0,))
        val = self.MEAS.expected_product_functional([(1.0, phi)], tol=1e-10)
        gen = RngStream(4).generator()
        pts, ids = self.MEAS.sample_batch(30000, gen)
        acc = np.zeros(30000)
        vals = phi(pts)
        np.add.at(acc, ids, np.log1p(vals))
        mc = np.exp(acc)
        mean, se = mc.mean(), mc.std(ddof=1) / math.sqrt(len(mc))
        assert abs(mean - val) <= 3.5 * se


class TestMuConditions:
    def test_poisson_admissible(self):
        rep = verify_mu_conditions(PoissonMeasure(T100, 1.0))
        assert rep.admissible
        assert rep.growth_exponent == 0.0
        assert rep.translation_invariant

    def test_neyman_scott_admissible(self):
        rep = verify_mu_conditions(NeymanScottMeasure(T100, 2.0 / 3.0, 0.5, 0.25))
        assert rep.admissible
        assert rep.growth_holds
        assert rep.decay_holds
        # probe values must actually decay
        probes = list(rep.decay_probe)
        assert all(a >= b for a, b in zip(probes, probes[1:]))

    def test_report_serializes(self):
        import json

        rep = verify_mu_conditions(PoissonMeasure(T100, 1.0))
        json.dumps(rep.to_dict())


class TestRunScalingExperiment:
    def test_zero_functions_degenerate(self):
        zero = TestFunction.box(0.0, (48.0,), (52.0,))
        rep = run_scaling_experiment(
            PoissonMeasure(T100, 1.0),
            GaussianProfile(1, 1.0, 1.0),
            times=(0.5,),
            phi_list=(zero,),
            eps_schedule=(1.0, 0.5),
            n_samples=200,
            rng=RngStream(5),
        )
        assert rep.target == pytest.approx(1.0)
        assert all(e == pytest.approx(1.0) for e in rep.estimates)

    def test_single_time_poisson_stationary(self):
        # both dynamics preserve the Poisson law, so every eps estimate and
        # the target sit at exp(z <phi>) up to Monte Carlo noise
        phi = TestFunction.box(-0.5, (48.0,), (52.0,))
        z = 1.0
        rep = run_scaling_experiment(
            PoissonMeasure(T100, z),
            GaussianProfile(1, 1.0, 1.0),
            times=(0.5,),
            phi_list=(phi,),
            eps_schedule=(1.0, 0.25),
            n_samples=4000,
            rng=RngStream(6),
        )
        target = math.exp(z * phi.integral())
        assert rep.target == pytest.approx(target, abs=1e-8)
        for est, se in zip(rep.estimates, rep.stderrs):
            assert abs(est - target) <= 3.5 * se

    def test_thread_count_invariance(self):
        phi = TestFunction.box(-0.5, (48.0,), (52.0,))
        kwargs = dict(
            measure=PoissonMeasure(T100, 1.0),
            profile=GaussianProfile(1, 1.0, 1.0),
            times=(0.5, 1.0),
            phi_list=(phi, phi),
            eps_schedule=(1.0, 0.5),
            n_samples=3000,
        )
        a = run_scaling_experiment(rng=RngStream(7), threads=1, **kwargs)
        b = run_scaling_experiment(rng=RngStream(7), threads=4, **kwargs)
        assert a.estimates == b.estimates
        assert a.stderrs == b.stderrs

    def test_report_roundtrips(self):
        import json

        phi = TestFunction.box(-0.5, (48.0,), (52.0,))
        rep = run_scaling_experiment(
            PoissonMeasure(T100, 1.0),
            GaussianProfile(1, 1.0, 1.0),
            times=(0.5,),
            phi_list=(phi,),
            eps_schedule=(1.0,),
            n_samples=500,
            rng=RngStream(8),
        )
        json.loads(rep.to_json())
        lines = rep.to_csv().strip().splitlines()
        assert lines[0] == "eps,estimate,stderr,target,distance"
        assert len(lines) == 2
