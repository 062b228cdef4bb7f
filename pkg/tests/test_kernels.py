"""One-particle kernels: samplers, semigroups, tails, summability."""

import math

import numpy as np
import pytest
from scipy.special import ndtr

from freedyn.functions import TestFunction
from freedyn.kernels import (
    BrownianKernel,
    BumpProfile,
    DeathKernel,
    GaussianProfile,
    KawasakiKernel,
    KilledBrownianKernel,
    apply_semigroup,
    check_summability,
    default_buffer_width,
    exit_probability,
    kawasaki_polynomial_certificate,
    killing_profile,
    propagate,
    survival_probability,
    tail_bound,
)
from freedyn.pointproc import RngStream
from freedyn.space import Domain


D1 = Domain.fullspace((-10.0,), (10.0,))
D2 = Domain.fullspace((-10.0, -10.0), (10.0, 10.0))
BOX = TestFunction.box(-0.5, (-1.0,), (1.0,))


class TestPropagate:
    def test_brownian_identity_at_zero(self):
        fate = propagate(BrownianKernel(D1), np.array([1.25]), 0.0, RngStream(3))
        assert fate.alive
        assert np.array_equal(fate.position, [1.25])

    def test_death_survival_frequency(self):
        # a=1, t=ln2: survival probability 1/2
        kernel = DeathKernel(D1, 1.0)
        t = math.log(2.0)
        gen = RngStream(4).generator()
        x = np.zeros((20000, 1))
        _, alive = kernel.propagate_batch(x, np.full(20000, t), gen)
        p = alive.mean()
        se = math.sqrt(p * (1 - p) / len(alive))
        assert abs(p - 0.5) <= 3 * se

    def test_death_times_conditioned_below_t(self):
        kernel = DeathKernel(D1, 1.0)
        fate = propagate(kernel, np.array([0.0]), 0.05, RngStream(9))
        if not fate.alive:
            assert 0.0 <= fate.death_time <= 0.05

    def test_kawasaki_jump_count_mean(self):
        kernel = KawasakiKernel(D1, GaussianProfile(1, 1.0, 1.0))
        gen = RngStream(5).generator()
        counts = [len(kernel.jump_times(2.0, gen)) for _ in range(20000)]
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(mean - 2.0) <= 3 * se

    def test_negative_time_rejected(self):
        with pytest.raises(ValueError):
            propagate(BrownianKernel(D1), np.array([0.0]), -1.0, RngStream(1))


class TestSemigroup:
    def test_identity_at_zero(self):
        for kernel in (
            BrownianKernel(D1),
            DeathKernel(D1, 1.0),
            KawasakiKernel(D1, GaussianProfile(1, 1.0, 1.0)),
        ):
            assert apply_semigroup(kernel, BOX, 0.0, np.array([0.5])) == pytest.approx(-0.5)

    def test_death_closed_form(self):
        kernel = DeathKernel(D1, 1.0)
        phi = TestFunction.box(-0.5, (0.0,), (1.0,))
        val = apply_semigroup(kernel, phi, 1.0, np.array([0.5]))
        assert val == pytest.approx(-0.18393972058572117, abs=1e-12)

    def test_brownian_gaussian_cdf_oracle(self):
        val = apply_semigroup(BrownianKernel(D1), BOX, 1.0, np.array([0.0]))
        assert val == pytest.approx(-0.3413447460685429, abs=1e-8)

    def test_kawasaki_series_oracle(self):
        # independent oracle: Poisson mixture of box smoothed by n-fold
        # Gaussian convolutions, each term closed form via the normal CDF
        sigma, lam, t = 0.7, 1.0, 0.8
        kernel = KawasakiKernel(D1, GaussianProfile(1, lam, sigma))
        x = 0.3
        val = apply_semigroup(kernel, BOX, t, np.array([x]))
        mu = lam * t
        expected = math.exp(-mu) * BOX(np.array([[x]]))[0]
        for n in range(1, 60):
            w = math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))
            s = sigma * math.sqrt(n)
            smoothed = -0.5 * (ndtr((1.0 - x) / s) - ndtr((-1.0 - x) / s))
            expected += w * smoothed
        assert val == pytest.approx(expected, abs=1e-8)

    def test_brownian_chapman_kolmogorov_oracle(self):
        # T_{0.5} applied to the closed-form T_{0.5} box equals T_1 box
        x = 0.3
        direct = -0.5 * (ndtr((1.0 - x)) - ndtr((-1.0 - x)))
        ys = np.linspace(-8.0, 8.0, 40001)
        half = -0.5 * (ndtr((1.0 - ys) / math.sqrt(0.5)) - ndtr((-1.0 - ys) / math.sqrt(0.5)))
        heat = np.exp(-((x - ys) ** 2) / 1.0) / math.sqrt(math.pi)
        composed = np.trapezoid(half * heat, ys)
        assert composed == pytest.approx(direct, abs=1e-8)
        val = apply_semigroup(BrownianKernel(D1), BOX, 1.0, np.array([x]))
        assert val == pytest.approx(direct, abs=1e-8)

    def test_propagate_apply_consistency(self):
        # empirical mean of phi(X_t) matches the semigroup value
        t = 0.6
        x0 = 0.2
        n = 40000
        for kernel in (
            BrownianKernel(D1),
            KawasakiKernel(D1, GaussianProfile(1, 1.0, 0.7)),
            DeathKernel(D1, 1.0),
        ):
            gen = RngStream(31).generator()
            out, alive = kernel.propagate_batch(np.full((n, 1), x0), np.full(n, t), gen)
            vals = np.where(alive, BOX(out), 0.0)
            mean, se = vals.mean(), vals.std(ddof=1) / math.sqrt(n)
            target = apply_semigroup(kernel, BOX, t, np.array([x0]))
            assert abs(mean - target) <= 3 * se, kernel.variant


class TestSurvival:
    def test_conservative_kernels(self):
        assert survival_probability(BrownianKernel(D1), np.array([0.0]), 5.0) == 1.0
        kk = KawasakiKernel(D1, GaussianProfile(1, 2.0, 1.0))
        assert survival_probability(kk, np.array([0.0]), 5.0) == 1.0

    def test_death_rate_two(self):
        val = survival_probability(DeathKernel(D1, 2.0), np.array([0.0]), 1.0)
        assert val == pytest.approx(0.1353352832366127, abs=1e-12)

    def test_time_zero(self):
        for kernel in (DeathKernel(D1, 3.0), KilledBrownianKernel(D1, 1.0)):
            assert survival_probability(kernel, np.array([0.0]), 0.0) == pytest.approx(1.0)


class TestKillingProfile:
    def test_constant_rate(self):
        g = killing_profile(DeathKernel(D1, 1.0))
        assert g(np.array([[0.0], [3.0]])) == pytest.approx([1.0, 1.0])

    def test_conservative_zero(self):
        g = killing_profile(BrownianKernel(D1))
        assert g(np.array([[0.0]])) == pytest.approx([0.0])

    def test_indicator_rate(self):
        from freedyn.pointproc import BoundedField

        rate = BoundedField(lambda pts: 1.0 * (pts[:, 0] >= 0) * (pts[:, 0] < 1), 1.0)
        g = killing_profile(DeathKernel(D1, rate))
        assert g(np.array([[0.5], [2.0]])) == pytest.approx([1.0, 0.0])


class TestTailBound:
    def test_death_zero(self):
        assert tail_bound(DeathKernel(D1, 1.0), 1.0, 0.5) == 0.0

    def test_brownian_d2_closed_form(self):
        r = math.sqrt(2.0 * math.log(2.0))
        assert tail_bound(BrownianKernel(D2), 1.0, r) == pytest.approx(0.5, abs=1e-12)

    def test_brownian_r_to_zero(self):
        assert tail_bound(BrownianKernel(D1), 1.0, 1e-12) == pytest.approx(1.0)

    def test_nonincreasing_in_r(self):
        for kernel in (BrownianKernel(D1), KawasakiKernel(D1, GaussianProfile(1, 1.0, 0.7))):
            rs = np.linspace(0.1, 5.0, 25)
            bounds = [tail_bound(kernel, 0.5, r) for r in rs]
            assert all(b1 >= b2 - 1e-12 for b1, b2 in zip(bounds, bounds[1:]))
            assert all(0.0 <= b <= 1.0 for b in bounds)

    def test_dominates_empirical_tail(self):
        t, r, n = 0.5, 1.2, 40000
        for kernel in (BrownianKernel(D1), KawasakiKernel(D1, GaussianProfile(1, 1.0, 0.7))):
            gen = RngStream(77).generator()
            out, _ = kernel.propagate_batch(np.zeros((n, 1)), np.full(n, t), gen)
            freq = np.mean(np.abs(out[:, 0]) > r)
            se = math.sqrt(max(freq * (1 - freq), 1e-12) / n)
            assert freq <= tail_bound(kernel, t, r) + 3 * se


class TestKawasakiStructure:
    def test_atom_weight_formula(self):
        kernel = KawasakiKernel(D1, GaussianProfile(1, 2.0, 1.0))
        assert kernel.atom_weight(0.7) == pytest.approx(math.exp(-1.4), abs=1e-12)

    def test_displacement_symmetry(self):
        # jump law inherits the profile's symmetry: odd moments vanish
        kernel = KawasakiKernel(D1, GaussianProfile(1, 1.0, 0.7))
        gen = RngStream(21).generator()
        n = 40000
        out, _ = kernel.propagate_batch(np.zeros((n, 1)), np.full(n, 1.0), gen)
        disp = out[:, 0]
        stat = np.mean(disp**3)
        se = np.std(disp**3, ddof=1) / math.sqrt(n)
        assert abs(stat) <= 3 * se

    def test_clock_rate_is_profile_mass(self):
        kernel = KawasakiKernel(D1, BumpProfile(1, 1.7, 1.0))
        assert kernel.clock_rate == pytest.approx(1.7)


class TestSummability:
    def test_brownian_remainder_tiny(self):
        rep = check_summability(BrownianKernel(D1), alpha=1.0, m=1, epsilon=0.1, delta=1.0)
        assert rep.converges
        assert rep.remainder_bound < 1e-10

    def test_brownian_d2_geometric_oracle(self):
        # terms are exp(-n) exactly: radii n^(1/2), bound exp(-r^2/(2 eps))
        rep = check_summability(BrownianKernel(D2), alpha=1.0, m=2, epsilon=0.5, delta=1.0)
        total = rep.partial_sums[-1]
        assert total == pytest.approx(1.0 / (math.e - 1.0), abs=1e-12)
        assert total == pytest.approx(0.5819767068693262, abs=1e-14)
        assert rep.converges

    def test_death_all_zero(self):
        rep = check_summability(DeathKernel(D1, 1.0), alpha=1.0, m=1, epsilon=1.0, delta=1.0)
        assert rep.partial_sums[-1] == 0.0
        assert rep.converges

    def test_kawasaki_direct_frozen(self):
        kernel = KawasakiKernel(D1, GaussianProfile(1, 1.0, 0.7))
        rep = check_summability(kernel, alpha=2.0, m=1, epsilon=0.25, delta=1.0)
        assert rep.converges
        assert rep.partial_sums[-1] == pytest.approx(0.14728905667924624, rel=1e-10)
        assert rep.remainder_bound < 1e-10

    def test_partial_sums_nondecreasing(self):
        kernel = KawasakiKernel(D1, GaussianProfile(1, 1.0, 0.7))
        rep = check_summability(kernel, alpha=2.0, m=1, epsilon=0.25, delta=1.0)
        sums = np.asarray(rep.partial_sums)
        assert np.all(np.diff(sums) >= -1e-15)

    def test_report_serializes(self):
        import json

        rep = check_summability(BrownianKernel(D1), alpha=1.0, m=1, epsilon=0.1, delta=1.0)
        json.dumps(rep.to_dict())


class TestPolynomialCertificate:
    def test_gaussian_alpha_two_converges(self):
        cert = kawasaki_polynomial_certificate(GaussianProfile(1, 1.0, 0.7), alpha=2.0, m=1)
        assert cert.converges
        assert cert.remainder_bound == pytest.approx(0.012601661141931508, rel=1e-10)

    def test_alpha_equals_m_fails(self):
        cert = kawasaki_polynomial_certificate(GaussianProfile(1, 1.0, 0.7), alpha=1.0, m=1)
        assert not cert.converges


class TestExitProbability:
    def test_death_kernel_never_exits(self):
        est, se, bound = exit_probability(
            DeathKernel(D1, 1.0), np.array([0.0]), 1.0, 0.5, 2000, 0.01, RngStream(8)
        )
        assert est == 0.0

    def test_brownian_below_nelson_bound(self):
        for r, eps in ((1.0, 0.25), (2.0, 0.5)):
            est, se, bound = exit_probability(
                BrownianKernel(D1), np.array([0.0]), r, eps, 4000, eps / 200.0, RngStream(9)
            )
            assert est <= bound + 3 * se

    def test_kawasaki_union_bound_oracle(self):
        # lam*eps small, radius beyond the profile's effective support:
        # exits need a jump, so the estimate sits below 1 - exp(-lam*eps)
        kernel = KawasakiKernel(D1, GaussianProfile(1, 1.0, 0.5))
        eps, r = 0.1, 3.0
        est, se, bound = exit_probability(
            kernel, np.array([0.0]), r, eps, 20000, eps / 100.0, RngStream(10)
        )
        assert est <= (1.0 - math.exp(-eps)) + 3 * se
        assert est <= bound + 3 * se


def test_default_buffer_width_controls_leakage():
    kernel = BrownianKernel(D1)
    w = default_buffer_width(kernel, t_max=1.0, target=1e-4)
    assert tail_bound(kernel, 1.0, w) <= 1e-4 + 1e-15
