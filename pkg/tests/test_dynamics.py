"""Multi-particle evolution, immigration, birth-and-death, event streams."""

import math

import numpy as np
import pytest

from freedyn.dynamics import (
    Buffer,
    EvolutionPlan,
    GlauberDynamics,
    TorusExact,
    event_stream,
    evolve_snapshot,
    evolve_with_immigration,
    glauber_evolve,
)
from freedyn.kernels import BrownianKernel, DeathKernel, GaussianProfile, KawasakiKernel
from freedyn.pointproc import Configuration, RngStream, sample_poisson
from freedyn.space import Domain


D1 = Domain.fullspace((0.0,), (5.0,))
T1 = Domain.torus(1, 5.0)


def fixed_config(n, domain=D1):
    lo, hi = domain.lower[0], domain.upper[0]
    xs = np.linspace(lo + 0.01, hi - 0.01, n)
    return Configuration(xs[:, None], domain)


class TestEvolveSnapshot:
    def test_near_zero_time_is_identity(self):
        cfg = fixed_config(10)
        for kernel in (DeathKernel(D1, 1.0), KawasakiKernel(D1, GaussianProfile(1, 1.0, 0.5))):
            plan = EvolutionPlan(times=(1e-12,), boundary=Buffer(width=0.5, intensity=0.0))
            snaps = evolve_snapshot(cfg, kernel, plan, RngStream(1))
            assert np.allclose(snaps[0].points, cfg.points, atol=1e-5)
            assert len(snaps[0]) == len(cfg)

    def test_death_kernel_binomial_survivors(self):
        # 100 points, t = ln 2: each survives with probability 1/2
        cfg = fixed_config(100)
        kernel = DeathKernel(D1, 1.0)
        plan = EvolutionPlan(times=(math.log(2.0),), boundary=Buffer(width=0.0, intensity=0.0))
        rng = RngStream(2)
        counts = [len(evolve_snapshot(cfg, kernel, plan, rng.child(i))[0]) for i in range(2000)]
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(mean - 50.0) <= 3 * se

    def test_torus_kawasaki_count_conserved(self):
        cfg = fixed_config(20, T1)
        kernel = KawasakiKernel(T1, GaussianProfile(1, 1.0, 0.5))
        plan = EvolutionPlan(times=(0.5, 1.0, 2.0), boundary=TorusExact())
        snaps = evolve_snapshot(cfg, kernel, plan, RngStream(3))
        assert [len(s) for s in snaps] == [20, 20, 20]

    def test_snapshots_stay_simple(self):
        cfg = fixed_config(30, T1)
        kernel = KawasakiKernel(T1, GaussianProfile(1, 1.0, 0.5))
        plan = EvolutionPlan(times=(0.5, 1.0), boundary=TorusExact())
        for i in range(20):
            for snap in evolve_snapshot(cfg, kernel, plan, RngStream(100 + i)):
                pts = snap.points
                assert len(np.unique(pts, axis=0)) == len(pts)


class TestImmigration:
    def test_empty_start_mean_count(self):
        # birth-death ODE: m(t) = z*V*(1 - exp(-t)); t=10 is effectively inf
        empty = Configuration(np.empty((0, 1)), D1)
        kernel = DeathKernel(D1, 1.0)
        plan = EvolutionPlan(
            times=(10.0,),
            mode="submarkov_immigration",
            immigration_intensity=2.0,
            boundary=Buffer(width=0.0, intensity=0.0),
        )
        rng = RngStream(4)
        counts = [
            len(evolve_with_immigration(empty, kernel, 2.0, plan, rng.child(i))[0])
            for i in range(2000)
        ]
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        expected = 2.0 * 5.0 * (1.0 - math.exp(-10.0))
        assert abs(mean - expected) <= 3 * se

    def test_intermediate_time_mean(self):
        empty = Configuration(np.empty((0, 1)), D1)
        kernel = DeathKernel(D1, 1.0)
        plan = EvolutionPlan(
            times=(0.5,),
            mode="submarkov_immigration",
            immigration_intensity=2.0,
            boundary=Buffer(width=0.0, intensity=0.0),
        )
        rng = RngStream(5)
        counts = [
            len(evolve_with_immigration(empty, kernel, 2.0, plan, rng.child(i))[0])
            for i in range(3000)
        ]
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        expected = 10.0 * (1.0 - math.exp(-0.5))
        assert abs(mean - expected) <= 3 * se


class TestGlauberEvolve:
    def test_pure_death_thinning(self):
        cfg = fixed_config(50)
        plan = EvolutionPlan(times=(0.3, 0.9, 2.0), boundary=Buffer(width=0.0, intensity=0.0))
        snaps = glauber_evolve(cfg, 1.0, 0.0, plan, RngStream(6))
        counts = [len(s) for s in snaps]
        assert counts[0] >= counts[1] >= counts[2]
        # survivors are a subset of the start
        start = {tuple(p) for p in cfg.points}
        for s in snaps:
            assert {tuple(p) for p in s.points} <= start

    def test_zero_rate_frozen(self):
        cfg = fixed_config(15)
        plan = EvolutionPlan(times=(1.0, 4.0), boundary=Buffer(width=0.0, intensity=0.0))
        snaps = glauber_evolve(cfg, 0.0, 1.0, plan, RngStream(7))
        for s in snaps:
            assert np.array_equal(np.sort(s.points, axis=0), np.sort(cfg.points, axis=0))

    def test_poisson_invariance_intensity(self):
        # start Poisson(z), a=1: intensity stays z
        z = 2.0
        rng = RngStream(8)
        plan = EvolutionPlan(times=(1.0,), boundary=Buffer(width=0.0, intensity=0.0))
        counts = []
        for i in range(3000):
            start = sample_poisson(D1, z, rng.child(0, i))
            counts.append(len(glauber_evolve(start, 1.0, z, plan, rng.child(1, i))[0]))
        mean = np.mean(counts)
        se = np.std(counts, ddof=1) / math.sqrt(len(counts))
        assert abs(mean - z * 5.0) <= 3 * se


class TestEventStream:
    def test_empty_start_no_immigration(self):
        empty = Configuration(np.empty((0, 1)), D1)
        stream = event_stream(empty, GlauberDynamics(1.0, 0.0), 5.0, RngStream(9))
        assert len(stream.events) == 0

    def test_glauber_birth_rate(self):
        empty = Configuration(np.empty((0, 1)), D1)
        rng = RngStream(10)
        births = []
        for i in range(2000):
            stream = event_stream(empty, GlauberDynamics(1.0, 1.0), 2.0, rng.child(i))
            births.append(sum(1 for e in stream.events if e.kind == "birth"))
        mean = np.mean(births)
        se = np.std(births, ddof=1) / math.sqrt(len(births))
        assert abs(mean - 10.0) <= 3 * se  # a*z*V*T = 1*1*5*2

    def test_kawasaki_jump_rate(self):
        cfg = fixed_config(10, T1)
        kernel = KawasakiKernel(T1, GaussianProfile(1, 1.0, 0.5))
        rng = RngStream(11)
        jumps = []
        for i in range(1500):
            stream = event_stream(cfg, kernel, 2.0, rng.child(i))
            jumps.append(sum(1 for e in stream.events if e.kind == "jump"))
        mean = np.mean(jumps)
        se = np.std(jumps, ddof=1) / math.sqrt(len(jumps))
        assert abs(mean - 20.0) <= 3 * se  # n*lambda*T

    def test_times_nondecreasing_and_snapshot_consistent(self):
        cfg = fixed_config(8)
        stream = event_stream(cfg, GlauberDynamics(1.0, 1.0), 3.0, RngStream(12))
        times = [e.time for e in stream.events]
        assert times == sorted(times)
        snap = stream.snapshot(cfg, 3.0)
        births = sum(1 for e in stream.events if e.kind == "birth")
        deaths = sum(1 for e in stream.events if e.kind == "death")
        assert len(snap) == len(cfg) + births - deaths

    def test_jsonl_roundtrip(self):
        import json

        cfg = fixed_config(5)
        stream = event_stream(cfg, GlauberDynamics(1.0, 1.0), 1.0, RngStream(13))
        lines = stream.to_jsonl().strip().splitlines()
        head = json.loads(lines[0])
        assert head["horizon"] == 1.0
        for line in lines[1:]:
            rec = json.loads(line)
            assert rec["event"] in ("birth", "death", "jump")


class TestMarkovPropertyInLaw:
    def test_two_step_equals_one_step(self):
        # evolve to 0.4 then fresh evolve to 0.6 vs directly to 1.0:
        # single-time empirical Laplace functionals agree within 3 sigma
        from freedyn.functions import TestFunction
        from freedyn.observables import empirical_laplace

        phi = TestFunction.box(-0.5, (1.0,), (3.0,))
        kernel = KawasakiKernel(T1, GaussianProfile(1, 1.0, 0.5))
        cfg = fixed_config(12, T1)
        rng = RngStream(14)
        n = 3000
        one, two = [], []
        for i in range(n):
            direct = evolve_snapshot(
                cfg, kernel, EvolutionPlan(times=(1.0,), boundary=TorusExact()), rng.child(0, i)
            )[0]
            mid = evolve_snapshot(
                cfg, kernel, EvolutionPlan(times=(0.4,), boundary=TorusExact()), rng.child(1, i)
            )[0]
            fin = evolve_snapshot(
                mid, kernel, EvolutionPlan(times=(0.6,), boundary=TorusExact()), rng.child(2, i)
            )[0]
            one.append([direct])
            two.append([fin])
        est1 = empirical_laplace(one, [phi])
        est2 = empirical_laplace(two, [phi])
        gap = abs(est1.mean - est2.mean)
        assert gap <= 3 * math.hypot(est1.stderr, est2.stderr)
