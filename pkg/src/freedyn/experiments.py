"""Replicated Monte Carlo experiments with deterministic chunked streams.

Every estimator here follows the same scheme: the replica budget is split
into fixed-size chunks, chunk i draws all of its randomness from the child
stream rng.child(i), chunks may run on a thread pool, and results are
reduced in chunk order.  The estimate is therefore a pure function of
(seed, budget), independent of the thread count.

The chunk workers are vectorized across replicas: a chunk holds one flat
point array plus a replica-id column, so 10^5 replicas of a 50-point
configuration cost a handful of array operations rather than 10^5 Python
loop iterations.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .kernels import killing_profile
from .observables import (analytic_laplace_markov, analytic_laplace_submarkov,
                          estimate_correlations, glauber_joint_laplace,
                          poisson_laplace_exponent)
from .pointproc import Configuration, parallel_map_ordered

CHUNK = 20000


def _chunk_sizes(n_samples, chunk=CHUNK):
    n_samples = int(n_samples)
    if n_samples < 2:
        raise ValueError("need at least 2 replicas")
    n_chunks = max(1, math.ceil(n_samples / int(chunk)))
    base, extra = divmod(n_samples, n_chunks)
    return [base + (1 if c < extra else 0) for c in range(n_chunks)]


def _run_chunks(worker, n_samples, rng, threads=1, chunk=CHUNK):
    """Concatenate per-chunk replica values in chunk order."""
    sizes = _chunk_sizes(n_samples, chunk)

    def task(c_idx):
        return worker(sizes[c_idx], rng.child(c_idx).generator())

    values = np.concatenate(parallel_map_ordered(task, len(sizes), threads))
    return values


def _mean_se(values):
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


@dataclass(frozen=True)
class ExperimentReport:
    """Monte Carlo estimate next to its analytic target."""

    kind: str
    estimate: float
    stderr: float
    analytic: float
    n_samples: int
    parameters: dict

    @property
    def abs_error(self):
        return abs(self.estimate - self.analytic)

    @property
    def sigma_distance(self):
        if self.stderr == 0.0:
            return 0.0 if self.abs_error == 0.0 else math.inf
        return self.abs_error / self.stderr

    @property
    def within_3sigma(self):
        return self.sigma_distance <= 3.0

    def to_dict(self):
        return {
            "kind": self.kind,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "analytic": self.analytic,
            "abs_error": self.abs_error,
            "sigma_distance": self.sigma_distance,
            "within_3sigma": self.within_3sigma,
            "n_samples": self.n_samples,
            "parameters": self.parameters,
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)


def _poisson_batch(domain, intensity, m, gen):
    lo, hi = domain.lower, domain.upper
    volume = float(np.prod(hi - lo))
    counts = gen.poisson(intensity * volume, size=m)
    pts = lo + (hi - lo) * gen.random((int(counts.sum()), domain.dim))
    ids = np.repeat(np.arange(m), counts)
    return pts, ids


def _pair_into(acc, ids, values):
    hit = values != 0.0
    if np.any(hit):
        acc += np.bincount(ids[hit], weights=values[hit], minlength=len(acc))
    return acc


def poisson_laplace_experiment(domain, intensity, phi, n_samples, rng,
                               threads=1, tol=1e-10):
    """Empirical E[exp<phi, gamma>] for Poisson gamma vs the closed form."""
    z = float(intensity)

    def worker(m, gen):
        pts, ids = _poisson_batch(domain, z, m, gen)
        acc = np.zeros(m)
        _pair_into(acc, ids, np.asarray(phi(pts), dtype=float))
        return np.exp(acc)

    values = _run_chunks(worker, n_samples, rng, threads)
    est, se = _mean_se(values)
    analytic = math.exp(poisson_laplace_exponent(phi, z, tol))
    return ExperimentReport(
        kind="poisson-laplace", estimate=est, stderr=se, analytic=analytic,
        n_samples=len(values),
        parameters={"intensity": z, "domain": domain.to_dict()})


def markov_laplace_experiment(kernel, config, phi, t, n_samples, rng,
                              threads=1, tol=1e-8):
    """Empirical E[prod over points of (1+phi(X_t))] vs prod (1+T_t phi)(x).

    The kernel must conserve particles; every replica moves an independent
    copy of the given configuration for time t.
    """
    if not kernel.conservative:
        raise ValueError("markov identity needs a conservative kernel")
    pts0 = config.points
    n0 = len(pts0)
    t = float(t)

    def worker(m, gen):
        pts = np.tile(pts0, (m, 1))
        ids = np.repeat(np.arange(m), n0)
        moved, _ = kernel.propagate_batch(pts, t, gen)
        acc = np.zeros(m)
        vals = np.asarray(phi(moved), dtype=float)
        _pair_into(acc, ids, np.log1p(vals))
        return np.exp(acc)

    values = _run_chunks(worker, n_samples, rng, threads)
    est, se = _mean_se(values)
    analytic = analytic_laplace_markov(kernel, config, phi, t, tol)
    return ExperimentReport(
        kind="markov-laplace", estimate=est, stderr=se, analytic=analytic,
        n_samples=len(values),
        parameters={"variant": kernel.variant, "t": t, "points": n0})


def _support_box(phi, pad):
    lo = np.asarray(phi.support_lo, dtype=float) - pad
    hi = np.asarray(phi.support_hi, dtype=float) + pad
    return lo, hi


def submarkov_laplace_experiment(kernel, config, phi, t, z, n_samples, rng,
                                 threads=1, tol=1e-8, birth_pad=0.0):
    """Sub-Markov evolution with immigration vs the two-factor closed form.

    Initial particles evolve (and possibly die) under the kernel; fresh
    particles arrive as a space-time Poisson stream with rate z times the
    killing rate and evolve from their birth times.  Immigrants are sampled
    on the support box of phi padded by birth_pad; for motionless kernels
    pad 0 is exact, for moving kernels pass a pad large enough that entering
    the support from outside is negligible at the tolerance in play.
    """
    if kernel.conservative:
        raise ValueError("immigration balances killing; kernel must kill")
    t = float(t)
    z = float(z)
    rate = killing_profile(kernel)
    pts0 = config.points
    n0 = len(pts0)
    lo, hi = _support_box(phi, birth_pad)
    box_vol = float(np.prod(hi - lo))

    def worker(m, gen):
        acc = np.zeros(m)
        # survivors of the initial configuration
        pts = np.tile(pts0, (m, 1))
        ids = np.repeat(np.arange(m), n0)
        moved, alive = kernel.propagate_batch(pts, t, gen)
        vals = np.log1p(np.asarray(phi(moved[alive]), dtype=float))
        _pair_into(acc, ids[alive], vals)
        # immigrant stream, thinned to rate z * a(x), then evolved to time t
        counts = gen.poisson(z * rate.bound * box_vol * t, size=m)
        total = int(counts.sum())
        if total:
            bids = np.repeat(np.arange(m), counts)
            bpts = lo + (hi - lo) * gen.random((total, len(lo)))
            keep = gen.random(total) * rate.bound < rate(bpts)
            btimes = t * gen.random(total)
            bids, bpts, btimes = bids[keep], bpts[keep], btimes[keep]
            if len(bpts):
                moved, alive = kernel.propagate_batch(bpts, t - btimes, gen)
                vals = np.log1p(np.asarray(phi(moved[alive]), dtype=float))
                _pair_into(acc, bids[alive], vals)
        return np.exp(acc)

    values = _run_chunks(worker, n_samples, rng, threads)
    est, se = _mean_se(values)
    analytic = analytic_laplace_submarkov(kernel, config, phi, t, z, tol)
    return ExperimentReport(
        kind="submarkov-laplace", estimate=est, stderr=se, analytic=analytic,
        n_samples=len(values),
        parameters={"variant": kernel.variant, "t": t, "z": z, "points": n0})


def glauber_joint_experiment(start, a_rate, z, times, phi_list, n_samples,
                             rng, threads=1, tol=1e-8):
    """Joint Laplace functional of birth-and-death dynamics vs closed form.

    start is a fixed Configuration, a Poisson intensity (float), or a
    starting-measure object with sample_batch.  The death rate must be a
    constant; lifetimes are exponential and births form a space-time
    Poisson stream with rate z * a.  Particles never move, so only births
    inside the union of the test-function supports can matter and the
    birth box is clipped accordingly (this is exact, not an approximation).
    """
    a = float(a_rate)
    z = float(z)
    if not a > 0:
        raise ValueError("death rate must be a positive constant")
    times = [float(u) for u in times]
    if any(u <= 0 for u in times) or any(v <= u for u, v in
                                         zip(times, times[1:])):
        raise ValueError("times must be strictly increasing and > 0")
    if len(phi_list) != len(times):
        raise ValueError("need one test function per time")
    t_max = times[-1]
    lo = np.min([p.support_lo for p in phi_list], axis=0)
    hi = np.max([p.support_hi for p in phi_list], axis=0)
    box_vol = float(np.prod(hi - lo))

    if isinstance(start, Configuration):
        def draw_initial(m, gen):
            n0 = len(start)
            return np.tile(start.points, (m, 1)), np.repeat(np.arange(m), n0)
        oracle_start = start
    elif isinstance(start, (int, float)):
        z0 = float(start)

        def draw_initial(m, gen):
            counts = gen.poisson(z0 * box_vol, size=m)
            pts = lo + (hi - lo) * gen.random((int(counts.sum()), len(lo)))
            return pts, np.repeat(np.arange(m), counts)
        oracle_start = z0
    else:
        def draw_initial(m, gen):
            return start.sample_batch(m, gen)
        oracle_start = start

    def worker(m, gen):
        pts0, ids0 = draw_initial(m, gen)
        death0 = gen.exponential(1.0 / a, size=len(pts0))
        counts = gen.poisson(z * a * box_vol * t_max, size=m)
        total = int(counts.sum())
        bids = np.repeat(np.arange(m), counts)
        bpts = lo + (hi - lo) * gen.random((total, len(lo)))
        btimes = t_max * gen.random(total)
        bdeath = btimes + gen.exponential(1.0 / a, size=total)
        acc = np.zeros(m)
        for t_i, phi_i in zip(times, phi_list):
            alive0 = death0 > t_i
            vals = np.log1p(np.asarray(phi_i(pts0[alive0]), dtype=float))
            _pair_into(acc, ids0[alive0], vals)
            aliveb = (btimes <= t_i) & (bdeath > t_i)
            vals = np.log1p(np.asarray(phi_i(bpts[aliveb]), dtype=float))
            _pair_into(acc, bids[aliveb], vals)
        return np.exp(acc)

    values = _run_chunks(worker, n_samples, rng, threads)
    est, se = _mean_se(values)
    analytic = glauber_joint_laplace(oracle_start, a, z, times, phi_list, tol)
    return ExperimentReport(
        kind="glauber-joint-laplace", estimate=est, stderr=se,
        analytic=analytic, n_samples=len(values),
        parameters={"death_rate": a, "immigration": z, "times": times})


def poisson_correlation_experiment(domain, intensity, order, bins_per_axis,
                                   n_samples, rng, threads=1):
    """Correlation-grid estimate on Poisson samples vs the constant z**n."""
    z = float(intensity)
    sizes = _chunk_sizes(n_samples)

    def task(c_idx):
        gen = rng.child(c_idx).generator()
        pts, ids = _poisson_batch(domain, z, sizes[c_idx], gen)
        return [Configuration(pts[ids == r], domain)
                for r in range(sizes[c_idx])]

    chunks = parallel_map_ordered(task, len(sizes), threads)
    samples = [cfg for chunk in chunks for cfg in chunk]
    grid = estimate_correlations(samples, order, bins_per_axis)
    return grid, z ** order
