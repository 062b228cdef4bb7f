"""Laplace functionals, correlation estimation, Ursell conversion, generators.

The verification layer: empirical Laplace functionals of simulated snapshots
against their closed forms (product form for conservative kernels, the
two-factor form for killing with immigration, and the birth-and-death joint
multi-time form), factorial-moment estimation of correlation functions on
bin grids, exact set-partition conversion between correlation and Ursell
tables, and the three generators with finite-difference consistency checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .dynamics import Buffer, EvolutionPlan, GlauberDynamics, TorusExact, \
    evolve_snapshot, glauber_evolve
from .functions import integrate_function
from .pointproc import Configuration, as_field

QUAD_TOL = 1e-8


# ---------------------------------------------------------------------------
# pairings and empirical Laplace functionals

def pairing(phi, config):
    """Sum of phi over the configuration's points (0 for the empty one)."""
    if len(config) == 0:
        return 0.0
    return float(np.sum(phi(config.points)))


def _log1p_pairing(phi, config):
    if len(config) == 0:
        return 0.0
    vals = np.asarray(phi(config.points), dtype=float)
    if np.any(vals <= -1.0):
        raise ValueError("test function leaves class D: some value <= -1")
    return float(np.sum(np.log1p(vals)))


def _describe_phi(phi):
    fam = getattr(phi, "family", type(phi).__name__)
    desc = {"family": fam}
    for key in ("level", "support_lo", "support_hi", "params"):
        val = getattr(phi, key, None)
        if val is None:
            continue
        if isinstance(val, np.ndarray):
            val = [float(v) for v in val]
        desc[key] = val
    return desc


@dataclass
class LaplaceEstimate:
    """Monte Carlo estimate of a (multi-time) Laplace functional."""

    mean: float
    stderr: float
    n_samples: int
    descriptor: dict

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr,
                "n_samples": self.n_samples, "descriptor": self.descriptor}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def empirical_laplace(samples, phi_list, times=None):
    """Mean over replicas of prod_i exp<log(1+phi_i), gamma_i>.

    samples: one entry per replica, each a list of snapshots matching
    phi_list position by position.  Values lie in (0, 1] for class-D
    functions, so the estimate does too.
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    phis = list(phi_list)
    vals = np.empty(len(samples))
    for r, snaps in enumerate(samples):
        if len(snaps) != len(phis):
            raise ValueError("snapshot/function count mismatch")
        vals[r] = math.exp(sum(_log1p_pairing(p, c)
                               for p, c in zip(phis, snaps)))
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(len(vals))) \
        if len(vals) > 1 else 0.0
    desc = {"times": list(times) if times is not None else None,
            "functions": [_describe_phi(p) for p in phis]}
    return LaplaceEstimate(mean, stderr, len(vals), desc)


# ---------------------------------------------------------------------------
# analytic Laplace functionals

def poisson_laplace_exponent(phi, intensity, tol=QUAD_TOL, transform=None):
    """log E[exp<phi, Poisson(intensity)>] = intensity * int (e^phi - 1).

    transform defaults to e^phi - 1; pass np.log1p-style callables to reuse
    the identity for functionals of the form exp<log(1+phi), gamma>, where
    the exponent reduces to intensity * int phi.
    """
    if transform is None:
        def transform(v):
            return np.expm1(v)

    from .functions import box_quad

    def integrand(pts):
        return transform(np.asarray(phi(pts), dtype=float))

    val = box_quad(integrand, phi.support_lo, phi.support_hi, tol)
    return float(intensity) * val


def analytic_laplace_markov(kernel, config, phi, t, tol=QUAD_TOL):
    """prod over points of (1 + (T_t phi)(x)) for a conservative kernel."""
    if not kernel.conservative:
        raise ValueError("kernel kills mass; use analytic_laplace_submarkov")
    if len(config) == 0:
        return 1.0
    image = kernel.semigroup(phi, t, tol=tol)
    vals = np.asarray(image(config.points), dtype=float)
    if np.any(vals <= -1.0):
        raise ValueError("semigroup image left class D")
    return float(math.exp(np.sum(np.log1p(vals))))


def _integral_of_image(kernel, phi, image, t, tol):
    # int (T_t phi): closed forms where the kernel structure gives them
    if kernel.variant == "death":
        return integrate_function(image, tol)
    if kernel.variant == "killed_brownian" and kernel._constant_rate:
        # heat flow preserves the integral; killing scales it
        return math.exp(-kernel._rate_const * t) * integrate_function(phi, tol)
    return integrate_function(image, tol)


def analytic_laplace_submarkov(kernel, config, phi, t, z, tol=QUAD_TOL):
    """Two-factor closed form for killing with immigration at intensity z.

    exp<log(1 + T_t phi), gamma> * exp(z * int (phi - T_t phi) dx).
    """
    if kernel.conservative:
        raise ValueError("conservative kernel; use analytic_laplace_markov")
    if not z > 0:
        raise ValueError("z must be > 0")
    image = kernel.semigroup(phi, t, tol=tol)
    if len(config):
        vals = np.asarray(image(config.points), dtype=float)
        if np.any(vals <= -1.0):
            raise ValueError("semigroup image left class D")
        first = float(np.sum(np.log1p(vals)))
    else:
        first = 0.0
    deficit = integrate_function(phi, tol) - _integral_of_image(
        kernel, phi, image, t, tol)
    return math.exp(first + z * deficit)


# ---------------------------------------------------------------------------
# birth-and-death joint multi-time Laplace functional

@dataclass(frozen=True)
class FixedStart:
    config: Configuration


@dataclass(frozen=True)
class PoissonStart:
    intensity: float


def _index_tuples(n):
    # nonempty increasing tuples of {0..n-1}, by subset bitmask
    for mask in range(1, 1 << n):
        yield tuple(i for i in range(n) if mask >> i & 1)


def glauber_joint_laplace(start, a_const, z, times, phi_list, tol=QUAD_TOL):
    """Closed-form joint Laplace functional of the birth-and-death process.

    The process has constant death rate a_const and immigration intensity z;
    the value of E[prod_i exp<log(1+phi_i), gamma_{t_i}>] factorizes as

      exp[ sum over increasing index tuples (i_1<...<i_k) of
           z (1-e^{-a t_{i_1}}) e^{-a (t_{i_k}-t_{i_1})} <phi_{i_1}...phi_{i_k}> ]

    times a starting-measure term: for a fixed configuration the product
    over its points of (1 + sum over tuples e^{-a t_{i_k}} (phi...)(x)),
    for a Poisson(z0) start exp[z0 <sum-term>], and for any other measure
    whatever its expected_product_functional reports.
    """
    times = [float(t) for t in times]
    if any(t <= 0 for t in times) or any(b <= a for a, b in
                                         zip(times, times[1:])):
        raise ValueError("times must be strictly increasing and > 0")
    n = len(times)
    if n > 12:
        raise ValueError("too many times for subset enumeration (max 12)")
    phis = list(phi_list)
    if len(phis) != n:
        raise ValueError("need one test function per time")
    a = float(a_const)

    exponent = 0.0
    terms = []  # (coefficient e^{-a t_last}, product function, index tuple)
    for tup in _index_tuples(n):
        prod_fn = reduce(lambda f, g: f.product(g), [phis[i] for i in tup])
        integral = integrate_function(prod_fn, tol)
        first, last = times[tup[0]], times[tup[-1]]
        exponent += z * (1.0 - math.exp(-a * first)) * \
            math.exp(-a * (last - first)) * integral
        terms.append((math.exp(-a * last), prod_fn, tup))

    start = _coerce_start(start)
    if isinstance(start, FixedStart):
        second = _fixed_product(start.config, terms, phis)
    elif isinstance(start, PoissonStart):
        total = sum(c * integrate_function(fn, tol) for c, fn, _ in terms)
        second = start.intensity * total
        return math.exp(exponent + second)
    else:
        return math.exp(exponent) * start.expected_product_functional(
            [(c, fn) for c, fn, _ in terms], tol)
    return math.exp(exponent) * second


def _coerce_start(start):
    if isinstance(start, Configuration):
        return FixedStart(start)
    if isinstance(start, (int, float)):
        return PoissonStart(float(start))
    if isinstance(start, (FixedStart, PoissonStart)):
        return start
    if hasattr(start, "expected_product_functional"):
        return start
    raise ValueError("unsupported starting measure")


def _fixed_product(config, terms, phis):
    if len(config) == 0:
        return 1.0
    pts = config.points
    vals = {i: np.asarray(p(pts), dtype=float) for i, p in enumerate(phis)}
    acc = np.ones(len(pts))
    for coef, _fn, tup in terms:
        prod = np.ones(len(pts))
        for i in tup:
            prod = prod * vals[i]
        acc = acc + coef * prod
    if np.any(acc <= 0.0):
        raise ValueError("product factor left (0, inf); functions too large")
    return float(math.exp(np.sum(np.log(acc))))


# ---------------------------------------------------------------------------
# correlation functions on bin grids

@dataclass
class CorrelationGrid:
    """Estimated order-n correlation function on products of grid bins.

    index_tuples holds nondecreasing tuples of flat bin indices; the
    estimate for a tuple applies to the (symmetrized) product of those
    bins.  centers maps a flat bin index to its center point.
    """

    order: int
    edges: list
    index_tuples: list
    estimates: np.ndarray
    stderrs: np.ndarray
    n_samples: int

    def bin_center(self, flat):
        return _flat_center(self.edges, flat)

    def value(self, tup):
        key = tuple(sorted(tup))
        for i, t in enumerate(self.index_tuples):
            if t == key:
                return float(self.estimates[i])
        raise KeyError(key)

    def to_csv(self):
        nb = [len(e) - 1 for e in self.edges]
        headers = []
        for j in range(self.order):
            for ax in range(len(self.edges)):
                headers.append(f"x{j}_{ax}")
        lines = [",".join(headers + ["estimate", "stderr"])]
        for t, est, se in zip(self.index_tuples, self.estimates, self.stderrs):
            row = []
            for flat in t:
                row.extend(f"{c:.10g}" for c in _flat_center(self.edges, flat))
            row.append(repr(float(est)))
            row.append(repr(float(se)))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _flat_center(edges, flat):
    nb = [len(e) - 1 for e in edges]
    idx = []
    for ax in reversed(range(len(nb))):
        flat, r = divmod(flat, nb[ax])
        idx.append(r)
    idx.reverse()
    return [0.5 * (edges[ax][i] + edges[ax][i + 1]) for ax, i in
            enumerate(idx)]


def _falling(counts, m):
    out = counts.astype(float)
    for j in range(1, m):
        out = out * (counts - j)
    return out


def estimate_correlations(samples, order, bins_per_axis, tol_combos=20000):
    """Factorial-moment estimate of the order-n correlation on a bin grid.

    For bins B_1..B_r with multiplicities m_1..m_r (sum = n), the expected
    number of ordered distinct n-tuples of points hitting the bin pattern is
    int over the bin product of k^(n), i.e. the product of falling
    factorials of the bin counts estimates k^(n) * prod vol(B_j)^{m_j}.
    This equals the symmetrized subset-sum estimator (n! over unordered
    subsets) termwise.
    """
    if order < 1 or order > 4:
        raise ValueError("order must be in 1..4")
    if len(samples) == 0:
        raise ValueError("empty sample set")
    domain = samples[0].domain
    dim = domain.dim
    if np.ndim(bins_per_axis) == 0:
        bins_per_axis = [int(bins_per_axis)] * dim
    edges = [np.linspace(domain.lower[ax], domain.upper[ax],
                         bins_per_axis[ax] + 1) for ax in range(dim)]
    nb = [len(e) - 1 for e in edges]
    n_flat = int(np.prod(nb))
    widths = [(domain.upper[ax] - domain.lower[ax]) / nb[ax]
              for ax in range(dim)]
    vol_bin = float(np.prod(widths))

    counts = np.zeros((len(samples), n_flat), dtype=np.int64)
    for r, cfg in enumerate(samples):
        if len(cfg) == 0:
            continue
        pts = cfg.points
        flat = np.zeros(len(pts), dtype=np.int64)
        for ax in range(dim):
            i = np.clip(((pts[:, ax] - domain.lower[ax]) / widths[ax])
                        .astype(np.int64), 0, nb[ax] - 1)
            flat = flat * nb[ax] + i
        counts[r] = np.bincount(flat, minlength=n_flat)

    from itertools import combinations_with_replacement
    tuples = list(combinations_with_replacement(range(n_flat), order))
    if len(tuples) > tol_combos:
        raise ValueError("bin grid too fine for this order")
    estimates = np.empty(len(tuples))
    stderrs = np.empty(len(tuples))
    for i, tup in enumerate(tuples):
        mult = {}
        for b in tup:
            mult[b] = mult.get(b, 0) + 1
        vals = np.ones(len(samples))
        for b, m in mult.items():
            vals = vals * _falling(counts[:, b], m)
        denom = vol_bin ** order
        estimates[i] = np.mean(vals) / denom
        stderrs[i] = (np.std(vals, ddof=1) / math.sqrt(len(vals)) / denom
                      if len(vals) > 1 else 0.0)
    return CorrelationGrid(order, edges, tuples, estimates, stderrs,
                           len(samples))


# ---------------------------------------------------------------------------
# Ursell (truncated correlation) conversion

def set_partitions(items):
    """All partitions of items into nonempty blocks (frozensets)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for k in range(len(rest) + 1):
        from itertools import combinations
        for combo in combinations(rest, k):
            block = frozenset((first,) + combo)
            remaining = [x for x in rest if x not in block]
            for sub in set_partitions(remaining):
                yield [block] + sub


@dataclass
class UrsellTable:
    """Correlation and Ursell values indexed by subsets of labeled points.

    Both dicts are keyed by frozensets of labels; either side may be
    filled and the other derived.
    """

    labels: tuple
    correlations: dict = None
    ursell: dict = None

    def _require(self, table, name, n_max):
        if table is None:
            raise ValueError(f"{name} side of the table is empty")
        for size in range(1, n_max + 1):
            from itertools import combinations
            for combo in combinations(self.labels, size):
                if frozenset(combo) not in table:
                    raise ValueError(f"{name} missing subset {set(combo)}")


def ursell_from_correlations(table, n_max=None):
    """Fill the table's Ursell side from its correlation side.

    Inverts k(eta) = sum over partitions of eta of prod u(block) by
    pulling out the single-block partition:
    u(eta) = k(eta) - sum over partitions with >= 2 blocks.
    """
    n_max = len(table.labels) if n_max is None else n_max
    if n_max > 8:
        raise ValueError("n_max above 8 is too costly (Bell numbers)")
    table._require(table.correlations, "correlation", n_max)
    u = {}
    from itertools import combinations
    for size in range(1, n_max + 1):
        for combo in combinations(table.labels, size):
            eta = frozenset(combo)
            rest = 0.0
            for part in set_partitions(sorted(combo)):
                if len(part) == 1:
                    continue
                prod = 1.0
                for block in part:
                    prod *= u[block]
                rest += prod
            u[eta] = table.correlations[eta] - rest
    table.ursell = u
    return table


def correlations_from_ursell(table, n_max=None):
    """Fill the correlation side: k(eta) = sum over partitions prod u."""
    n_max = len(table.labels) if n_max is None else n_max
    if n_max > 8:
        raise ValueError("n_max above 8 is too costly (Bell numbers)")
    table._require(table.ursell, "ursell", n_max)
    k = {}
    from itertools import combinations
    for size in range(1, n_max + 1):
        for combo in combinations(table.labels, size):
            total = 0.0
            for part in set_partitions(sorted(combo)):
                prod = 1.0
                for block in part:
                    prod *= table.ursell[block]
                total += prod
            k[frozenset(combo)] = total
    table.correlations = k
    return table


# ---------------------------------------------------------------------------
# cylinder functions and generators

class CylinderFunction:
    """F(gamma) = outer(<phi_1, gamma>, ..., <phi_N, gamma>).

    outer takes the inner-pairing vector; gradient and hessian are its
    derivative evaluators (hessian may be None when no diffusion generator
    will be applied).
    """

    def __init__(self, outer, gradient, hessian, phis):
        self.outer = outer
        self.gradient = gradient
        self.hessian = hessian
        self.phis = list(phis)

    def inner(self, config):
        return np.array([pairing(p, config) for p in self.phis])

    def inner_at(self, pts):
        """Matrix of phi_j values at the given points, shape (n_pts, N)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.column_stack([np.asarray(p(pts), dtype=float)
                                for p in self.phis])

    def __call__(self, config):
        return float(self.outer(self.inner(config)))

    def value_at_vector(self, v):
        return float(self.outer(np.asarray(v, dtype=float)))

    @staticmethod
    def linear(phi):
        return CylinderFunction(lambda v: v[0],
                                lambda v: np.array([1.0]),
                                lambda v: np.zeros((1, 1)), [phi])

    @staticmethod
    def exp_pairing(phi):
        """F = exp(<phi, gamma>); bounded by 1 for nonpositive phi."""
        return CylinderFunction(lambda v: math.exp(v[0]),
                                lambda v: np.array([math.exp(v[0])]),
                                lambda v: np.array([[math.exp(v[0])]]), [phi])

    @staticmethod
    def product_pairing(phi1, phi2):
        """F = <phi1, gamma> * <phi2, gamma>."""
        return CylinderFunction(
            lambda v: v[0] * v[1],
            lambda v: np.array([v[1], v[0]]),
            lambda v: np.array([[0.0, 1.0], [1.0, 0.0]]), [phi1, phi2])


def _support_box(phis):
    lo = np.min([p.support_lo for p in phis], axis=0)
    hi = np.max([p.support_hi for p in phis], axis=0)
    return lo, hi


def generator_apply(F, config, dynamics_spec, tol=QUAD_TOL):
    """Evaluate the matching generator formula at the configuration.

    dynamics_spec selects the formula: a Brownian kernel applies the
    diffusion generator through the cylinder chain rule, a GlauberDynamics
    applies the birth-and-death difference formula, and a Kawasaki kernel
    applies the jump-difference formula.
    """
    from .kernels import BrownianKernel, KawasakiKernel

    if isinstance(dynamics_spec, BrownianKernel):
        return _generator_brownian(F, config)
    if isinstance(dynamics_spec, GlauberDynamics):
        return _generator_glauber(F, config, dynamics_spec, tol)
    if isinstance(dynamics_spec, KawasakiKernel):
        return _generator_kawasaki(F, config, dynamics_spec, tol)
    raise ValueError("unsupported dynamics for generator_apply")


def _generator_brownian(F, config):
    """(1/2) sum over x of the Laplacian of F in the x coordinate.

    Chain rule through the cylinder structure:
    (1/2) sum_x [ sum_{j,k} d2outer_{jk} grad phi_j(x).grad phi_k(x)
                  + sum_j douter_j laplacian phi_j(x) ].
    """
    if len(config) == 0:
        return 0.0
    if F.hessian is None:
        raise ValueError("diffusion generator needs the outer hessian")
    v = F.inner(config)
    grad_outer = np.asarray(F.gradient(v), dtype=float)
    hess_outer = np.asarray(F.hessian(v), dtype=float)
    pts = config.points
    n_phi = len(F.phis)
    grads = [p.gradient(pts) for p in F.phis]       # each (n_pts, dim)
    laps = [p.laplacian(pts) for p in F.phis]       # each (n_pts,)
    total = 0.0
    for j in range(n_phi):
        total += grad_outer[j] * float(np.sum(laps[j]))
        for k in range(n_phi):
            dots = np.sum(grads[j] * grads[k], axis=1)
            total += hess_outer[j, k] * float(np.sum(dots))
    return 0.5 * total


def _generator_glauber(F, config, spec, tol):
    """sum_x a(x)(F(gamma without x) - F(gamma))
       + z * int a(x)(F(gamma with x) - F(gamma)) dx."""
    from .functions import box_quad
    v = F.inner(config)
    base = F.value_at_vector(v)
    death = 0.0
    if len(config):
        rates = spec.rate(config.points)
        inner_pts = F.inner_at(config.points)
        for i in range(len(config)):
            death += rates[i] * (F.value_at_vector(v - inner_pts[i]) - base)
    birth = 0.0
    if spec.intensity > 0:
        lo, hi = _support_box(F.phis)

        def integrand(pts):
            pts = np.atleast_2d(pts)
            inner = F.inner_at(pts)
            vals = np.array([F.value_at_vector(v + row) - base
                             for row in inner])
            return spec.rate(pts) * vals

        birth = spec.intensity * box_quad(integrand, lo, hi, tol)
    return death + birth


def _generator_kawasaki(F, config, kernel, tol):
    """sum_x int jump_profile(x - y) (F(gamma move x->y) - F(gamma)) dy.

    Split per particle as rate * (F(gamma without x) - F(gamma)) plus an
    integral over the compact union support of the phis, where the
    integrand vanishes outside it.
    """
    from .functions import box_quad
    if len(config) == 0:
        return 0.0
    domain = kernel.domain
    v = F.inner(config)
    base = F.value_at_vector(v)
    lam = kernel.clock_rate
    lo, hi = _support_box(F.phis)
    total = 0.0
    inner_pts = F.inner_at(config.points)
    for i in range(len(config)):
        x = config.points[i]
        removed = v - inner_pts[i]
        total += lam * (F.value_at_vector(removed) - base)

        def integrand(pts, removed=removed, x=x):
            pts = np.atleast_2d(pts)
            delta = domain.displacement(pts, x[None, :]) if domain.is_torus \
                else pts - x[None, :]
            dens = kernel.profile.density(delta)
            inner = F.inner_at(pts)
            fvals = np.array([F.value_at_vector(removed + row)
                              for row in inner])
            return dens * (fvals - F.value_at_vector(removed))

        total += box_quad(integrand, lo, hi, tol)
    return total


@dataclass
class FDCheck:
    """Finite-difference generator check result."""

    fd_estimate: float
    stderr: float
    analytic: float
    discrepancy: float
    h: float
    n_replicas: int

    def to_dict(self):
        return {"fd_estimate": self.fd_estimate, "stderr": self.stderr,
                "analytic": self.analytic, "discrepancy": self.discrepancy,
                "h": self.h, "n_replicas": self.n_replicas}


def generator_fd_check(F, config, dynamics_spec, h, n_replicas, rng):
    """(E[F(gamma_h)] - F(gamma)) / h against the generator value.

    The finite difference carries an O(h) semigroup bias on top of Monte
    Carlo noise, so acceptance is |fd - analytic| <= 3 stderr + C h.
    """
    from .kernels import BrownianKernel, KawasakiKernel

    base = F(config)
    analytic = generator_apply(F, config, dynamics_spec)
    diffs = np.empty(n_replicas)
    if isinstance(dynamics_spec, GlauberDynamics):
        for r in range(n_replicas):
            snaps = glauber_evolve(config, dynamics_spec.rate,
                                   dynamics_spec.intensity,
                                   EvolutionPlan.conservative((h,)),
                                   rng.child(r))
            diffs[r] = F(snaps[0]) - base
    elif isinstance(dynamics_spec, (BrownianKernel, KawasakiKernel)):
        # evolve exactly the given particles: no collar seeding, so the
        # finite difference targets the generator at this configuration
        boundary = TorusExact() if config.domain.is_torus \
            else Buffer(intensity=0.0)
        plan = EvolutionPlan.conservative((h,), boundary)
        for r in range(n_replicas):
            snaps = evolve_snapshot(config, dynamics_spec, plan, rng.child(r))
            diffs[r] = F(snaps[0]) - base
    else:
        raise ValueError("unsupported dynamics for generator_fd_check")
    fd = float(np.mean(diffs) / h)
    stderr = float(np.std(diffs, ddof=1) / math.sqrt(n_replicas) / h) \
        if n_replicas > 1 else 0.0
    return FDCheck(fd, stderr, analytic, abs(fd - analytic), h, n_replicas)
