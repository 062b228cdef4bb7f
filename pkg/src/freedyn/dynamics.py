"""Window evolution of particle configurations under free dynamics.

Every particle moves by an independent copy of a one-particle kernel; there
is no interaction.  Sub-Markov kernels kill particles, and the matching
equilibrium mechanism adds immigrants: a space-time Poisson rain with
intensity killing_rate(x) * z dx dt, each immigrant evolving from its own
birth time.  Snapshots are exact in distribution at the requested times
for Brownian, Death and Kawasaki kernels (no time-discretization anywhere;
the grid steps below are Markov increments); only KilledBrownian carries
its internal killing-grid bias.

Boundary policy on the full space is a buffer collar: the window is
enlarged by a width Delta, the collar is seeded with fresh Poisson points
at the initial density, and any particle drifting past the collar is
dropped.  The resulting error on window statistics is controlled by
buffer_leakage_bound.  On the torus the evolution is exact with no
boundary at all.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .kernels import default_buffer_width
from .pointproc import BoundedField, Configuration, as_field, sample_poisson, \
    sample_poisson_space_time

CONSERVATIVE = "conservative"
SUBMARKOV_IMMIGRATION = "submarkov_immigration"


@dataclass(frozen=True)
class Buffer:
    """Full-space boundary policy: collar of the given width around the window.

    width None means: solve tail_bound(t_max, width) = 1e-4 for the kernel
    at hand.  intensity None means: seed the collar at the initial
    configuration's empirical density.
    """

    width: float = None
    intensity: float = None

    def __post_init__(self):
        if self.width is not None and not self.width >= 0:
            raise ValueError("buffer width must be >= 0")


@dataclass(frozen=True)
class TorusExact:
    """Periodic boundary: exact evolution, no collar, no leakage."""


@dataclass(frozen=True)
class EvolutionPlan:
    """Times to observe, evolution mode, and boundary policy.

    times must be strictly increasing and positive.  mode is either
    CONSERVATIVE (no immigration; sub-Markov kernels simply lose particles)
    or SUBMARKOV_IMMIGRATION with immigration_intensity z > 0.
    """

    times: tuple
    mode: str = CONSERVATIVE
    immigration_intensity: float = None
    boundary: object = field(default_factory=Buffer)

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) == 0:
            raise ValueError("need at least one observation time")
        if times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("times must be strictly increasing and > 0")
        object.__setattr__(self, "times", times)
        if self.mode == SUBMARKOV_IMMIGRATION:
            z = self.immigration_intensity
            if z is None or not z > 0:
                raise ValueError("immigration mode needs intensity z > 0")
        elif self.mode == CONSERVATIVE:
            if self.immigration_intensity is not None:
                raise ValueError("conservative mode takes no intensity")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not isinstance(self.boundary, (Buffer, TorusExact)):
            raise ValueError("boundary must be Buffer or TorusExact")

    @staticmethod
    def conservative(times, boundary=None):
        return EvolutionPlan(tuple(times), CONSERVATIVE, None,
                             boundary if boundary is not None else Buffer())

    @staticmethod
    def with_immigration(times, z, boundary=None):
        return EvolutionPlan(tuple(times), SUBMARKOV_IMMIGRATION, float(z),
                             boundary if boundary is not None else Buffer())

    @property
    def t_max(self):
        return self.times[-1]


@dataclass
class ParticleTrack:
    """One particle's life: birth time, positions at covered plan times.

    positions has one row per entry of times, which is the subset of the
    plan's observation grid falling in [birth_time, death_time).
    """

    birth_time: float
    origin: str  # "initial" | "immigrant"
    times: tuple
    positions: np.ndarray
    death_time: float = None


@dataclass(frozen=True)
class GlauberDynamics:
    """Spatial birth-and-death specification: death rate field a, intensity z.

    Particles sit still, die at rate a(x), and are born from a space-time
    Poisson rain with intensity a(x) * z dx dt.
    """

    rate: object
    intensity: float

    def __post_init__(self):
        object.__setattr__(self, "rate", as_field(self.rate))
        if not self.intensity >= 0:
            raise ValueError("intensity must be >= 0")


def buffer_leakage_bound(kernel, t_max, width, population):
    """Bound on the expected number of particles lost past the collar.

    Each particle's chance of ending beyond distance width from its start
    by time t_max is at most tail_bound(t_max, width); collar crossings in
    and out are not tracked, so this bounds only the discard leakage.
    """
    if width <= 0:
        return float(population)
    return float(population) * kernel.tail_bound(t_max, width)


def _check_boundary(domain, boundary):
    if isinstance(boundary, Buffer) and domain.is_torus:
        raise ValueError("Buffer boundary requires full-space mode")
    if isinstance(boundary, TorusExact) and not domain.is_torus:
        raise ValueError("TorusExact boundary requires a torus domain")


def _seed_buffer(config, kernel, plan, rng):
    """Simulation state for buffer mode: window points + collar Poisson.

    Returns (points, cull_lo, cull_hi, width).
    """
    domain = config.domain
    width = plan.boundary.width
    if plan.boundary.intensity is not None:
        density = plan.boundary.intensity
    else:
        density = len(config) / domain.window_volume
    if width is None:
        # the width solve is a root find over kernel tails; with an empty
        # collar the only unbiased default is to never discard, so skip it
        width = math.inf if density == 0 else default_buffer_width(kernel, plan.t_max)
    lo = domain.lower - width
    hi = domain.upper + width
    pts = config.points
    if width > 0 and density > 0:
        shell = sample_poisson(domain, density, rng.child(0xB0FF), lo=lo, hi=hi)
        outside = ~np.all((shell.points >= domain.lower)
                          & (shell.points <= domain.upper), axis=1)
        pts = np.vstack([pts, shell.points[outside]])
    return pts, lo, hi, width


def _march(points, kernel, times, gen, immigrants=None, cull=None):
    """Step the time grid with Markov increments; returns point arrays.

    immigrants, when given, is (points, birth_times) sorted by birth time;
    each immigrant takes its first (partial) step in the interval containing
    its birth.  cull is an optional (lo, hi) box outside which particles
    are dropped after every step.
    """
    dim = kernel.domain.dim
    pts = np.asarray(points, dtype=float).reshape(-1, dim)
    snaps = []
    prev = 0.0
    for t in times:
        if len(pts):
            pts, alive = kernel.propagate_batch(pts, t - prev, gen)
            pts = pts[alive]
        if immigrants is not None:
            ipts, itimes = immigrants
            sel = (itimes > prev) & (itimes <= t)
            if np.any(sel):
                born, balive = kernel.propagate_batch(ipts[sel],
                                                      t - itimes[sel], gen)
                born = born[balive]
                pts = np.vstack([pts, born]) if len(pts) else born
        if cull is not None and len(pts):
            inside = np.all((pts >= cull[0]) & (pts <= cull[1]), axis=1)
            pts = pts[inside]
        snaps.append(np.array(pts, copy=True))
        prev = t
    return snaps


def _window_snapshot(pts, domain):
    if len(pts):
        inside = np.all((pts >= domain.lower) & (pts <= domain.upper), axis=1)
        pts = pts[inside]
    return Configuration(pts, domain)


def evolve_snapshot(config, kernel, plan, rng):
    """Propagate every particle independently; one Configuration per time.

    Conservative-mode evolution: no immigration, dead particles removed.
    Buffer mode seeds the collar and culls beyond it (window+collar), and
    snapshots report the window content only; the discard error is bounded
    by buffer_leakage_bound.
    """
    if plan.mode != CONSERVATIVE:
        raise ValueError("evolve_snapshot requires a conservative plan; "
                         "use evolve_with_immigration")
    if kernel.domain != config.domain:
        raise ValueError("kernel and configuration domains differ")
    _check_boundary(config.domain, plan.boundary)
    gen = rng.child(1).generator()
    if isinstance(plan.boundary, TorusExact):
        snaps = _march(config.points, kernel, plan.times, gen)
        return [Configuration(p, config.domain) for p in snaps]
    pts, lo, hi, _w = _seed_buffer(config, kernel, plan, rng)
    snaps = _march(pts, kernel, plan.times, gen, cull=(lo, hi))
    return [_window_snapshot(p, config.domain) for p in snaps]


def evolve_with_immigration(config, kernel, z, plan, rng):
    """Sub-Markov evolution with Poissonian immigration, snapshot per time.

    Initial particles evolve with killing; immigrants are born at the
    points of a space-time Poisson process with intensity
    killing_rate(x) * z dx dt over the simulation box and evolve from
    their birth times under the same kernel.
    """
    if not z > 0:
        raise ValueError("z must be > 0")
    if kernel.domain != config.domain:
        raise ValueError("kernel and configuration domains differ")
    _check_boundary(config.domain, plan.boundary)
    if kernel.conservative:
        warnings.warn("conservative kernel: immigration rate is zero, "
                      "degenerating to evolve_snapshot")
        fallback = EvolutionPlan(plan.times, CONSERVATIVE, None, plan.boundary)
        return evolve_snapshot(config, kernel, fallback, rng)
    domain = config.domain
    g = kernel.rate
    rain = BoundedField(lambda p: g(p) * z, g.bound * z)
    gen = rng.child(1).generator()
    if isinstance(plan.boundary, TorusExact):
        ipts, itimes = sample_poisson_space_time(domain, rain, plan.t_max,
                                                 rng.child(2))
        snaps = _march(config.points, kernel, plan.times, gen,
                       immigrants=(ipts, itimes))
        return [Configuration(p, domain) for p in snaps]
    pts, lo, hi, _w = _seed_buffer(config, kernel, plan, rng.child(3))
    ipts, itimes = sample_poisson_space_time(domain, rain, plan.t_max,
                                             rng.child(2), lo=lo, hi=hi)
    snaps = _march(pts, kernel, plan.times, gen,
                   immigrants=(ipts, itimes), cull=(lo, hi))
    return [_window_snapshot(p, domain) for p in snaps]


def _exponential_lifetimes(rate_vals, gen):
    # Exp(a(x)) lifetimes; rate 0 means immortal
    draws = gen.exponential(1.0, size=len(rate_vals))
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(rate_vals > 0, draws / np.maximum(rate_vals, 1e-300),
                        np.inf)


def glauber_evolve(config, a, z, plan, rng, return_tracks=False):
    """Exact event-free birth-and-death simulation, snapshot per plan time.

    No time grid: each particle's death time is one exponential draw, and
    births come from the exact space-time Poisson rain, so snapshots are
    exact in distribution at all times simultaneously.  Particles do not
    move, hence no boundary collar is needed; births are confined to the
    window.
    """
    spec = GlauberDynamics(a, z)
    domain = config.domain
    gen = rng.child(1).generator()
    init = config.points
    init_death = _exponential_lifetimes(spec.rate(init) if len(init) else
                                        np.zeros(0), gen)
    rain = BoundedField(lambda p: spec.rate(p) * spec.intensity,
                        spec.rate.bound * spec.intensity)
    if spec.intensity > 0 and rain.bound > 0:
        bpts, btimes = sample_poisson_space_time(domain, rain, plan.t_max,
                                                 rng.child(2))
    else:
        bpts = np.zeros((0, domain.dim))
        btimes = np.zeros(0)
    bdeath = btimes + _exponential_lifetimes(
        spec.rate(bpts) if len(bpts) else np.zeros(0), gen)
    out = []
    for t in plan.times:
        alive_init = init[init_death > t] if len(init) else init
        alive_born = bpts[(btimes <= t) & (bdeath > t)] if len(bpts) else bpts
        pts = np.vstack([alive_init, alive_born]) if len(init) or len(bpts) \
            else np.zeros((0, domain.dim))
        out.append(Configuration(pts, domain))
    if not return_tracks:
        return out
    times = np.asarray(plan.times)
    tracks = []
    for j in range(len(init)):
        covered = tuple(times[times < init_death[j]])
        tracks.append(ParticleTrack(0.0, "initial", covered,
                                    np.tile(init[j], (len(covered), 1)),
                                    None if math.isinf(init_death[j])
                                    else float(init_death[j])))
    for j in range(len(bpts)):
        covered = tuple(times[(times >= btimes[j]) & (times < bdeath[j])])
        tracks.append(ParticleTrack(float(btimes[j]), "immigrant", covered,
                                    np.tile(bpts[j], (len(covered), 1)),
                                    None if math.isinf(bdeath[j])
                                    else float(bdeath[j])))
    return out, tracks


# ---------------------------------------------------------------------------
# event streams

@dataclass(frozen=True)
class Event:
    time: float
    kind: str  # "birth" | "death" | "jump"
    point: tuple
    target: tuple = None  # jump destination

    def to_json(self):
        rec = {"time": self.time, "event": self.kind, "point": list(self.point)}
        if self.target is not None:
            rec["to"] = list(self.target)
        return json.dumps(rec, sort_keys=True)

    @staticmethod
    def from_json(line):
        rec = json.loads(line)
        target = tuple(rec["to"]) if "to" in rec else None
        return Event(float(rec["time"]), rec["event"],
                     tuple(rec["point"]), target)


@dataclass
class EventStream:
    """Chronological birth/death/jump record over a finite horizon."""

    events: list
    horizon: float

    def __post_init__(self):
        ts = [e.time for e in self.events]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise ValueError("events must be time-ordered")

    def to_jsonl(self):
        head = json.dumps({"horizon": self.horizon, "format": "event-stream"})
        return "\n".join([head] + [e.to_json() for e in self.events]) + "\n"

    @staticmethod
    def from_jsonl(text):
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        head = json.loads(lines[0])
        events = [Event.from_json(ln) for ln in lines[1:]]
        return EventStream(events, float(head["horizon"]))

    def snapshot(self, config, t):
        """Replay events up to and including time t from the start config."""
        live = {tuple(row): None for row in config.points}
        for e in self.events:
            if e.time > t:
                break
            if e.kind == "birth":
                live[e.point] = None
            elif e.kind == "death":
                live.pop(e.point, None)
            else:
                live.pop(e.point, None)
                live[e.target] = None
        pts = np.array(list(live), dtype=float).reshape(-1, config.domain.dim)
        return Configuration(pts, config.domain)


def event_stream(config, model, horizon, rng):
    """Discrete-event record of a birth-death or jump evolution.

    model is a GlauberDynamics, a DeathKernel, or a KawasakiKernel; the
    diffusive kernels have no discrete-event representation.  Replaying
    the stream from the start configuration reproduces the evolution's
    snapshots exactly (same probability law, event by event).
    """
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    domain = config.domain
    gen = rng.child(1).generator()
    events = []
    if isinstance(model, GlauberDynamics) or getattr(model, "variant", "") == "death":
        if isinstance(model, GlauberDynamics):
            rate, z = model.rate, model.intensity
        else:
            rate, z = model.rate, 0.0
        init = config.points
        deaths = _exponential_lifetimes(rate(init) if len(init) else
                                        np.zeros(0), gen)
        for j in range(len(init)):
            if deaths[j] <= horizon:
                events.append(Event(float(deaths[j]), "death",
                                    tuple(init[j])))
        if z > 0 and rate.bound > 0:
            rain = BoundedField(lambda p: rate(p) * z, rate.bound * z)
            bpts, btimes = sample_poisson_space_time(domain, rain, horizon,
                                                     rng.child(2))
            bdeaths = btimes + _exponential_lifetimes(
                rate(bpts) if len(bpts) else np.zeros(0), gen)
            for j in range(len(bpts)):
                events.append(Event(float(btimes[j]), "birth",
                                    tuple(bpts[j])))
                if bdeaths[j] <= horizon:
                    events.append(Event(float(bdeaths[j]), "death",
                                        tuple(bpts[j])))
    elif getattr(model, "variant", "") == "kawasaki":
        for row in config.points:
            epochs = model.jump_times(horizon, gen)
            if len(epochs) == 0:
                continue
            disp = model.profile.sample_displacements(gen, len(epochs))
            path = row + np.cumsum(disp, axis=0)
            path = domain.wrap(path)
            prev = tuple(row)
            for s, nxt in zip(epochs, path):
                events.append(Event(float(s), "jump", prev, tuple(nxt)))
                prev = tuple(nxt)
    else:
        raise ValueError("event streams exist for birth-death and jump "
                         "dynamics only")
    events.sort(key=lambda e: e.time)
    return EventStream(events, float(horizon))
