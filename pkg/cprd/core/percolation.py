import itertools
import logging
import math

import numpy as np
from scipy import ndimage, optimize

from cprd.core.clocks import ClockKind
from cprd.core.engine import richardson_set
from cprd.core.errors import (
    InvalidParams,
    PreconditionLambdaDD,
    WindowCapExceeded,
    WindowExhausted,
)
from cprd.core.renewal import check_alpha, dl_cdf


def moore_structure(d):
    """l-infinity adjacency: all 3^d - 1 neighbours"""
    return np.ones((3,) * d, dtype=bool)


class PercolationField:
    """Bernoulli(p) open indicators on the box lo..hi (inclusive, per axis).

    Attributes
    ----------
    lo : np.ndarray
        lowest corner of the window
    open : np.ndarray
        boolean canvas, open[i] is the site lo + i
    p : float
    """

    def __init__(self, lo, open_sites, p=None):
        self.lo = np.asarray(lo, dtype=np.int64)
        self.open = open_sites
        self.p = p

    @classmethod
    def sample(cls, lo, hi, p, rng):
        lo = np.asarray(lo, dtype=np.int64)
        shape = tuple(np.asarray(hi, dtype=np.int64) - lo + 1)
        return cls(lo, rng.random(shape) < p, p)

    @classmethod
    def from_open_sites(cls, open_sites, lo, hi):
        lo = np.asarray(lo, dtype=np.int64)
        canvas = np.zeros(tuple(np.asarray(hi, dtype=np.int64) - lo + 1), dtype=bool)
        for site in open_sites:
            canvas[tuple(np.asarray(site) - lo)] = True
        return cls(lo, canvas)

    def __repr__(self):
        return f"PercolationField(lo={self.lo.tolist()}, shape={self.open.shape}, p={self.p})"

    @property
    def d(self):
        return self.open.ndim

    @property
    def hi(self):
        return self.lo + np.array(self.open.shape) - 1

    @property
    def radius(self):
        """l-infinity radius of the window around the origin"""
        return int(max(np.max(np.abs(self.lo)), np.max(np.abs(self.hi))))

    def contains(self, site):
        site = np.asarray(site)
        return bool(np.all(site >= self.lo) and np.all(site <= self.hi))

    def is_open(self, site):
        return bool(self.open[tuple(np.asarray(site) - self.lo)])

    def grow(self, rng):
        """Double the window around its centre; old indicators are kept, new sites drawn"""
        if self.p is None:
            raise WindowExhausted("a fixed field cannot grow")
        shape = np.array(self.open.shape)
        pad = (shape + 1) // 2
        grown = rng.random(tuple(shape + 2 * pad)) < self.p
        grown[tuple(slice(q, q + s) for q, s in zip(pad, shape))] = self.open
        self.lo = self.lo - pad
        self.open = grown
        logging.debug(f"Percolation window grown to {self.open.shape}")
        return self

    def mask_of(self, sites):
        mask = np.zeros(self.open.shape, dtype=bool)
        for site in sites:
            if not self.contains(site):
                raise WindowExhausted(f"site {tuple(site)} lies outside {self}")
            mask[tuple(np.asarray(site) - self.lo)] = True
        return mask

    def sites_of(self, mask):
        return {tuple(int(c) for c in row) for row in np.argwhere(mask) + self.lo}


def touches_edge(mask):
    for axis in range(mask.ndim):
        if mask.take(0, axis=axis).any() or mask.take(-1, axis=axis).any():
            return True
    return False


def closure_mask(open_sites, seed):
    """seed together with every open l-infinity cluster adjacent to or inside it"""
    structure = moore_structure(open_sites.ndim)
    labels, _ = ndimage.label(open_sites, structure=structure)
    reach = ndimage.binary_dilation(seed, structure=structure)
    hit = np.unique(labels[reach & open_sites])
    return seed | np.isin(labels, hit[hit > 0])


def cluster_closure(field, sites):
    """Union of sites with all open l-infinity clusters they connect to.

    Raises
    ------
    WindowExhausted
        the closure touches the edge of the window
    """
    sites = [tuple(s) for s in sites]
    if not sites:
        return set()
    closure = closure_mask(field.open, field.mask_of(sites))
    if touches_edge(closure):
        raise WindowExhausted(f"cluster reaches the edge of {field}")
    return field.sites_of(closure)


class IterationResult:
    """Radius process of an iterated percolation run.

    Attributes
    ----------
    radii : list of int
        R_1..R_n
    cells : list of int
        |C_1|..|C_n|
    sets : list of set or None
        C_1..C_n when kept
    """

    def __init__(self, radii, cells, sets=None):
        self.radii = radii
        self.cells = cells
        self.sets = sets

    def __len__(self):
        return len(self.radii)

    def rows(self, replica=0):
        return [
            {"replica": replica, "n": n, "R_n": r, "cells": c}
            for n, (r, c) in enumerate(zip(self.radii, self.cells), start=1)
        ]


def iterate(c0, p, n, rng, max_radius=1024, keep_sets=False, margin=8):
    """Iterated site percolation C_k = neighbourhood(closure_k(C_{k-1})).

    Each step draws a fresh field over a window around the current set, grows the
    window until the closure fits, then adds the full l-infinity neighbourhood.

    Parameters
    ----------
    c0 : iterable of site tuples
    p : float
        in [0, 1)
    n : int
        number of iterations
    rng : np.random.Generator
    max_radius : int
        largest window radius before giving up
    keep_sets : bool
        keep every C_k as a set of sites

    Returns
    -------
    IterationResult

    Raises
    ------
    WindowCapExceeded
    """
    c0 = [tuple(int(c) for c in s) for s in c0]
    if not c0:
        raise InvalidParams("iterate needs a nonempty starting set")
    if not 0.0 <= p < 1.0:
        raise InvalidParams(f"p must lie in [0, 1), got {p}")
    d = len(c0[0])
    structure = moore_structure(d)

    current = PercolationField.from_open_sites(c0, np.min(c0, axis=0), np.max(c0, axis=0))
    lo, state = current.lo, current.open
    radii, cells, sets = [], [], [] if keep_sets else None

    for _ in range(n):
        occupied = np.argwhere(state)
        low, high = occupied.min(axis=0), occupied.max(axis=0)
        state = state[tuple(slice(a, b + 1) for a, b in zip(low, high))]
        lo = lo + low
        field = PercolationField.sample(
            lo - margin, lo + np.array(state.shape) - 1 + margin, p, rng
        )
        while True:
            seed = np.zeros(field.open.shape, dtype=bool)
            offset = lo - field.lo
            seed[tuple(slice(o, o + s) for o, s in zip(offset, state.shape))] = state
            closure = closure_mask(field.open, seed)
            if not touches_edge(closure):
                break
            if 2 * field.radius > max_radius:
                raise WindowCapExceeded(f"percolation window would exceed radius {max_radius}")
            field.grow(rng)

        state = ndimage.binary_dilation(closure, structure=structure)
        lo = field.lo
        occupied = np.argwhere(state) + lo
        radii.append(int(np.max(np.abs(occupied))))
        cells.append(int(len(occupied)))
        if keep_sets:
            sets.append({tuple(int(c) for c in row) for row in occupied})
    return IterationResult(radii, cells, sets)


def boundary_reach_probability(p, d, n, replicas, rng):
    """Monte Carlo estimate of P(origin connects to the boundary of the box of radius n).

    Returns
    -------
    (float, float)
        estimate and its binomial standard error
    """
    if replicas < 1 or n < 1:
        raise InvalidParams("needs replicas >= 1 and n >= 1")
    structure = moore_structure(d)
    centre = (n,) * d
    hits = 0
    for _ in range(replicas):
        open_sites = rng.random((2 * n + 1,) * d) < p
        if not open_sites[centre]:
            continue
        labels, _ = ndimage.label(open_sites, structure=structure)
        if touches_edge(labels == labels[centre]):
            hits += 1
    estimate = hits / replicas
    return estimate, math.sqrt(estimate * (1 - estimate) / replicas)


class CubeStatus:
    GOOD = "good"
    BAD = "bad"


class CubeGrid:
    """Tiling of Z^d by the cubes A_i = {0, 1}^d + 2i"""

    def __init__(self, d):
        if d < 1:
            raise InvalidParams(f"dimension must be positive, got {d}")
        self.d = d
        self._corner = list(itertools.product((0, 1), repeat=d))
        self._offsets = [o for o in itertools.product((-1, 0, 1), repeat=d) if any(o)]

    def cube_of(self, site):
        return tuple(int(c) // 2 for c in site)

    def sites_of(self, cube):
        return [tuple(2 * i + e for i, e in zip(cube, corner)) for corner in self._corner]

    def neighbours(self, cube):
        return [tuple(i + o for i, o in zip(cube, offset)) for offset in self._offsets]

    def cubes_of(self, sites):
        return {self.cube_of(s) for s in sites}

    def neighbourhood(self, cubes):
        grown = set(cubes)
        for cube in cubes:
            grown.update(self.neighbours(cube))
        return grown


def classify_cube(cube, wake_traces, sleep_traces, t_prev, t_cur, t_next):
    """A cube is bad when each of its sites has no wake point in [t_prev, t_next]
    and some sleep point in [t_prev, t_cur); bad cubes stay dormant on [t_cur, t_next].

    Parameters
    ----------
    cube : iterable of sites
    wake_traces, sleep_traces : mapping site -> PointTrace

    Returns
    -------
    str from the enum CubeStatus
    """
    if not t_prev < t_cur < t_next:
        raise InvalidParams(f"need t_prev < t_cur < t_next, got {t_prev}, {t_cur}, {t_next}")
    for site in cube:
        if wake_traces[site].has_point_in(t_prev, t_next):
            return CubeStatus.GOOD
        if not sleep_traces[site].has_point_in(t_prev, t_cur, closed_right=False):
            return CubeStatus.GOOD
    return CubeStatus.BAD


class SequenceKind:
    S = "s"
    G = "g"

    ALL = [S, G]


class TimeSequence:
    """Macro time sequence t_0 < t_1 < ...

     - S-type: t_k = (1 + c)^(k/2) t_0
     - G-type: t_{k+1} = t_k + t_k^eps_star
    """

    def __init__(self, kind, t0, c=None, eps_star=None):
        self.kind = kind
        self.t0 = t0
        self.c = c
        self.eps_star = eps_star
        self.check_valid_sequence()
        self._times = [float(t0)]

    def check_valid_sequence(self):
        if self.kind not in SequenceKind.ALL:
            raise InvalidParams(f"Unknown sequence kind {self.kind}")
        if self.t0 is None or not self.t0 > 0:
            raise InvalidParams(f"t0 must be positive, got {self.t0}")
        if self.kind == SequenceKind.S and (self.c is None or not self.c > 0):
            raise InvalidParams(f"S-type sequence needs c > 0, got {self.c}")
        if self.kind == SequenceKind.G and (self.eps_star is None or not 0 < self.eps_star < 1):
            raise InvalidParams(f"G-type sequence needs eps_star in (0, 1), got {self.eps_star}")

    def __repr__(self):
        return f"TimeSequence({self.kind}, t0={self.t0}, c={self.c}, eps_star={self.eps_star})"

    def at(self, k):
        while len(self._times) <= k:
            j = len(self._times)
            if self.kind == SequenceKind.S:
                self._times.append((1.0 + self.c) ** (j / 2.0) * self.t0)
            else:
                prev = self._times[-1]
                self._times.append(prev + prev ** self.eps_star)
        return self._times[k]

    def times(self, k_max):
        self.at(k_max)
        return list(self._times[: k_max + 1])

    def index_of(self, s):
        """The n with s in [t_{n-1}, t_n), for s >= t_0"""
        if s < self.t0:
            raise InvalidParams(f"{s} precedes t0={self.t0}")
        n = 1
        while self.at(n) <= s:
            n += 1
        return n

    def to_dict(self):
        return {"kind": self.kind, "t0": self.t0, "c": self.c, "eps_star": self.eps_star}

    @staticmethod
    def from_dict(record):
        return TimeSequence(record.get("kind"), record.get("t0"), record.get("c"), record.get("eps_star"))


def time_sequence(kind, params, k_max):
    sequence = TimeSequence(kind, params.get("t0"), params.get("c"), params.get("eps_star"))
    sequence.times(k_max)
    return sequence


def s_sequence_parameters(alpha, sigma, d, p_good, t0_min=1.0):
    """Choose (p', c, t_0) for an S-type sequence so that P(cube good) <= p_good.

    p' solves (1 - p')^(2^(d+1)) = 1 - p_good; c solves dl_cdf(alpha, c) = p'/2; t_0
    is large enough for a sleep point in every [t_k, t_{k+1}) with probability at
    least 1 - p'. The renewal part assumes t_0 is already in the limit regime, so
    t0_min lets the caller push it further.
    """
    check_alpha(alpha)
    if not 0 < p_good < 1 or not sigma > 0:
        raise InvalidParams("needs p_good in (0, 1) and sigma > 0")
    p_prime = 1.0 - (1.0 - p_good) ** (1.0 / 2 ** (d + 1))
    c = optimize.brentq(lambda x: dl_cdf(alpha, x) - p_prime / 2.0, 1e-300, 1.0, xtol=1e-300, maxiter=500)
    t0 = max(t0_min, -math.log(p_prime) / (sigma * (math.sqrt(1.0 + c) - 1.0)))
    return {"p_prime": p_prime, "c": c, "t0": t0}


class CouplingLevel:
    def __init__(self, k, time, cubes, infected, contained):
        self.k = k
        self.time = time
        self.cubes = frozenset(cubes)
        self.infected = frozenset(infected)
        self.contained = contained

    def __repr__(self):
        return f"CouplingLevel(k={self.k}, cubes={len(self.cubes)}, contained={self.contained})"


def coupling_levels(result, grid, times):
    """Dominating cube sets I_k of a lattice run and whether they contain the infection.

    I_1 holds the cubes reached by time t_1 when activity and recoveries are
    ignored. I_{k+1} adds every k-good cube connected to I_k through k-good cubes,
    then the l-infinity neighbourhood; each cube is classified at most once per
    level. Only levels whose time t_k is a checkpoint of the run are compared.

    Returns
    -------
    list of CouplingLevel
    """
    construction = result.construction
    if construction.rates.lambda_dd > 0:
        raise PreconditionLambdaDD(f"lambda_dd={construction.rates.lambda_dd} > 0")
    topology = construction.topology
    if topology.coordinates is None:
        raise InvalidParams("coupling needs a lattice topology")

    cube_sites = {}
    for v in topology.vertices:
        cube_sites.setdefault(grid.cube_of(topology.coordinates[v]), []).append(v)
    wake = _TraceView(construction, ClockKind.WAKE)
    sleep = _TraceView(construction, ClockKind.SLEEP)

    observed = {c.time: c.infected for c in result.checkpoints}
    levels = []
    k = 1
    cubes = None
    while times.at(k) <= result.end_time:
        t_k = times.at(k)
        if cubes is None:
            reached = richardson_set(construction, result.initial.infected, t_k)
            cubes = {grid.cube_of(topology.coordinates[v]) for v in reached}
        if t_k in observed:
            infected = observed[t_k]
            contained = all(grid.cube_of(topology.coordinates[v]) in cubes for v in infected)
            levels.append(CouplingLevel(k, t_k, cubes, infected, contained))

        status = {}

        def is_good(cube):
            if cube not in status:
                status[cube] = classify_cube(
                    cube_sites[cube], wake, sleep, times.at(k - 1), t_k, times.at(k + 1)
                )
            return status[cube] == CubeStatus.GOOD

        grown = set(cubes)
        frontier = list(cubes)
        while frontier:
            cube = frontier.pop()
            for nb in grid.neighbours(cube):
                if nb in cube_sites and nb not in grown and is_good(nb):
                    grown.add(nb)
                    frontier.append(nb)
        cubes = {c for c in grid.neighbourhood(grown) if c in cube_sites}
        k += 1
    return levels


def coupling_check(result, grid, times):
    """True iff the infected set lies in the dominating cube set at every observed t_k"""
    if not result.initial.infected:
        return True
    levels = coupling_levels(result, grid, times)
    failed = [level.k for level in levels if not level.contained]
    if failed:
        logging.warning(f"Coupling containment fails at levels {failed} for seed {result.seed}")
    return not failed


class _TraceView:
    def __init__(self, construction, kind):
        self.construction = construction
        self.kind = kind

    def __getitem__(self, v):
        return self.construction.trace(self.kind, v)
