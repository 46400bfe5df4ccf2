import heapq
import logging
import math

from sortedcontainers import SortedList

from cprd.core.clocks import ClockKind, GraphicalConstruction, exponential_or_none
from cprd.core.configuration import Activity
from cprd.core.errors import EmptyReplicas, InvalidParams, InvalidRates
from cprd.core.renewal import InterarrivalLaw
from cprd.core.utils import map_ordered, replica_seed, wilson_interval

# queue priority of simultaneous events; sleep and wake are read off the traces
RECOVERY_PRIORITY = 0
INFECTION_PRIORITY = 3


class Rates:
    """Symbol rates of the graphical construction.

    Attributes
    ----------
    lambda_aa, lambda_ad, lambda_da, lambda_dd : float
        infection rate per edge of each (source, target) activity type
    delta : float
        rate of recovery symbols, effective only while the site is active
    sigma : float
        go-to-sleep rate
    recovery_law : InterarrivalLaw or None
        replaces the exponential(delta) active-recovery clock
    general_recovery_law : InterarrivalLaw or None
        recovery symbols effective in both activity states
    """

    INFECTION_FIELDS = {
        ClockKind.INF_AA: "lambda_aa",
        ClockKind.INF_AD: "lambda_ad",
        ClockKind.INF_DA: "lambda_da",
        ClockKind.INF_DD: "lambda_dd",
    }

    def __init__(
        self,
        lambda_aa=0.0,
        lambda_ad=0.0,
        lambda_da=0.0,
        lambda_dd=0.0,
        delta=0.0,
        sigma=0.0,
        recovery_law=None,
        general_recovery_law=None,
    ):
        self.lambda_aa = lambda_aa
        self.lambda_ad = lambda_ad
        self.lambda_da = lambda_da
        self.lambda_dd = lambda_dd
        self.delta = delta
        self.sigma = sigma
        self.recovery_law = recovery_law
        self.general_recovery_law = general_recovery_law
        self.check_valid_rates()

    @classmethod
    def uniform(cls, lam, delta, sigma):
        return cls(lam, lam, lam, lam, delta=delta, sigma=sigma)

    def __repr__(self):
        return (
            f"Rates(aa={self.lambda_aa}, ad={self.lambda_ad}, da={self.lambda_da}, "
            f"dd={self.lambda_dd}, delta={self.delta}, sigma={self.sigma})"
        )

    def __eq__(self, other):
        return isinstance(other, Rates) and self.to_dict() == other.to_dict()

    def check_valid_rates(self):
        for name in list(self.INFECTION_FIELDS.values()) + ["delta", "sigma"]:
            value = getattr(self, name)
            if value is None or not 0.0 <= value < math.inf:
                raise InvalidRates(f"{name} must be a finite nonnegative rate, got {value}")

    def infection_rate(self, kind):
        return getattr(self, self.INFECTION_FIELDS[kind])

    @property
    def infection_rates(self):
        return {kind: self.infection_rate(kind) for kind in ClockKind.INFECTIONS}

    def law_of(self, kind):
        """Interarrival law of a clock kind, None for a clock that never rings"""
        if kind == ClockKind.RECOVERY:
            if self.recovery_law is not None:
                return self.recovery_law
            return exponential_or_none(self.delta)
        if kind == ClockKind.GENERAL_RECOVERY:
            return self.general_recovery_law
        if kind == ClockKind.SLEEP:
            return exponential_or_none(self.sigma)
        if kind in self.INFECTION_FIELDS:
            return exponential_or_none(self.infection_rate(kind))
        raise InvalidParams(f"Rates carry no law for clock kind {kind}")

    def with_changes(self, **changes):
        record = self.to_dict()
        record.update(changes)
        return Rates.from_dict(record)

    def to_dict(self):
        record = {
            "lambda_aa": self.lambda_aa,
            "lambda_ad": self.lambda_ad,
            "lambda_da": self.lambda_da,
            "lambda_dd": self.lambda_dd,
            "delta": self.delta,
            "sigma": self.sigma,
        }
        if self.recovery_law is not None:
            record["recovery_law"] = self.recovery_law.to_dict()
        if self.general_recovery_law is not None:
            record["general_recovery_law"] = self.general_recovery_law.to_dict()
        return record

    @staticmethod
    def from_dict(record):
        record = dict(record)
        if "lambda" in record:
            lam = record.pop("lambda")
            for name in Rates.INFECTION_FIELDS.values():
                record.setdefault(name, lam)
        for name in ["recovery_law", "general_recovery_law"]:
            if isinstance(record.get(name), dict):
                record[name] = InterarrivalLaw.from_dict(record[name])
        return Rates(**record)


class Checkpoint:
    def __init__(self, time, infected, r_t):
        self.time = time
        self.infected = frozenset(infected)
        self.r_t = r_t

    @property
    def infected_count(self):
        return len(self.infected)

    def __repr__(self):
        return f"Checkpoint(t={self.time}, infected={self.infected_count}, r_t={self.r_t})"

    def to_dict(self):
        return {"time": self.time, "infected": self.infected_count, "r_t": self.r_t}


class RunResult:
    """Outcome of one run.

    Attributes
    ----------
    extinction_time : float or None
        None when the infection was still alive at the end of the run
    censored : bool
    horizon : float
    end_time : float
        extinction time, boundary stop time or horizon
    checkpoints : list of Checkpoint
    boundary_hit : bool
    seed : int
    final_infected : frozenset
    construction : GraphicalConstruction or None
        symbols the run used; not serialized
    initial : Configuration or None
    """

    def __init__(
        self,
        extinction_time,
        horizon,
        end_time,
        checkpoints,
        boundary_hit,
        seed,
        final_infected,
        construction=None,
        initial=None,
    ):
        self.extinction_time = extinction_time
        self.horizon = horizon
        self.end_time = end_time
        self.checkpoints = checkpoints
        self.boundary_hit = boundary_hit
        self.seed = seed
        self.final_infected = frozenset(final_infected)
        self.construction = construction
        self.initial = initial

    def __repr__(self):
        return f"RunResult(tau={self.extinction_time}, censored={self.censored}, seed={self.seed})"

    @property
    def censored(self):
        return self.extinction_time is None

    def survived(self, t):
        """tau > t"""
        return self.extinction_time is None or self.extinction_time > t

    def checkpoint_at(self, t):
        for checkpoint in self.checkpoints:
            if checkpoint.time == t:
                return checkpoint
        return None

    def to_dict(self):
        return {
            "extinction_time": self.extinction_time,
            "censored": self.censored,
            "horizon": self.horizon,
            "end_time": self.end_time,
            "boundary_hit": self.boundary_hit,
            "seed": self.seed,
            "checkpoints": [c.to_dict() for c in self.checkpoints],
            "final_infected": sorted(self.final_infected),
        }


class ContactProcess:
    """Event-driven contact process with dormancy on a finite graph.

    Only recovery and infection symbols are queued. A symbol is queued while its
    clock can change the state: recovery clocks of infected sites, infection
    clocks of edges with exactly one infected endpoint. Activity is read lazily
    from the wake and sleep traces.
    """

    def __init__(self, topology, rates, wake_law, seed=0, scripted=None, construction=None):
        self.topology = topology
        self.rates = rates
        self.wake_law = wake_law
        self.seed = seed
        self.construction = construction or GraphicalConstruction(
            topology, rates, wake_law, seed=seed, scripted=scripted
        )
        self._reset(None, math.inf)

    def _reset(self, init, horizon):
        self.initial = init
        self.horizon = horizon
        self.infected = set()
        self._queue = SortedList()
        self._scheduled = {}
        self.boundary_hit = False

    def activity(self, v, t, inclusive=True):
        return self.construction.activity(v, t, self.initial.sites[v].initial_activity, inclusive)

    def _schedule(self, kind, index, after):
        key = (kind, index)
        if key in self._scheduled or not self.construction.is_live(kind, index):
            return
        nxt = self.construction.trace(kind, index).next_after(after)
        if nxt is None or nxt > self.horizon:
            return
        priority = RECOVERY_PRIORITY if kind in ClockKind.RECOVERIES else INFECTION_PRIORITY
        entry = (nxt, priority, ClockKind.CODES[kind], index)
        self._queue.add(entry)
        self._scheduled[key] = entry

    def _cancel(self, kind, index):
        entry = self._scheduled.pop((kind, index), None)
        if entry is not None:
            self._queue.remove(entry)

    def _update_edge(self, e, t):
        u, v = self.topology.edges[e]
        if (u in self.infected) != (v in self.infected):
            for kind in ClockKind.INFECTIONS:
                self._schedule(kind, e, t)
        else:
            for kind in ClockKind.INFECTIONS:
                self._cancel(kind, e)

    def _infect(self, v, t):
        self.infected.add(v)
        if v in self.topology.boundary_vertices:
            self.boundary_hit = True
        for kind in ClockKind.RECOVERIES:
            self._schedule(kind, v, t)
        for e in self.topology.incident_edges[v]:
            self._update_edge(e, t)

    def _recover(self, v, t):
        self.infected.discard(v)
        for kind in ClockKind.RECOVERIES:
            self._cancel(kind, v)
        for e in self.topology.incident_edges[v]:
            self._update_edge(e, t)

    def _on_recovery(self, kind, v, t):
        # wake or sleep points at t come after the recovery symbol
        if kind == ClockKind.GENERAL_RECOVERY or self.activity(v, t, inclusive=False) == Activity.ACTIVE:
            self._recover(v, t)
        else:
            self._schedule(kind, v, t)

    def _on_infection(self, kind, e, t):
        x, y = self.topology.edges[e]
        source, target = (x, y) if x in self.infected else (y, x)
        wanted_source, wanted_target = ClockKind.INFECTION_TYPES[kind]
        if (
            self.activity(source, t) == wanted_source
            and self.activity(target, t) == wanted_target
        ):
            self._infect(target, t)
        else:
            self._schedule(kind, e, t)

    def _on_event(self, entry):
        t, _, code, index = entry
        kind = CODE_TO_KIND[code]
        del self._scheduled[(kind, index)]
        if kind in ClockKind.RECOVERIES:
            self._on_recovery(kind, index, t)
        else:
            self._on_infection(kind, index, t)

    def _snapshot(self, t):
        return Checkpoint(t, self.infected, self.topology.range_of(self.infected))

    def run(self, init, horizon, checkpoints=(), stop_on_boundary=False):
        """Simulate from init up to horizon.

        Parameters
        ----------
        init : Configuration
        horizon : float
        checkpoints : sequence of float
            state recorded after every event at or before each time
        stop_on_boundary : bool
            end the run as soon as an infected site touches the box boundary

        Returns
        -------
        RunResult
        """
        if not 0.0 <= horizon < math.inf:
            raise InvalidParams(f"horizon must be finite and nonnegative, got {horizon}")
        if len(init) != self.topology.n:
            raise InvalidParams(f"configuration has {len(init)} sites, topology {self.topology.n}")
        self._reset(init, horizon)
        pending = sorted(c for c in set(checkpoints) if 0.0 <= c <= horizon)
        recorded = []

        for v in sorted(init.infected):
            self._infect(v, 0.0)

        extinction_time = 0.0 if not self.infected else None
        end_time = 0.0 if not self.infected else horizon
        stopped = stop_on_boundary and self.boundary_hit
        if stopped:
            end_time = 0.0

        while self._queue and extinction_time is None and not stopped:
            entry = self._queue.pop(0)
            t = entry[0]
            while pending and pending[0] < t:
                recorded.append(self._snapshot(pending.pop(0)))
            self._on_event(entry)
            if not self.infected:
                extinction_time = end_time = t
            elif stop_on_boundary and self.boundary_hit:
                stopped = True
                end_time = t

        while pending and pending[0] <= end_time:
            recorded.append(self._snapshot(pending.pop(0)))
        if extinction_time is not None:
            # the empty state persists
            recorded.extend(self._snapshot(c) for c in pending)

        logging.debug(
            f"Run seed={self.seed} ended at {end_time} with {len(self.infected)} infected"
        )
        return RunResult(
            extinction_time,
            horizon,
            end_time,
            recorded,
            self.boundary_hit,
            self.seed,
            self.infected,
            construction=self.construction,
            initial=init,
        )


CODE_TO_KIND = {code: kind for kind, code in ClockKind.CODES.items()}


def run(topology, rates, wake_law, init, horizon, checkpoints=(), seed=0, scripted=None, stop_on_boundary=False):
    return ContactProcess(topology, rates, wake_law, seed=seed, scripted=scripted).run(
        init, horizon, checkpoints, stop_on_boundary=stop_on_boundary
    )


def _survives(task):
    topology, rates, wake_law, init, horizon, seed = task
    return run(topology, rates, wake_law, init, horizon, seed=seed).survived(horizon)


def survival_estimate(topology, rates, wake_law, init, T, replicas, seed=0, workers=1):
    """Fraction of replicas with tau > T and its 95% Wilson interval.

    Returns
    -------
    (float, (float, float))
    """
    if replicas < 1:
        raise EmptyReplicas("survival_estimate needs at least one replica")
    tasks = [
        (topology, rates, wake_law, init, T, replica_seed(seed, r)) for r in range(replicas)
    ]
    survived = sum(map_ordered(_survives, tasks, workers))
    return survived / replicas, wilson_interval(survived, replicas)


def richardson_set(construction, sources, t):
    """Sites reachable from sources by time t through any infection symbol.

    Activity and recoveries are ignored, so the set contains the infected set of
    every run sharing the construction. First passage times come from Dijkstra's
    algorithm: an edge is crossed at its first infection symbol after arrival.
    """
    topology = construction.topology
    arrival = {v: 0.0 for v in sources}
    heap = [(0.0, v) for v in sorted(arrival)]
    heapq.heapify(heap)
    done = set()
    while heap:
        s, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for e in topology.incident_edges[u]:
            x, y = topology.edges[e]
            w = y if x == u else x
            if w in done:
                continue
            crossings = [
                construction.trace(kind, e).next_after(s)
                for kind in ClockKind.INFECTIONS
                if construction.is_live(kind, e)
            ]
            crossings = [c for c in crossings if c is not None and c <= t]
            if crossings and min(crossings) < arrival.get(w, math.inf):
                arrival[w] = min(crossings)
                heapq.heappush(heap, (arrival[w], w))
    return frozenset(v for v, s in arrival.items() if s <= t)
