from cprd.core.errors import InvalidParams


class Activity:
    ACTIVE = "a"
    DORMANT = "d"

    ALL = [ACTIVE, DORMANT]

    @staticmethod
    def is_valid(activity):
        return activity in Activity.ALL


def activity_at(last_wake, last_sleep, initial, t):
    """Activity of a site at time t from its latest wake and sleep points.

    A site is active iff its last wake point is more recent than its last sleep
    point. Before either clock has rung the initial activity holds. Equal
    timestamps resolve to dormant.
    """
    if (last_wake is not None and last_wake > t) or (last_sleep is not None and last_sleep > t):
        raise InvalidParams(f"clock points after t={t}: wake {last_wake}, sleep {last_sleep}")
    if last_wake is None and last_sleep is None:
        return initial
    if last_sleep is None:
        return Activity.ACTIVE
    if last_wake is None:
        return Activity.DORMANT
    return Activity.ACTIVE if last_wake > last_sleep else Activity.DORMANT


class SiteState:
    def __init__(self, infected, initial_activity, last_wake=None, last_sleep=None):
        if not Activity.is_valid(initial_activity):
            raise InvalidParams(f"Unknown activity {initial_activity}")
        self.infected = bool(infected)
        self.initial_activity = initial_activity
        self.last_wake = last_wake
        self.last_sleep = last_sleep

    def __repr__(self):
        return f"SiteState(infected={self.infected}, wake={self.last_wake}, sleep={self.last_sleep})"

    def __eq__(self, other):
        return isinstance(other, SiteState) and self.to_dict() == other.to_dict()

    def activity(self, t):
        return activity_at(self.last_wake, self.last_sleep, self.initial_activity, t)

    def to_dict(self):
        return {
            "infected": self.infected,
            "initial_activity": self.initial_activity,
            "last_wake": self.last_wake,
            "last_sleep": self.last_sleep,
        }


class Configuration:
    """Snapshot of every site at one time point"""

    def __init__(self, time, sites):
        self.time = time
        self.sites = list(sites)

    def __repr__(self):
        return f"Configuration(t={self.time}, infected={sorted(self.infected)})"

    def __len__(self):
        return len(self.sites)

    @property
    def infected(self):
        return frozenset(v for v, site in enumerate(self.sites) if site.infected)

    @property
    def active(self):
        return frozenset(
            v for v, site in enumerate(self.sites) if site.activity(self.time) == Activity.ACTIVE
        )

    @property
    def initially_active(self):
        return frozenset(
            v for v, site in enumerate(self.sites) if site.initial_activity == Activity.ACTIVE
        )

    def activity(self, v):
        return self.sites[v].activity(self.time)

    def to_dict(self):
        return {"time": self.time, "sites": [site.to_dict() for site in self.sites]}


def init(topology, infected, active=None):
    """Configuration at time 0 with infected set I and active set A (default: all of V)"""
    infected = set(infected)
    active = set(topology.vertices) if active is None else set(active)
    topology.check_vertices(sorted(infected | active))
    return Configuration(
        0.0,
        [
            SiteState(v in infected, Activity.ACTIVE if v in active else Activity.DORMANT)
            for v in topology.vertices
        ],
    )
