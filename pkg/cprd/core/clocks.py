import logging

from cprd.core.configuration import Activity, Configuration, SiteState, activity_at
from cprd.core.errors import InvalidParams, IoFailure
from cprd.core.renewal import InterarrivalLaw, PointTrace
from cprd.core.utils import substream


class ClockKind:
    RECOVERY = "rec"
    GENERAL_RECOVERY = "grec"
    SLEEP = "sleep"
    WAKE = "wake"
    INF_AA = "inf_aa"
    INF_AD = "inf_ad"
    INF_DA = "inf_da"
    INF_DD = "inf_dd"

    SITE = [RECOVERY, GENERAL_RECOVERY, SLEEP, WAKE]
    RECOVERIES = [RECOVERY, GENERAL_RECOVERY]
    INFECTIONS = [INF_AA, INF_AD, INF_DA, INF_DD]
    ALL = SITE + INFECTIONS

    # spawn-key namespace of each clock's random stream
    CODES = {
        RECOVERY: 0,
        SLEEP: 1,
        WAKE: 2,
        INF_AA: 3,
        INF_AD: 4,
        INF_DA: 5,
        INF_DD: 6,
        GENERAL_RECOVERY: 8,
    }

    # (source activity, target activity) of each infection symbol
    INFECTION_TYPES = {
        INF_AA: (Activity.ACTIVE, Activity.ACTIVE),
        INF_AD: (Activity.ACTIVE, Activity.DORMANT),
        INF_DA: (Activity.DORMANT, Activity.ACTIVE),
        INF_DD: (Activity.DORMANT, Activity.DORMANT),
    }

    @staticmethod
    def is_valid(kind):
        return kind in ClockKind.ALL

    @staticmethod
    def is_site_clock(kind):
        return kind in ClockKind.SITE


class GraphicalConstruction:
    """All symbol processes of one run, drawn lazily.

    Every (clock kind, vertex or edge) pair owns its own random stream, so the
    points of one clock never depend on which other clocks exist or how far they
    were read. Scripted traces replace the random clock they name.

    Parameters
    ----------
    topology : Topology
    rates : Rates
        anything exposing ``law_of(kind)``
    wake_law : InterarrivalLaw or None
        None leaves every site without wake points
    seed : int
    scripted : dict
        (kind, index) -> sequence of times or PointTrace
    """

    def __init__(self, topology, rates, wake_law, seed=0, scripted=None):
        self.topology = topology
        self.rates = rates
        self.wake_law = wake_law
        self.seed = seed
        self.scripted = {}
        for (kind, index), times in (scripted or {}).items():
            if not ClockKind.is_valid(kind):
                raise InvalidParams(f"Unknown clock kind {kind}")
            self.scripted[(kind, index)] = (
                times if isinstance(times, PointTrace) else PointTrace.from_times(times)
            )
        self._traces = {}

    def __repr__(self):
        return f"GraphicalConstruction({self.topology}, seed={self.seed}, scripted={len(self.scripted)})"

    def law_of(self, kind):
        if kind == ClockKind.WAKE:
            return self.wake_law
        return self.rates.law_of(kind)

    def is_live(self, kind, index):
        return (kind, index) in self.scripted or self.law_of(kind) is not None

    def stream_key(self, kind, index):
        """Spawn key of a random clock.

        On lattices the key is built from coordinates (site coordinates, or both
        endpoint coordinates of an edge in sorted order), so a clock keeps its points
        when the same seed is run on a larger box. Other graphs key on the index.
        """
        code = ClockKind.CODES[kind]
        coordinates = self.topology.coordinates
        if coordinates is None:
            return (code, index)
        if ClockKind.is_site_clock(kind):
            return (code,) + _zigzag(coordinates[index])
        u, v = sorted(tuple(int(c) for c in coordinates[w]) for w in self.topology.edges[index])
        return (code,) + _zigzag(u) + _zigzag(v)

    def trace(self, kind, index):
        key = (kind, index)
        trace = self._traces.get(key)
        if trace is None:
            if key in self.scripted:
                trace = self.scripted[key]
            else:
                law = self.law_of(kind)
                trace = (
                    PointTrace.empty()
                    if law is None
                    else PointTrace(law, substream(self.seed, *self.stream_key(kind, index)))
                )
            self._traces[key] = trace
        return trace

    def last_wake_sleep(self, v, t, inclusive=True):
        wake = self.trace(ClockKind.WAKE, v)
        sleep = self.trace(ClockKind.SLEEP, v)
        if inclusive:
            return wake.last_at_or_before(t), sleep.last_at_or_before(t)
        return wake.last_before(t), sleep.last_before(t)

    def activity(self, v, t, initial, inclusive=True):
        """Activity of v at t; with inclusive=False clock points at t itself are not yet seen"""
        last_wake, last_sleep = self.last_wake_sleep(v, t, inclusive)
        return activity_at(last_wake, last_sleep, initial, t)

    def configuration_at(self, t, infected, initial):
        """Snapshot at t for an infected set and the initial Configuration of the run"""
        sites = []
        for v in self.topology.vertices:
            last_wake, last_sleep = self.last_wake_sleep(v, t)
            sites.append(
                SiteState(v in infected, initial.sites[v].initial_activity, last_wake, last_sleep)
            )
        return Configuration(t, sites)


def _zigzag(coordinate):
    # spawn keys must be non-negative: 0, -1, 1, -2, ... -> 0, 1, 2, 3, ...
    return tuple(2 * int(c) if c >= 0 else -2 * int(c) - 1 for c in coordinate)


def _clock_index(kind, token, topology):
    if kind in ClockKind.SITE:
        return int(token)
    if "-" in token:
        u, v = (int(x) for x in token.split("-"))
        if (u, v) not in topology.edge_index:
            raise InvalidParams(f"{u}-{v} is not an edge")
        return topology.edge_index[(u, v)]
    return int(token)


def parse_scripted(text, topology):
    """Scripted traces from lines "kind id t1 t2 ...".

    Site clocks (rec, grec, sleep, wake) take a vertex index; infection clocks take
    an edge index or "u-v". Blank lines and lines starting with # are skipped.
    """
    scripted = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 2:
            raise InvalidParams(f"line {number}: expected 'kind id t1 t2 ...'")
        kind = fields[0]
        if not ClockKind.is_valid(kind):
            raise InvalidParams(f"line {number}: unknown clock kind {kind}")
        try:
            index = _clock_index(kind, fields[1], topology)
            times = [float(x) for x in fields[2:]]
        except ValueError as e:
            raise InvalidParams(f"line {number}: {e}") from e
        scripted[(kind, index)] = PointTrace.from_times(times)
    logging.debug(f"Parsed {len(scripted)} scripted traces")
    return scripted


def read_scripted(path, topology):
    try:
        with open(path, "r") as fh:
            text = fh.read()
    except OSError as e:
        raise IoFailure(f"cannot read scripted traces {path}: {e}") from e
    return parse_scripted(text, topology)


def exponential_or_none(rate):
    return InterarrivalLaw.exponential(rate) if rate > 0 else None
