import logging
import math
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime

import numpy as np
import pytz
from scipy.stats import norm

REPLICA_KEY = 7  # spawn-key namespace for replica seeds, disjoint from clock kinds


def substream(seed, *key):
    """Independent, replayable random stream for a named component.

    Parameters
    ----------
    seed : int
        root seed of the run
    key : int
        path naming the component, e.g. (clock kind code, vertex index)

    Returns
    -------
    np.random.Generator
    """
    return np.random.default_rng(
        np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    )


def replica_seed(root_seed, replica):
    """64-bit seed for a replica, a pure function of (root_seed, replica)"""
    state = np.random.SeedSequence(
        entropy=int(root_seed), spawn_key=(REPLICA_KEY, int(replica))
    ).generate_state(2, np.uint32)
    return (int(state[0]) << 32) | int(state[1])


def binomial_stderr(p_hat, n):
    if n <= 0:
        return math.nan
    return math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / n)


def wilson_interval(successes, n, confidence=0.95):
    """Wilson score interval for a binomial proportion.

    Parameters
    ----------
    successes : int
    n : int
        number of trials, must be positive
    confidence : float

    Returns
    -------
    (float, float)
        lower and upper end, both inside [0, 1]
    """
    if n <= 0:
        raise ValueError(f"Wilson interval needs at least one trial, got {n}")
    z = norm.ppf(0.5 + confidence / 2.0)
    p_hat = successes / n
    denom = 1.0 + z ** 2 / n
    centre = (p_hat + z ** 2 / (2 * n)) / denom
    half = z * math.sqrt(p_hat * (1 - p_hat) / n + z ** 2 / (4 * n ** 2)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def map_ordered(fn, items, workers=1):
    """Apply fn to every item, results in input order.

    Workers never share state; with ``workers > 1`` the items are spread over a
    process pool and collected back in order by the caller's process.
    """
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logging.debug(f"Dispatching {len(items)} replicas over {workers} workers")
    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def utc_now():
    return datetime.now(pytz.UTC)


def utc_isoformat(dt):
    """ISO 8601 string of a datetime in UTC, naive datetimes taken as UTC"""
    if dt.tzinfo is None:
        dt = pytz.UTC.localize(dt)
    else:
        dt = dt.astimezone(pytz.UTC)
    return dt.isoformat()
