import logging
import math

import numpy as np

from cprd.core.clocks import ClockKind
from cprd.core.configuration import Activity
from cprd.core.engine import Checkpoint, RunResult
from cprd.core.errors import EmptyReplicas, InvalidParams, InvalidRates, InvalidStep


class OracleResult:
    """Replicas of the discrete-time oracle.

    Attributes
    ----------
    infected : np.ndarray
        (replicas, n) infection indicators at the horizon
    extinction_time : np.ndarray
        (replicas,) end of the step in which the infection died out, nan if alive
    checkpoints : dict
        time -> (replicas, n) infection indicators
    """

    def __init__(self, infected, extinction_time, checkpoints, horizon, seed):
        self.infected = infected
        self.extinction_time = extinction_time
        self.checkpoints = checkpoints
        self.horizon = horizon
        self.seed = seed

    @property
    def replicas(self):
        return self.infected.shape[0]

    def infection_probability(self, v):
        return float(np.mean(self.infected[:, v]))

    def survival_fraction(self):
        return float(np.mean(np.isnan(self.extinction_time)))


def oracle_batch(topology, rates, wake_law, init, dt, horizon, replicas=1, seed=0, checkpoints=()):
    """Brute-force discrete-time approximation of the contact process.

    Each step of length dt runs the phases recovery, sleep, wake, infection. Every
    exponential clock rings in a step with probability rate * dt; wake points are
    drawn from the renewal law in continuous time and fire in the step containing
    them. Infection uses the infected set at the start of its phase, so an
    infection never chains within one step. Bias is O(dt).
    """
    if not dt > 0:
        raise InvalidStep(f"dt must be positive, got {dt}")
    if replicas < 1:
        raise EmptyReplicas("oracle needs at least one replica")
    if not 0.0 <= horizon < math.inf:
        raise InvalidParams(f"horizon must be finite and nonnegative, got {horizon}")
    if rates.recovery_law is not None or rates.general_recovery_law is not None:
        raise InvalidRates("the oracle only knows exponential recovery clocks")
    fastest = max([rates.delta, rates.sigma] + list(rates.infection_rates.values()))
    if fastest * dt > 0.1:
        logging.warning(f"Oracle step {dt} is coarse for rate {fastest}")

    rng = np.random.default_rng(seed)
    n = topology.n
    shape = (replicas, n)
    infected = np.tile(np.array([v in init.infected for v in range(n)]), (replicas, 1))
    active = np.tile(
        np.array([init.sites[v].initial_activity == Activity.ACTIVE for v in range(n)]),
        (replicas, 1),
    )
    next_wake = (
        np.asarray(wake_law.sample(rng, size=shape), dtype=float)
        if wake_law is not None
        else np.full(shape, np.inf)
    )
    extinction_time = np.where(infected.any(axis=1), np.nan, 0.0)
    pending = sorted(c for c in set(checkpoints) if 0.0 <= c <= horizon)
    recorded = {}
    while pending and pending[0] == 0.0:
        recorded[pending.pop(0)] = infected.copy()

    edges = np.array(topology.edges, dtype=np.int64).reshape(-1, 2)
    steps = int(math.ceil(horizon / dt - 1e-9))
    p_recover = rates.delta * dt
    p_sleep = rates.sigma * dt
    p_infect = {kind: rate * dt for kind, rate in rates.infection_rates.items() if rate > 0}

    for step in range(steps):
        t_end = (step + 1) * dt
        if p_recover > 0:
            infected &= ~((rng.random(shape) < p_recover) & active)
        if p_sleep > 0:
            active &= ~(rng.random(shape) < p_sleep)
        while True:
            ringing = next_wake <= t_end
            if not ringing.any():
                break
            active |= ringing
            next_wake[ringing] += np.asarray(wake_law.sample(rng, size=int(ringing.sum())), dtype=float)

        sources = infected.copy()
        for kind, p in p_infect.items():
            wanted_source, wanted_target = ClockKind.INFECTION_TYPES[kind]
            source_ok = active if wanted_source == Activity.ACTIVE else ~active
            target_ok = active if wanted_target == Activity.ACTIVE else ~active
            for x, y in edges:
                ring = rng.random(replicas) < p
                infected[:, y] |= ring & sources[:, x] & source_ok[:, x] & target_ok[:, y]
                infected[:, x] |= ring & sources[:, y] & source_ok[:, y] & target_ok[:, x]

        died = np.isnan(extinction_time) & ~infected.any(axis=1)
        extinction_time[died] = t_end
        while pending and pending[0] <= t_end + 1e-9 * dt:
            recorded[pending.pop(0)] = infected.copy()

    for c in pending:
        recorded[c] = infected.copy()
    logging.debug(f"Oracle ran {steps} steps over {replicas} replicas")
    return OracleResult(infected, extinction_time, recorded, horizon, seed)


def oracle_run(topology, rates, wake_law, init, dt, horizon, seed=0, checkpoints=()):
    """Single oracle replica as a RunResult"""
    batch = oracle_batch(topology, rates, wake_law, init, dt, horizon, 1, seed, checkpoints)
    tau = batch.extinction_time[0]
    final = frozenset(np.flatnonzero(batch.infected[0]).tolist())
    recorded = []
    for c in sorted(batch.checkpoints):
        infected = np.flatnonzero(batch.checkpoints[c][0]).tolist()
        recorded.append(Checkpoint(c, infected, topology.range_of(infected)))
    extinction_time = None if np.isnan(tau) else float(tau)
    return RunResult(
        extinction_time,
        horizon,
        horizon if extinction_time is None else extinction_time,
        recorded,
        topology.touches_boundary(final),
        seed,
        final,
    )
