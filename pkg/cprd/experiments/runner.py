import itertools
import json
import logging
import math
import os
import time

import numpy as np
import pandas as pd

from cprd.core import finitegraph, percolation, renewal
from cprd.core.configuration import init
from cprd.core.engine import ContactProcess
from cprd.core.errors import ConfigInvalid, IoFailure
from cprd.core.oracle import oracle_run
from cprd.core.topology import build
from cprd.core.utils import (
    map_ordered,
    replica_seed,
    substream,
    utc_isoformat,
    utc_now,
    wilson_interval,
)
from cprd.experiments.config import ExperimentConfig, ExperimentKind, assign, lookup

ORACLE_STREAM = 11


class BaseExperiment:
    """One experiment kind: per-replica rows, then a summary of the collected table.

    Replicas run in any order on any worker; the table is always assembled in
    replica order.
    """

    COLUMNS = []

    def __init__(self, config):
        self.config = config
        self._topology = None

    @property
    def topology(self):
        if self._topology is None:
            try:
                self._topology = build(self.config.topology)
            except ValueError as e:
                raise ConfigInvalid("topology", str(e)) from e
        return self._topology

    def initial_configuration(self, topology):
        infected = self.config.infected
        if infected is None:
            infected = [topology.origin if topology.origin is not None else 0]
        try:
            return init(topology, infected, self.config.active)
        except ValueError as e:
            raise ConfigInvalid("infected", str(e)) from e

    def seed_of(self, replica):
        return replica_seed(self.config.seed, replica)

    def run_replica(self, replica):
        raise NotImplementedError("This should be implemented in subclass")

    def summarise(self, frame):
        raise NotImplementedError("This should be implemented in subclass")

    def collect(self):
        rows = map_ordered(self.run_replica, range(self.config.replicas), self.config.workers)
        return pd.DataFrame(list(itertools.chain.from_iterable(rows)), columns=self.COLUMNS)


class GrowthExperiment(BaseExperiment):
    COLUMNS = ["replica", "t", "infected", "r_t", "boundary_hit"]

    def __init__(self, config):
        super().__init__(config)
        self._boxes = {}

    def box(self, radius):
        if radius not in self._boxes:
            descriptor = dict(self.config.topology, radius=radius)
            try:
                self._boxes[radius] = build(descriptor)
            except ValueError as e:
                raise ConfigInvalid("topology", str(e)) from e
        return self._boxes[radius]

    def run_replica(self, replica):
        radius = int(self.config.topology.get("radius", 0))
        cap = int(self.config.param("max_radius", radius))
        seed = self.seed_of(replica)
        while True:
            topology = self.box(radius)
            process = ContactProcess(topology, self.config.rates, self.config.wake_law, seed=seed)
            last_try = 2 * radius > cap
            result = process.run(
                self.initial_configuration(topology),
                self.config.horizon,
                self.config.checkpoints,
                stop_on_boundary=not last_try,
            )
            if not result.boundary_hit or last_try:
                break
            logging.info(f"Replica {replica} reached the boundary at radius {radius}, rerunning")
            radius *= 2
        if result.boundary_hit:
            logging.warning(f"Replica {replica} still reaches the boundary at the radius cap {radius}")
        return [
            {
                "replica": replica,
                "t": c.time,
                "infected": c.infected_count,
                "r_t": c.r_t,
                "boundary_hit": result.boundary_hit,
            }
            for c in result.checkpoints
        ]

    def summarise(self, frame):
        per_time = []
        for t, group in frame.groupby("t", sort=True):
            r_t = group["r_t"].dropna().values.astype(float)
            per_time.append(
                {
                    "t": float(t),
                    "mean_infected": float(np.mean(group["infected"].values)),
                    "median_r_t": float(np.median(r_t)) if len(r_t) else None,
                    "median_r_t_over_sqrt_t": float(np.median(r_t / math.sqrt(t))) if len(r_t) and t > 0 else None,
                }
            )
        breaches = frame.groupby("replica")["boundary_hit"].any()
        return {"checkpoints": per_time, "cap_breaches": int(breaches.sum())}


class SurvivalExperiment(BaseExperiment):
    COLUMNS = ["replica", "T", "survived"]

    @property
    def times(self):
        return sorted(float(t) for t in self.config.param("times"))

    def run_replica(self, replica):
        horizon = self.times[-1]
        topology = self.topology
        process = ContactProcess(topology, self.config.rates, self.config.wake_law, seed=self.seed_of(replica))
        result = process.run(self.initial_configuration(topology), horizon)
        return [{"replica": replica, "T": t, "survived": result.survived(t)} for t in self.times]

    def summarise(self, frame):
        estimates = {}
        for t, group in frame.groupby("T", sort=True):
            survived = group["survived"].values.astype(bool)
            low, high = wilson_interval(int(survived.sum()), len(survived))
            estimates[f"{t:g}"] = {
                "p_hat": float(np.mean(survived)),
                "ci_low": low,
                "ci_high": high,
            }
        return {"survival": estimates}


class DlExperiment(BaseExperiment):
    COLUMNS = ["replica", "ratio"]

    def run_replica(self, replica):
        t = float(self.config.param("t"))
        trace = renewal.replica_trace(self.config.wake_law, self.config.seed, replica)
        return [{"replica": replica, "ratio": trace.excess(t) / t}]

    def summarise(self, frame):
        alpha = self.config.wake_law.alpha
        ratios = np.sort(frame["ratio"].values)
        grid = [float(x) for x in self.config.param("grid")]
        empirical = np.searchsorted(ratios, grid, side="right") / len(ratios)
        limit = np.array([renewal.dl_cdf(alpha, x) for x in grid])
        return {
            "grid": grid,
            "empirical": empirical.tolist(),
            "limit": limit.tolist(),
            "sup_distance": float(np.max(np.abs(empirical - limit))) if grid else 0.0,
            "dl_cdf_at_1": renewal.dl_cdf(alpha, 1.0),
            "closed_form_at_1": renewal.dl_cdf_closed_form(alpha, 1.0),
        }


class GapExperiment(BaseExperiment):
    COLUMNS = ["replica", "hit"]

    def run_replica(self, replica):
        t = float(self.config.param("t"))
        eps = float(self.config.param("eps"))
        trace = renewal.replica_trace(self.config.wake_law, self.config.seed, replica)
        return [{"replica": replica, "hit": trace.has_point_in(t, t + t ** eps)}]

    def summarise(self, frame):
        t = float(self.config.param("t"))
        eps = float(self.config.param("eps"))
        estimate = float(np.mean(frame["hit"].values.astype(bool)))
        bound = t ** (-eps)
        return {"estimate": estimate, "bound": bound, "satisfied": estimate <= bound}


class PercolationExperiment(BaseExperiment):
    COLUMNS = ["replica", "n", "R_n", "cells"]

    def run_replica(self, replica):
        d = int(self.config.param("d"))
        result = percolation.iterate(
            [(0,) * d],
            float(self.config.param("p")),
            int(self.config.param("n")),
            substream(self.seed_of(replica)),
            max_radius=int(self.config.param("max_radius", 1024)),
        )
        return result.rows(replica)

    def summarise(self, frame):
        n = frame["n"].values.astype(float)
        radii = frame["R_n"].values.astype(float)
        late = n >= 20
        envelope = n[late] * np.log(n[late]) ** 1.5
        return {
            "min_R_over_n": float(np.min(radii / n)) if len(n) else None,
            "max_R_over_n": float(np.max(radii / n)) if len(n) else None,
            "linear_lower_bound_holds": bool(np.all(radii >= n)),
            "log_envelope_holds": bool(np.all(radii[late] <= envelope)),
        }


class RecursionExperiment(BaseExperiment):
    COLUMNS = ["replica", "min_X", "S_final"]

    def run_replica(self, replica):
        state = finitegraph.recursion_replica(
            self.config.wake_law,
            int(self.config.param("v_size")),
            float(self.config.param("t_hat", 1.0)),
            int(self.config.param("steps")),
            self.config.seed,
            replica,
        )
        return [{"replica": replica, "min_X": state.min_x, "S_final": state.steps[-1].S}]

    def summarise(self, frame):
        threshold = float(self.config.param("threshold", 100.0))
        return {
            "threshold": threshold,
            "fraction_below": float(np.mean(frame["min_X"].values < threshold)),
            "mean_min_X": float(np.mean(frame["min_X"].values)),
        }


class CouplingExperiment(BaseExperiment):
    COLUMNS = ["replica", "levels", "contained"]

    @property
    def sequence(self):
        try:
            return percolation.TimeSequence.from_dict(self.config.param("sequence"))
        except ValueError as e:
            raise ConfigInvalid("params.sequence", str(e)) from e

    def run_replica(self, replica):
        sequence = self.sequence
        horizon = float(self.config.horizon)
        times = []
        k = 1
        while sequence.at(k) <= horizon:
            times.append(sequence.at(k))
            k += 1
        topology = self.topology
        process = ContactProcess(topology, self.config.rates, self.config.wake_law, seed=self.seed_of(replica))
        result = process.run(self.initial_configuration(topology), horizon, times)
        grid = percolation.CubeGrid(topology.dimension)
        levels = percolation.coupling_levels(result, grid, sequence)
        return [
            {
                "replica": replica,
                "levels": len(levels),
                "contained": all(level.contained for level in levels),
            }
        ]

    def summarise(self, frame):
        contained = frame["contained"].values.astype(bool)
        return {"fraction_contained": float(np.mean(contained)), "all_contained": bool(contained.all())}


class GwExperiment(BaseExperiment):
    COLUMNS = ["replica", "successes", "trials"]

    def run_replica(self, replica):
        trials = int(self.config.param("batch", 1000))
        estimate, _ = finitegraph.gw_offspring_estimate(
            float(self.config.param("lambda")),
            float(self.config.param("sigma")),
            float(self.config.param("delta")),
            trials,
            substream(self.seed_of(replica)),
        )
        return [{"replica": replica, "successes": int(round(estimate * trials)), "trials": trials}]

    def summarise(self, frame):
        lam = float(self.config.param("lambda"))
        sigma = float(self.config.param("sigma"))
        delta = float(self.config.param("delta"))
        trials = int(frame["trials"].sum())
        estimate = float(frame["successes"].sum()) / trials
        return {
            "estimate": estimate,
            "stderr": math.sqrt(estimate * (1 - estimate) / trials),
            "formula": finitegraph.gw_offspring_prob(lam, sigma, delta),
            "critical_lambda": finitegraph.gw_critical_lambda(sigma, delta),
        }


class OracleExperiment(BaseExperiment):
    """Event-driven engine against the discrete-time oracle on the same model.

    Both sides of a replica draw from that replica's seed, so a row never changes
    when the replica count does.
    """

    COLUMNS = ["replica", "engine_infected", "oracle_infected"]

    @property
    def watched(self):
        return int(self.config.param("vertex", 1))

    def oracle_seed(self, replica):
        return int(substream(self.seed_of(replica), ORACLE_STREAM).integers(2 ** 63))

    def run_replica(self, replica):
        topology = self.topology
        start = self.initial_configuration(topology)
        horizon = float(self.config.horizon)
        process = ContactProcess(topology, self.config.rates, self.config.wake_law, seed=self.seed_of(replica))
        result = process.run(start, horizon)
        oracle = oracle_run(
            topology,
            self.config.rates,
            self.config.wake_law,
            start,
            float(self.config.param("dt")),
            horizon,
            seed=self.oracle_seed(replica),
        )
        return [
            {
                "replica": replica,
                "engine_infected": self.watched in result.final_infected,
                "oracle_infected": self.watched in oracle.final_infected,
            }
        ]

    def summarise(self, frame):
        engine = frame["engine_infected"].values.astype(bool)
        oracle = frame["oracle_infected"].values.astype(bool)
        p_engine, p_oracle = float(np.mean(engine)), float(np.mean(oracle))
        n = len(frame)
        se = math.sqrt((p_engine * (1 - p_engine) + p_oracle * (1 - p_oracle)) / n)
        return {
            "p_engine": p_engine,
            "p_oracle": p_oracle,
            "combined_stderr": se,
            "agree": abs(p_engine - p_oracle) <= 3 * se if se > 0 else p_engine == p_oracle,
        }


EXPERIMENTS = {
    ExperimentKind.GROWTH: GrowthExperiment,
    ExperimentKind.SURVIVAL: SurvivalExperiment,
    ExperimentKind.DL: DlExperiment,
    ExperimentKind.GAP: GapExperiment,
    ExperimentKind.PERCOLATION: PercolationExperiment,
    ExperimentKind.RECURSION: RecursionExperiment,
    ExperimentKind.COUPLING: CouplingExperiment,
    ExperimentKind.GW: GwExperiment,
    ExperimentKind.ORACLE: OracleExperiment,
}


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, NaN and inf to None"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def dumps(record):
    return json.dumps(_clean(record), sort_keys=True, indent=2)


def _write(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def run_experiment(config):
    """Run every replica of an experiment and write its report files.

    Writes ``<out>/<kind>.csv`` (one row per replica record), ``<kind>.summary.json``
    (estimates plus the resolved config) and ``<kind>.timing.json`` (wall clock).

    Returns
    -------
    dict
        paths of the written files and the summary
    """
    experiment = EXPERIMENTS[config.kind](config)
    out = config.output_dir
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as e:
        raise IoFailure(f"cannot create output directory {out}: {e}") from e

    logging.info(f"Starting {config.kind} with seed {config.seed} over {config.replicas} replicas")
    started = utc_now()
    clock = time.perf_counter()
    frame = experiment.collect()
    summary = {
        "kind": config.kind,
        "seed": config.seed,
        "replicas": config.replicas,
        "config": config.to_dict(),
        "estimates": experiment.summarise(frame),
    }
    runtime = time.perf_counter() - clock

    paths = {
        "csv": os.path.join(out, f"{config.kind}.csv"),
        "summary": os.path.join(out, f"{config.kind}.summary.json"),
        "timing": os.path.join(out, f"{config.kind}.timing.json"),
    }
    try:
        frame.to_csv(paths["csv"], index=False)
    except OSError as e:
        raise IoFailure(f"cannot write {paths['csv']}: {e}") from e
    _write(paths["summary"], dumps(summary) + "\n")
    _write(
        paths["timing"],
        dumps(
            {
                "started": utc_isoformat(started),
                "finished": utc_isoformat(utc_now()),
                "runtime_seconds": runtime,
            }
        )
        + "\n",
    )
    logging.info(f"Finished {config.kind} in {runtime:.1f}s, results in {out}")
    return dict(paths, estimates=summary["estimates"])


def flatten(record, prefix=""):
    """Numeric and boolean leaves of a nested summary as {dotted.key: value}"""
    flat = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, name + "."))
        elif isinstance(value, (bool, int, float, np.generic)) and value is not None:
            flat[name] = value
    return flat


def _lookup_or_none(record, path):
    try:
        return lookup(record, path)
    except KeyError:
        return None


def sweep(base, grid):
    """Run base once per point of the cartesian grid and stack the summary statistics.

    Parameters
    ----------
    base : ExperimentConfig
    grid : dict
        dotted config path -> list of values

    Returns
    -------
    pd.DataFrame
        rows (grid_index, <grid paths>..., statistic, value), also written to
        ``<out>/sweep.csv``
    """
    if not grid or any(not values for values in grid.values()):
        raise ConfigInvalid("grid", "needs at least one path with at least one value")
    paths = sorted(grid)
    rows = []
    for index, values in enumerate(itertools.product(*(grid[p] for p in paths))):
        record = base.to_dict()
        for path, value in zip(paths, values):
            parent = path.rsplit(".", 1)[0]
            if "." in path and not isinstance(_lookup_or_none(record, parent), dict):
                raise ConfigInvalid(path, "no such record in the base config")
            assign(record, path, value)
        record["seed"] = base.seed ^ index
        record["out"] = os.path.join(base.output_dir, f"grid_{index}")
        config = ExperimentConfig.from_dict(record)
        estimates = run_experiment(config)["estimates"]
        for statistic, value in sorted(flatten(estimates).items()):
            row = {"grid_index": index}
            row.update(dict(zip(paths, values)))
            row.update({"statistic": statistic, "value": value})
            rows.append(row)

    frame = pd.DataFrame(rows, columns=["grid_index"] + paths + ["statistic", "value"])
    path = os.path.join(base.output_dir, "sweep.csv")
    try:
        os.makedirs(base.output_dir, exist_ok=True)
        frame.to_csv(path, index=False)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e
    logging.info(f"Sweep over {len(paths)} parameters wrote {len(frame)} rows to {path}")
    return frame
