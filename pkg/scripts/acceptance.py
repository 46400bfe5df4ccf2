"""End-to-end acceptance runs at full scale, far too slow for the unit suite.

Usage: python scripts/acceptance.py --out out/acceptance --workers 8 [--only dl gw]
"""
import argparse
import filecmp
import logging
import math
import os
import sys

import numpy as np

from cprd.core.clocks import ClockKind
from cprd.core.configuration import init
from cprd.core.engine import ContactProcess, Rates
from cprd.core.percolation import s_sequence_parameters
from cprd.core.renewal import InterarrivalLaw
from cprd.core.topology import build
from cprd.core.utils import replica_seed
from cprd.experiments.config import ExperimentConfig
from cprd.experiments.runner import run_experiment

PARETO_HALF = {"kind": "pareto", "alpha": 0.5, "xm": 1.0}
SLOWDOWN_RATES = {"lambda_aa": 2, "lambda_ad": 2, "lambda_da": 2, "lambda_dd": 0, "delta": 0, "sigma": 1}
SLOWDOWN_BOX = {"kind": "lattice", "d": 2, "radius": 200, "boundary": "absorbing"}


def _run(record, out, workers):
    record = dict(record, out=os.path.join(out, record["kind"]), workers=workers)
    return run_experiment(ExperimentConfig.from_dict(record))["estimates"]


def check_dl(out, workers):
    estimates = _run(
        {
            "kind": "dl",
            "wake_law": PARETO_HALF,
            "replicas": 10 ** 5,
            "seed": 1,
            "params": {"t": 1e4, "grid": list(np.linspace(0.05, 20.0, 400))},
        },
        out,
        workers,
    )
    return (
        estimates["sup_distance"] <= 0.02
        and abs(estimates["dl_cdf_at_1"] - 0.5) <= 1e-6
        and abs(estimates["closed_form_at_1"] - 0.5) <= 1e-6
    )


def check_percolation(out, workers):
    estimates = _run(
        {"kind": "percolation", "replicas": 20, "seed": 2, "params": {"d": 2, "p": 0.1, "n": 500}},
        out,
        workers,
    )
    return estimates["linear_lower_bound_holds"] and estimates["log_envelope_holds"]


def check_slowdown(out, workers):
    estimates = _run(
        {
            "kind": "growth",
            "topology": SLOWDOWN_BOX,
            "rates": SLOWDOWN_RATES,
            "wake_law": PARETO_HALF,
            "horizon": 1e4,
            "checkpoints": [10, 100, 1000, 10000],
            "replicas": 10,
            "seed": 3,
        },
        out,
        workers,
    )
    ratios = [c["median_r_t_over_sqrt_t"] for c in estimates["checkpoints"]]
    medians = {c["t"]: c["median_r_t"] for c in estimates["checkpoints"]}
    decreasing = all(a > b for a, b in zip(ratios, ratios[1:]))
    envelope = medians[100.0] * (math.log(1e4) / math.log(1e2)) ** 2 * 2
    return decreasing and medians[10000.0] <= envelope


def check_coupling(out, workers):
    sequence = s_sequence_parameters(0.5, 1.0, 2, 0.05, t0_min=10.0)
    logging.info(f"S-type sequence parameters {sequence}")
    estimates = _run(
        {
            "kind": "coupling",
            "topology": SLOWDOWN_BOX,
            "rates": SLOWDOWN_RATES,
            "wake_law": PARETO_HALF,
            "horizon": 1e4,
            "replicas": 20,
            "seed": 4,
            "params": {"sequence": {"kind": "s", "t0": sequence["t0"], "c": sequence["c"]}},
        },
        out,
        workers,
    )
    return estimates["all_contained"]


def check_finite_contrast(out, workers):
    curves = {}
    for size in [2, 6]:
        estimates = _run(
            {
                "kind": "survival",
                "topology": {"kind": "complete", "n": size},
                "rates": {"lambda": 1, "delta": 1, "sigma": 1},
                "wake_law": {"kind": "pareto", "alpha": 0.8, "xm": 1.0},
                "infected": list(range(size)),
                "replicas": 500,
                "seed": 5,
                "out": os.path.join(out, f"survival_{size}"),
                "params": {"times": [1e2, 1e3, 1e4]},
            },
            os.path.join(out, f"size_{size}"),
            workers,
        )
        curves[size] = estimates["survival"]
    small, large = curves[2], curves[6]
    separated = large["10000"]["ci_low"] > small["10000"]["ci_high"]
    p_small = [small[k]["p_hat"] for k in ["100", "1000", "10000"]]
    return separated and all(a > b for a, b in zip(p_small, p_small[1:]))


def check_gw(out, workers):
    estimates = _run(
        {
            "kind": "gw",
            "replicas": 100,
            "seed": 6,
            "params": {"lambda": 1, "sigma": 1, "delta": 1, "batch": 10 ** 4},
        },
        out,
        workers,
    )
    return abs(estimates["estimate"] - 1.0 / 6.0) <= 0.005


def check_oracle(out, workers):
    estimates = _run(
        {
            "kind": "oracle",
            "topology": {"kind": "complete", "n": 2},
            "rates": {"lambda": 1, "delta": 1, "sigma": 1},
            "wake_law": PARETO_HALF,
            "infected": [0],
            "horizon": 5.0,
            "replicas": 10 ** 4,
            "seed": 7,
            "params": {"dt": 1e-3, "vertex": 1},
        },
        out,
        workers,
    )
    return estimates["agree"]


def check_recursion(out, workers):
    estimates = _run(
        {
            "kind": "recursion",
            "wake_law": {"kind": "pareto", "alpha": 0.8, "xm": 1.0},
            "replicas": 200,
            "seed": 8,
            "params": {"v_size": 3, "t_hat": 1.0, "steps": 200, "threshold": 100},
        },
        out,
        workers,
    )
    return estimates["fraction_below"] >= 0.95


def check_invariants(out, workers):
    """Monotonicity, additivity and activity autonomy on random 4-vertex graphs"""
    law = InterarrivalLaw.pareto(0.5)
    rates = Rates.uniform(1.0, 1.0, 1.0)
    faster = rates.with_changes(lambda_aa=3.0, lambda_ad=3.0, lambda_da=3.0, lambda_dd=3.0)
    times = [5.0, 10.0]
    for i in range(100):
        topology = build({"kind": "random", "n": 4, "p": 0.6, "seed": i})
        seed = replica_seed(9, i)

        def started(infected):
            return ContactProcess(topology, rates, law, seed=seed).run(init(topology, infected), 10.0, times)

        small, large, other_start = started([0]), started([0, 1]), started([1])
        for a, b, c in zip(small.checkpoints, large.checkpoints, other_start.checkpoints):
            if not a.infected <= b.infected:
                logging.error(f"Monotonicity fails on graph {i} at t={a.time}")
                return False
            if b.infected != a.infected | c.infected:
                logging.error(f"Additivity fails on graph {i} at t={a.time}")
                return False
        other = ContactProcess(topology, faster, law, seed=seed)
        for v in topology.vertices:
            for kind in [ClockKind.WAKE, ClockKind.SLEEP]:
                mine = small.construction.trace(kind, v)
                theirs = other.construction.trace(kind, v)
                mine.extend(10.0)
                theirs.extend(10.0)
                if [t for t in mine.times if t <= 10.0] != [t for t in theirs.times if t <= 10.0]:
                    logging.error(f"Activity of vertex {v} on graph {i} depends on lambda")
                    return False
    return True


def check_reproducibility(out, workers):
    record = {
        "kind": "survival",
        "topology": {"kind": "complete", "n": 3},
        "rates": {"lambda": 1, "delta": 1, "sigma": 1},
        "wake_law": PARETO_HALF,
        "replicas": 50,
        "seed": 10,
        "params": {"times": [1.0, 10.0]},
    }
    first = _run(record, os.path.join(out, "first"), workers)
    second = _run(record, os.path.join(out, "second"), workers)
    names = ["survival.csv", "survival.summary.json"]
    same, _, _ = filecmp.cmpfiles(
        os.path.join(out, "first", "survival"), os.path.join(out, "second", "survival"), names, shallow=False
    )
    return first == second and sorted(same) == sorted(names)


CHECKS = {
    "dl": check_dl,
    "percolation": check_percolation,
    "slowdown": check_slowdown,
    "coupling": check_coupling,
    "finite-contrast": check_finite_contrast,
    "gw": check_gw,
    "oracle": check_oracle,
    "recursion": check_recursion,
    "invariants": check_invariants,
    "reproducibility": check_reproducibility,
}


def main(argv=None):
    parser = argparse.ArgumentParser(description="full-scale acceptance runs")
    parser.add_argument("--out", default="out/acceptance")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--only", nargs="*", choices=sorted(CHECKS), default=None)
    args = parser.parse_args(argv)

    failed = []
    for name in args.only or CHECKS:
        logging.info(f"Running acceptance check {name}")
        passed = CHECKS[name](os.path.join(args.out, name), args.workers)
        logging.info(f"{name}: {'PASS' if passed else 'FAIL'}")
        if not passed:
            failed.append(name)
    if failed:
        logging.error(f"Failed checks: {failed}")
    return 1 if failed else 0


if __name__ == "__main__":
    logging.basicConfig(format="%(asctime)s [%(levelname)s] %(message)s", level=logging.INFO)
    sys.exit(main())
