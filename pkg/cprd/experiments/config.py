import copy
import json
import logging
import numbers
import os

from cprd.core.engine import Rates
from cprd.core.errors import ConfigInvalid, IoFailure
from cprd.core.renewal import InterarrivalLaw

OUTPUT_DIR_ENV = "CPRD_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "out"


class ExperimentKind:
    GROWTH = "growth"
    SURVIVAL = "survival"
    DL = "dl"
    GAP = "gap"
    PERCOLATION = "percolation"
    RECURSION = "recursion"
    COUPLING = "coupling"
    GW = "gw"
    ORACLE = "oracle"

    ALL = [GROWTH, SURVIVAL, DL, GAP, PERCOLATION, RECURSION, COUPLING, GW, ORACLE]

    @staticmethod
    def is_valid(kind):
        return kind in ExperimentKind.ALL


# dotted paths that must hold a number for each kind
REQUIRED_NUMBERS = {
    ExperimentKind.GROWTH: ["horizon"],
    ExperimentKind.SURVIVAL: [],
    ExperimentKind.DL: ["wake_law.alpha", "params.t"],
    ExperimentKind.GAP: ["params.t", "params.eps"],
    ExperimentKind.PERCOLATION: ["params.d", "params.p", "params.n"],
    ExperimentKind.RECURSION: ["wake_law.alpha", "params.v_size", "params.steps"],
    ExperimentKind.COUPLING: ["horizon", "params.sequence.t0"],
    ExperimentKind.GW: ["params.lambda", "params.sigma", "params.delta"],
    ExperimentKind.ORACLE: ["horizon", "params.dt"],
}

# dotted paths that must be present (records or lists) for each kind
REQUIRED_FIELDS = {
    ExperimentKind.GROWTH: ["topology", "rates", "wake_law", "checkpoints"],
    ExperimentKind.SURVIVAL: ["topology", "rates", "wake_law", "params.times"],
    ExperimentKind.DL: ["wake_law", "params.grid"],
    ExperimentKind.GAP: ["wake_law"],
    ExperimentKind.PERCOLATION: [],
    ExperimentKind.RECURSION: ["wake_law"],
    ExperimentKind.COUPLING: ["topology", "rates", "wake_law", "params.sequence"],
    ExperimentKind.GW: [],
    ExperimentKind.ORACLE: ["topology", "rates", "wake_law"],
}


def lookup(record, path):
    """Value at a dotted path, KeyError if any segment is missing"""
    value = record
    for key in path.split("."):
        if not isinstance(value, dict) or key not in value:
            raise KeyError(path)
        value = value[key]
    return value


def assign(record, path, value):
    keys = path.split(".")
    target = record
    for key in keys[:-1]:
        target = target.setdefault(key, {})
        if not isinstance(target, dict):
            raise ConfigInvalid(path, f"{key} is not a record")
    target[keys[-1]] = value


class ExperimentConfig:
    """One experiment, fully described by a JSON document.

    Attributes
    ----------
    kind : str from the enum ExperimentKind
    topology : dict or None
        topology descriptor
    rates : Rates or None
    wake_law : InterarrivalLaw or None
    horizon : float or None
    checkpoints : list of float
    infected : list of int or None
        initially infected vertices, default the origin of a lattice or vertex 0
    active : list of int or None
        initially active vertices, default all
    replicas : int
    seed : int
    out : str or None
    workers : int
    params : dict
        kind-specific parameters
    """

    def __init__(
        self,
        kind,
        topology=None,
        rates=None,
        wake_law=None,
        horizon=None,
        checkpoints=None,
        infected=None,
        active=None,
        replicas=1,
        seed=0,
        out=None,
        workers=1,
        params=None,
    ):
        self.kind = kind
        self.topology = topology
        self.rates = rates
        self.wake_law = wake_law
        self.horizon = horizon
        self.checkpoints = list(checkpoints) if checkpoints is not None else []
        self.infected = infected
        self.active = active
        self.replicas = replicas
        self.seed = seed
        self.out = out
        self.workers = workers
        self.params = params or {}

    def __repr__(self):
        return f"ExperimentConfig({self.kind}, replicas={self.replicas}, seed={self.seed})"

    @property
    def output_dir(self):
        return self.out or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR

    def param(self, key, default=None):
        return self.params.get(key, default)

    def with_overrides(self, seed=None, out=None, replicas=None, workers=None):
        record = self.to_dict()
        for key, value in [("seed", seed), ("out", out), ("replicas", replicas), ("workers", workers)]:
            if value is not None:
                record[key] = value
        return ExperimentConfig.from_dict(record)

    def to_dict(self):
        return {
            "kind": self.kind,
            "topology": copy.deepcopy(self.topology),
            "rates": self.rates.to_dict() if self.rates is not None else None,
            "wake_law": self.wake_law.to_dict() if self.wake_law is not None else None,
            "horizon": self.horizon,
            "checkpoints": list(self.checkpoints),
            "infected": self.infected,
            "active": self.active,
            "replicas": self.replicas,
            "seed": self.seed,
            "out": self.out,
            "workers": self.workers,
            "params": copy.deepcopy(self.params),
        }

    @staticmethod
    def from_dict(record):
        """Validated config; every problem is reported as ConfigInvalid with its field path"""
        if not isinstance(record, dict):
            raise ConfigInvalid("<root>", "config must be a JSON object")
        kind = record.get("kind")
        if not ExperimentKind.is_valid(kind):
            raise ConfigInvalid("kind", f"must be one of {ExperimentKind.ALL}, got {kind}")

        for path in REQUIRED_FIELDS[kind]:
            try:
                value = lookup(record, path)
            except KeyError:
                raise ConfigInvalid(path, f"required for kind {kind}")
            if value is None:
                raise ConfigInvalid(path, f"required for kind {kind}")
        for path in REQUIRED_NUMBERS[kind]:
            try:
                value = lookup(record, path)
            except KeyError:
                raise ConfigInvalid(path, f"required for kind {kind}")
            if isinstance(value, bool) or not isinstance(value, numbers.Number):
                raise ConfigInvalid(path, f"must be a number, got {value!r}")

        for path in ["replicas", "seed", "workers"]:
            value = record.get(path, 1)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigInvalid(path, f"must be an integer, got {value!r}")
        if record.get("replicas", 1) < 1:
            raise ConfigInvalid("replicas", "must be at least 1")

        rates = _parse(record, "rates", Rates.from_dict)
        wake_law = _parse(record, "wake_law", InterarrivalLaw.from_dict)
        topology = record.get("topology")
        if topology is not None and not isinstance(topology, dict):
            raise ConfigInvalid("topology", "must be a descriptor record")
        checkpoints = record.get("checkpoints") or []
        if not isinstance(checkpoints, list) or not all(
            isinstance(c, numbers.Number) for c in checkpoints
        ):
            raise ConfigInvalid("checkpoints", "must be a list of times")

        return ExperimentConfig(
            kind,
            topology=topology,
            rates=rates,
            wake_law=wake_law,
            horizon=record.get("horizon"),
            checkpoints=checkpoints,
            infected=record.get("infected"),
            active=record.get("active"),
            replicas=record.get("replicas", 1),
            seed=record.get("seed", 0),
            out=record.get("out"),
            workers=record.get("workers", 1),
            params=record.get("params") or {},
        )

    @staticmethod
    def load(path):
        try:
            with open(path, "r") as fh:
                text = fh.read()
        except OSError as e:
            raise IoFailure(f"cannot read config {path}: {e}") from e
        try:
            record = json.loads(text)
        except ValueError as e:
            raise ConfigInvalid("<root>", f"not valid JSON: {e}") from e
        config = ExperimentConfig.from_dict(record)
        logging.debug(f"Loaded {config} from {path}")
        return config


def _parse(record, path, parser):
    value = record.get(path)
    if value is None:
        return None
    if not isinstance(value, dict):
        raise ConfigInvalid(path, "must be a record")
    try:
        return parser(value)
    except (ValueError, TypeError) as e:
        raise ConfigInvalid(path, str(e)) from e
