import json

import pytest

from cprd.core.engine import Rates
from cprd.core.errors import ConfigInvalid, IoFailure
from cprd.core.renewal import InterarrivalLaw
from cprd.experiments.config import ExperimentConfig, ExperimentKind, assign, lookup

PARETO_HALF = {"kind": "pareto", "alpha": 0.5, "xm": 1.0}


def growth_record(**changes):
    record = {
        "kind": "growth",
        "topology": {"kind": "lattice", "d": 1, "radius": 4},
        "rates": {"lambda": 1.0, "delta": 1.0, "sigma": 1.0},
        "wake_law": PARETO_HALF,
        "horizon": 5.0,
        "checkpoints": [1.0, 5.0],
        "replicas": 3,
        "seed": 11,
    }
    record.update(changes)
    return record


class TestExperimentConfig(object):
    def test_from_dict(self):
        config = ExperimentConfig.from_dict(growth_record())
        assert config.kind == ExperimentKind.GROWTH
        assert config.rates == Rates.uniform(1.0, 1.0, 1.0)
        assert config.wake_law == InterarrivalLaw.pareto(0.5)
        assert config.checkpoints == [1.0, 5.0]
        assert config.workers == 1
        assert config.params == {}

    def test_dict_record(self):
        config = ExperimentConfig.from_dict(growth_record(params={"max_radius": 16}))
        again = ExperimentConfig.from_dict(config.to_dict())
        assert again.to_dict() == config.to_dict()
        json.dumps(config.to_dict())

    def test_with_overrides(self):
        config = ExperimentConfig.from_dict(growth_record())
        changed = config.with_overrides(seed=5, out="elsewhere", workers=None)
        assert (changed.seed, changed.out, changed.workers) == (5, "elsewhere", 1)
        assert config.seed == 11

    @pytest.mark.parametrize(
        "record, field",
        [
            ({"kind": "dl", "wake_law": {"kind": "pareto"}, "params": {"t": 1e4, "grid": [1.0]}}, "wake_law.alpha"),
            ({"kind": "dl", "params": {"t": 1e4, "grid": [1.0]}}, "wake_law"),
            ({"kind": "dl", "wake_law": PARETO_HALF, "params": {"t": "long", "grid": [1.0]}}, "params.t"),
            ({"kind": "percolation", "params": {"d": 2, "p": True, "n": 3}}, "params.p"),
            ({"kind": "epidemic"}, "kind"),
            ([1, 2], "<root>"),
            (growth_record(rates={"delta": -1.0}), "rates"),
            (growth_record(rates={"speed": 1.0}), "rates"),
            (growth_record(wake_law={"kind": "pareto", "alpha": 1.5}), "wake_law"),
            (growth_record(wake_law="pareto"), "wake_law"),
            (growth_record(topology="lattice"), "topology"),
            (growth_record(checkpoints=[1.0, "end"]), "checkpoints"),
            (growth_record(replicas=0), "replicas"),
            (growth_record(seed=1.5), "seed"),
            (growth_record(horizon=None), "horizon"),
        ],
    )
    def test_invalid(self, record, field):
        with pytest.raises(ConfigInvalid) as e:
            ExperimentConfig.from_dict(record)
        assert e.value.field == field

    def test_output_dir(self, monkeypatch):
        config = ExperimentConfig.from_dict(growth_record())
        monkeypatch.setenv("CPRD_OUTPUT_DIR", "somewhere")
        assert config.output_dir == "somewhere"
        monkeypatch.delenv("CPRD_OUTPUT_DIR")
        assert config.output_dir == "out"
        assert config.with_overrides(out="mine").output_dir == "mine"

    def test_load(self, tmp_path):
        path = tmp_path / "growth.json"
        path.write_text(json.dumps(growth_record()))
        assert ExperimentConfig.load(str(path)).seed == 11

        with pytest.raises(IoFailure):
            ExperimentConfig.load(str(tmp_path / "missing.json"))

        path.write_text("{not json")
        with pytest.raises(ConfigInvalid) as e:
            ExperimentConfig.load(str(path))
        assert e.value.field == "<root>"


class TestPaths(object):
    def test_lookup(self):
        record = {"params": {"sequence": {"t0": 2.0}}}
        assert lookup(record, "params.sequence.t0") == 2.0
        with pytest.raises(KeyError):
            lookup(record, "params.sequence.c")
        with pytest.raises(KeyError):
            lookup(record, "params.sequence.t0.x")

    def test_assign(self):
        record = {"params": {"t": 1.0}, "seed": 3}
        assign(record, "params.t", 2.0)
        assign(record, "params.sequence.c", 3.0)
        assert record["params"] == {"t": 2.0, "sequence": {"c": 3.0}}
        with pytest.raises(ConfigInvalid):
            assign(record, "seed.value", 1)
