import math

import numpy as np
import pytest

from cprd.core.configuration import init
from cprd.core.engine import Rates, run
from cprd.core.errors import EmptyReplicas, InvalidParams, InvalidRates, InvalidStep
from cprd.core.oracle import oracle_batch, oracle_run
from cprd.core.renewal import InterarrivalLaw
from cprd.core.topology import build
from cprd.core.utils import replica_seed


class TestOracle(object):
    def test_frozen_state(self):
        k3 = build({"kind": "complete", "n": 3})
        result = oracle_run(
            k3, Rates(), InterarrivalLaw.pareto(0.5), init(k3, [0, 2]), 0.01, 2.0, seed=1, checkpoints=[0.0, 1.0, 2.0]
        )
        assert [c.infected for c in result.checkpoints] == [frozenset([0, 2])] * 3
        assert result.extinction_time is None
        assert result.final_infected == frozenset([0, 2])

    def test_exponential_lifetime(self):
        single = build({"kind": "complete", "n": 1})
        batch = oracle_batch(single, Rates(delta=1.0), None, init(single, [0]), 1e-3, 1.0, replicas=4000, seed=2)
        p = math.exp(-1.0)
        assert batch.infection_probability(0) == pytest.approx(p, abs=3 * math.sqrt(p * (1 - p) / 4000))
        assert batch.replicas == 4000
        assert batch.survival_fraction() == batch.infection_probability(0)

    def test_extinction_times(self):
        single = build({"kind": "complete", "n": 1})
        batch = oracle_batch(single, Rates(delta=5.0), None, init(single, [0]), 0.01, 3.0, replicas=200, seed=3)
        dead = ~np.isnan(batch.extinction_time)
        assert dead.any()
        assert np.all(batch.extinction_time[dead] > 0)
        assert np.all(batch.extinction_time[dead] <= 3.0 + 1e-9)
        assert not batch.infected[dead].any()

    def test_dormant_sites_do_not_recover(self):
        single = build({"kind": "complete", "n": 1})
        batch = oracle_batch(
            single, Rates(delta=10.0), None, init(single, [0], active=[]), 0.01, 2.0, replicas=50, seed=4
        )
        assert batch.infected.all()

    def test_checkpoints(self):
        k2 = build({"kind": "complete", "n": 2})
        batch = oracle_batch(
            k2, Rates(lambda_aa=1.0), None, init(k2, [0]), 0.1, 1.0, replicas=10, seed=5, checkpoints=[0.3, 1.0, 7.0]
        )
        assert sorted(batch.checkpoints) == [0.3, 1.0]
        # no recoveries: infection only grows
        assert np.all(batch.checkpoints[0.3] <= batch.checkpoints[1.0])

    def test_errors(self):
        k2 = build({"kind": "complete", "n": 2})
        config = init(k2, [0])
        with pytest.raises(InvalidStep):
            oracle_batch(k2, Rates(), None, config, 0.0, 1.0)
        with pytest.raises(EmptyReplicas):
            oracle_batch(k2, Rates(), None, config, 0.1, 1.0, replicas=0)
        with pytest.raises(InvalidParams):
            oracle_batch(k2, Rates(), None, config, 0.1, math.inf)
        with pytest.raises(InvalidRates):
            oracle_batch(k2, Rates(recovery_law=InterarrivalLaw.pareto(0.5)), None, config, 0.1, 1.0)

    def test_coarse_step_warns(self, caplog):
        single = build({"kind": "complete", "n": 1})
        oracle_batch(single, Rates(delta=1.0), None, init(single, [0]), 0.5, 1.0)
        assert "coarse" in caplog.text

    def test_agrees_with_the_engine(self):
        k2 = build({"kind": "complete", "n": 2})
        rates = Rates.uniform(1.0, 1.0, 1.0)
        law = InterarrivalLaw.pareto(0.5)
        start = init(k2, [0])
        replicas = 2000

        batch = oracle_batch(k2, rates, law, start, 1e-3, 1.0, replicas=replicas, seed=6)
        p_oracle = batch.infection_probability(1)
        p_engine = np.mean(
            [1 in run(k2, rates, law, start, 1.0, seed=replica_seed(6, r)).final_infected for r in range(replicas)]
        )
        se = math.sqrt((p_engine * (1 - p_engine) + p_oracle * (1 - p_oracle)) / replicas)
        assert 0.0 < p_engine < 1.0
        assert abs(p_engine - p_oracle) <= 3 * se
