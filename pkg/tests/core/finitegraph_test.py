import math

import numpy as np
import pytest

from cprd.core.clocks import ClockKind, GraphicalConstruction
from cprd.core.engine import Rates
from cprd.core.errors import EmptyReplicas, InvalidAlpha, InvalidEpsilon, InvalidParams, InvalidRates
from cprd.core.finitegraph import (
    SizeClass,
    b_n,
    bad_interval_prob_bound,
    c_n,
    check_gamma,
    classify_size,
    detect_events,
    event_b,
    event_c,
    extinction_recursion,
    gw_critical_lambda,
    gw_offspring_estimate,
    gw_offspring_prob,
    interval_scheme,
    log_prob_all_sleep_events,
    min_gamma,
    no_recovery_probability,
    recursion_replica,
    recursion_statistics,
    simulate_gw_generations,
    sleep_event_probability,
    thresholds,
    traversal_time,
)
from cprd.core.renewal import InterarrivalLaw, PointTrace
from cprd.core.topology import build, spanning_path
from cprd.core.utils import substream


class FixedScheme(object):
    """t_n, b_n and c_n pinned for one index"""

    def __init__(self, t, b, c, power, v_size=2):
        self._t = t
        self._b = b
        self._c = c
        self._power = power
        self.v_size = v_size

    def t(self, n):
        return self._t

    def b(self, n):
        return self._b

    def c(self, n):
        return self._c

    def power(self, n):
        return self._power


class TestThresholds(object):
    @pytest.mark.parametrize(
        "alpha, exp",
        [(0.5, (2.0, 2.0)), (0.8, (5.0, 4.5)), (1e-9, (1.0, 1.5))],
    )
    def test_thresholds(self, alpha, exp):
        assert thresholds(alpha) == pytest.approx(exp, abs=1e-6)

    @pytest.mark.parametrize(
        "alpha, v_size, exp",
        [
            (0.8, 6, SizeClass.SURVIVES),
            (0.8, 4, SizeClass.DIES),
            (0.8, 5, SizeClass.UNDETERMINED),
            (0.5, 3, SizeClass.SURVIVES),
            (0.5, 1, SizeClass.DIES),
            (0.5, 2, SizeClass.UNDETERMINED),
        ],
    )
    def test_classify_size(self, alpha, v_size, exp):
        assert classify_size(alpha, v_size) == exp

    def test_invalid_alpha(self):
        with pytest.raises(InvalidAlpha):
            thresholds(1.0)


class TestIntervalScheme(object):
    def test_formulas(self):
        assert b_n(2.0, 10) == pytest.approx(4.6052, abs=1e-4)
        assert c_n(2.0, 3, 0.5, 0.1) == pytest.approx(6.9644, abs=1e-4)

    def test_gamma(self):
        assert min_gamma(4, 2.0, 1.0) == 4.0
        assert min_gamma(1, 10.0, 10.0) == 1.0
        check_gamma(4.5, 4, 2.0, 1.0)
        with pytest.raises(InvalidParams):
            check_gamma(4.0, 4, 2.0, 1.0)
        with pytest.raises(InvalidRates):
            min_gamma(4, 0.0, 1.0)

    def test_small_beta(self):
        with pytest.raises(InvalidEpsilon):
            interval_scheme(2.0, 0.1, 0.5, 2, 1.0)
        with pytest.raises(InvalidEpsilon):
            interval_scheme(2.0, 0.0, 0.1, 20, 1.0)

    def test_table(self):
        scheme = interval_scheme(2.0, 0.2, 0.1, 4, 1.0)
        n0 = scheme.n0
        assert scheme.b(n0) * scheme.c(n0) <= scheme.power(n0) / 2.0 * (1 + 1e-9)
        assert len(scheme.table) == 100
        assert all(row["step_ok"] for row in scheme.table)
        assert scheme.t(n0 + 1) - scheme.t(n0) == pytest.approx(scheme.step(n0 + 1))
        assert list(scheme.to_frame().columns) == ["n", "b_n", "c_n", "t_n", "step", "step_ok", "t_exceeds_n"]
        with pytest.raises(InvalidParams):
            scheme.t(n0 - 1)

    def test_astronomical_start(self):
        scheme = interval_scheme(2.0, 0.05, 0.5, 10, 1.0, n_max=None)
        assert scheme.n0 > 10 ** 400
        assert all(row["step_ok"] for row in scheme.table[:5])

    def test_empty_table(self, caplog):
        scheme = interval_scheme(2.0, 0.2, 0.1, 4, 1.0, n_max=3)
        assert scheme.table == []
        assert "empty" in caplog.text


class TestEvents(object):
    def _construction(self, wake, sleep, infections):
        k2 = build({"kind": "complete", "n": 2})
        scripted = {}
        for v in k2.vertices:
            scripted[(ClockKind.WAKE, v)] = PointTrace.from_times(wake[v])
            scripted[(ClockKind.SLEEP, v)] = PointTrace.from_times(sleep[v])
        scripted[(ClockKind.INF_DD, 0)] = PointTrace.from_times(infections)
        return k2, GraphicalConstruction(k2, Rates(), None, scripted=scripted)

    def test_detect_events(self):
        k2, construction = self._construction(
            wake=[[105.0], [101.0]],
            sleep=[[101.0], [101.5]],
            infections=[102.2, 102.4, 102.6, 102.8],
        )
        events = detect_events(construction, FixedScheme(100.0, 4.0, 1.0, 2.0), spanning_path(k2), 7)
        assert events.to_dict() == {"A": True, "B": False, "C": True, "D": True}
        assert not events.all

    def test_quiet_sites(self):
        k2, construction = self._construction(
            wake=[[1.0], [2.0]],
            sleep=[[100.5], [103.0]],
            infections=[],
        )
        events = detect_events(construction, FixedScheme(100.0, 4.0, 1.0, 2.0), spanning_path(k2), 7)
        # no wake points left, path never traversed, one sleep too late
        assert events.to_dict() == {"A": True, "B": True, "C": False, "D": False}

    def test_sub_intervals(self):
        wake = [PointTrace.from_times([1.0, 2.5, 8.5]), PointTrace.from_times([3.5, 8.0])]
        # [4, 6] is free of wake points
        assert event_b(wake, 0.0, 2.0, 4.0)
        assert not event_b(wake, 0.0, 2.0, 2.0)

    def test_traversal(self):
        path = [
            PointTrace.from_times([1.0, 5.0]),
            PointTrace.from_times([2.0, 6.0]),
            PointTrace.from_times([4.0, 7.0]),
        ]
        assert traversal_time(path, 0.0) == 4.0
        assert traversal_time(path, 1.5) == 5.5
        assert traversal_time(path, 5.0) == math.inf
        assert event_c(path, 0.0, 8.0, 1.0)
        assert not event_c(path, 0.0, 2.0, 1.0)


class TestRecursion(object):
    def test_hand_trace(self):
        traces = [PointTrace.from_times([7.0]), PointTrace.from_times([10.0])]
        state = extinction_recursion(traces, 5.0, 0, 2)
        first, second = state.steps
        assert (first.X, first.S, first.argmax) == (7.0, 7.0, 0)
        assert list(first.W_by_site) == [0.0, 7.0]
        assert (second.X, second.S, second.argmax) == (3.0, 10.0, 1)
        assert second.X_by_site[0] == 0.0
        assert state.min_x == 3.0

    def test_short_wait(self):
        traces = [PointTrace.from_times([7.0]), PointTrace.from_times([3.0, 20.0])]
        state = extinction_recursion(traces, 10.0, 0, 2)
        # W_1 = 7 < t_hat: wait t_hat then the excess at S_1 + t_hat
        assert state[1].X == pytest.approx(10.0 + 3.0)
        assert state[1].S == pytest.approx(20.0)

    def test_ties_go_to_lowest_vertex(self):
        traces = [PointTrace.from_times([4.0]), PointTrace.from_times([6.0]), PointTrace.from_times([6.0])]
        state = extinction_recursion(traces, 1.0, 0, 2)
        assert state[1].argmax == 1

    def test_invalid(self):
        traces = [PointTrace.from_times([1.0])]
        with pytest.raises(InvalidParams):
            extinction_recursion(traces, 0.0, 0, 1)
        with pytest.raises(InvalidParams):
            extinction_recursion(traces, 1.0, 3, 1)

    def test_replicas(self):
        law = InterarrivalLaw.pareto(0.5)
        frame, fraction = recursion_statistics(law, 3, 1.0, 10, 4, seed=2)
        again, _ = recursion_statistics(law, 3, 1.0, 10, 4, seed=2)
        assert list(frame.columns) == ["replica", "min_X", "S_final"]
        assert frame.equals(again)
        assert 0.0 <= fraction <= 1.0
        state = recursion_replica(law, 3, 1.0, 10, 2, 1)
        assert state.min_x == frame["min_X"][1]
        assert np.all(np.diff(state.to_frame()["S_n"].values) >= 0)
        with pytest.raises(EmptyReplicas):
            recursion_statistics(law, 3, 1.0, 10, 0)

    @pytest.mark.parametrize(
        "lam, delta, sigma, m, v_size, exp",
        [
            (1.0, 1.0, 1.0, 1.0, 1, 0.15903),
            (1.0, 1.0, 1.0, 1e6, 1, 0.0),
            (1.0, 0.0, 1.0, 1.0, 1, 0.0),
        ],
    )
    def test_bad_interval_bound(self, lam, delta, sigma, m, v_size, exp):
        assert bad_interval_prob_bound(lam, delta, sigma, m, v_size) == pytest.approx(exp, abs=1e-5)

    def test_bad_interval_bound_invalid(self):
        with pytest.raises(InvalidRates):
            bad_interval_prob_bound(1.0, 0.0, 0.0, 1.0, 1)
        with pytest.raises(InvalidRates):
            bad_interval_prob_bound(-1.0, 1.0, 1.0, 1.0, 1)


class TestSurvivalProbabilities(object):
    def test_sleep_events(self):
        assert sleep_event_probability(1.0, 2.0, 3) == pytest.approx((1 - math.exp(-1.0)) ** 3)
        scheme = FixedScheme(10.0, 2.0, 2.5, 4.0, v_size=3)
        assert log_prob_all_sleep_events(scheme, 1.0, 1, 2) == pytest.approx(
            2 * 3 * 3 * math.log(1 - math.exp(-1.0))
        )

    def test_no_recovery(self):
        scheme = FixedScheme(10.0, 2.0, 2.5, 4.0)
        assert no_recovery_probability(0.1, scheme, 1) == pytest.approx(math.exp(-1.5))
        assert no_recovery_probability(0.0, scheme, 1) == 1.0


class TestGaltonWatson(object):
    def test_offspring_prob(self):
        assert gw_offspring_prob(1.0, 1.0, 1.0) == pytest.approx(1.0 / 6.0)
        assert gw_offspring_prob(1e9, 1.0, 1.0) == pytest.approx(1.0, abs=1e-8)
        assert gw_offspring_prob(1.0, 0.0, 0.0) == 1.0
        with pytest.raises(InvalidRates):
            gw_offspring_prob(0.0, 1.0, 1.0)

    def test_critical_lambda(self):
        critical = gw_critical_lambda(1.0, 1.0)
        assert critical == pytest.approx((3.0 + math.sqrt(17.0)) / 2.0)
        assert gw_offspring_prob(critical, 1.0, 1.0) == pytest.approx(0.5)
        assert gw_offspring_prob(critical * 1.01, 1.0, 1.0) > 0.5
        assert gw_offspring_prob(critical * 0.99, 1.0, 1.0) < 0.5

    def test_offspring_estimate(self):
        estimate, se = gw_offspring_estimate(2.0, 1.0, 1.0, 20000, substream(3))
        assert abs(estimate - 1.0 / 3.0) <= 4 * se
        assert gw_offspring_estimate(2.0, 0.0, 0.0, 10, substream(3)) == (1.0, 0.0)
        with pytest.raises(EmptyReplicas):
            gw_offspring_estimate(2.0, 1.0, 1.0, 0, substream(3))

    def test_generations(self):
        rng = substream(4)
        assert simulate_gw_generations(0.0, 5, rng) == [1, 0]
        assert simulate_gw_generations(1.0, 3, rng) == [1, 2, 4, 8]
        assert simulate_gw_generations(1.0, 10, rng, cap=5) == [1, 2, 4, 8]
