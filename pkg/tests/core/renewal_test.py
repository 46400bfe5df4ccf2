import math

import numpy as np
import pytest

from cprd.core.errors import (
    EmptyReplicas,
    InvalidAlpha,
    InvalidLaw,
    InvalidParams,
    NeedsExtension,
    TraceTooShort,
)
from cprd.core.renewal import (
    InterarrivalLaw,
    LawKind,
    PointTrace,
    current_excess,
    dl_cdf,
    dl_cdf_closed_form,
    dl_empirical,
    gap_probe,
    sample_interarrival,
    simulate_trace,
)
from cprd.core.utils import substream


class TestInterarrivalLaw(object):
    def test_create_law(self):
        InterarrivalLaw.exponential(2.0)
        InterarrivalLaw.pareto(0.5)
        InterarrivalLaw.pareto(0.3, xm=2.0)
        InterarrivalLaw.log_pareto(0.6, 0.5)

        with pytest.raises(InvalidLaw):
            InterarrivalLaw.exponential(0.0)
        with pytest.raises(InvalidLaw):
            InterarrivalLaw.pareto(0.5, xm=-1.0)
        with pytest.raises(InvalidLaw):
            InterarrivalLaw.log_pareto(0.5, 0.8)
        with pytest.raises(InvalidLaw):
            InterarrivalLaw("weibull")
        with pytest.raises(InvalidAlpha):
            InterarrivalLaw.pareto(1.0)
        with pytest.raises(InvalidAlpha):
            InterarrivalLaw.pareto(0.0)
        # both are validation errors
        with pytest.raises(ValueError):
            InterarrivalLaw.pareto(1.5)

    @pytest.mark.parametrize(
        "record",
        [
            {"kind": "exponential", "rate": 1.5},
            {"kind": "pareto", "alpha": 0.5, "xm": 1.0},
            {"kind": "logpareto", "alpha": 0.7, "logexp": 0.2, "scale": 2.0},
        ],
    )
    def test_dict_record(self, record):
        law = InterarrivalLaw.from_dict(record)
        assert law.to_dict() == record
        assert law == InterarrivalLaw.from_dict(dict(record))

    def test_is_heavy_tailed(self):
        assert not InterarrivalLaw.exponential(1.0).is_heavy_tailed
        assert InterarrivalLaw.pareto(0.5).is_heavy_tailed
        assert InterarrivalLaw.log_pareto(0.5, 0.1).is_heavy_tailed
        assert LawKind.is_valid("pareto")
        assert not LawKind.is_valid("gamma")

    @pytest.mark.parametrize(
        "law, t, exp",
        [
            (InterarrivalLaw.pareto(0.5), 4.0, 0.5),
            (InterarrivalLaw.pareto(0.5), 0.5, 1.0),
            (InterarrivalLaw.pareto(0.5, xm=2.0), 8.0, 0.5),
            (InterarrivalLaw.exponential(2.0), 1.0, math.exp(-2.0)),
            (InterarrivalLaw.exponential(2.0), 0.0, 1.0),
        ],
    )
    def test_survival(self, law, t, exp):
        assert law.survival(t) == pytest.approx(exp)

    def test_pareto_inverse(self):
        assert InterarrivalLaw.pareto(0.5).inverse_survival(0.25) == pytest.approx(16.0)
        assert InterarrivalLaw.pareto(0.5).inverse_survival(1.0) == pytest.approx(1.0)
        with pytest.raises(ValueError):
            InterarrivalLaw.pareto(0.5).inverse_survival(0.0)

    @pytest.mark.parametrize("u", [0.9, 0.3, 0.01, 1e-6])
    def test_log_pareto_inverse(self, u):
        law = InterarrivalLaw.log_pareto(0.6, 0.4, scale=0.5)
        t = law.inverse_survival(u)
        assert law.survival(t) == pytest.approx(u, rel=1e-8)

    def test_exponential_mean(self):
        samples = InterarrivalLaw.exponential(2.0).sample(substream(1), size=10 ** 5)
        assert np.mean(samples) == pytest.approx(0.5, abs=0.01)

    def test_pareto_support_and_tail(self):
        law = InterarrivalLaw.pareto(0.5)
        samples = law.sample(substream(2), size=10 ** 5)
        assert np.all(samples >= 1.0)
        p = law.survival(10.0)
        se = math.sqrt(p * (1 - p) / len(samples))
        assert np.mean(samples >= 10.0) == pytest.approx(p, abs=3 * se)

    def test_sample_interarrival(self):
        law = InterarrivalLaw.log_pareto(0.5, 0.2)
        draw = sample_interarrival(law, substream(3))
        assert isinstance(draw, float)
        assert draw > 0
        assert sample_interarrival(law, substream(3)) == draw


class TestPointTrace(object):
    def test_simulate_trace(self):
        law = InterarrivalLaw.pareto(0.5)
        trace = simulate_trace(law, 100.0, substream(4))
        times = trace.times
        assert np.all(np.diff(times) > 0)
        assert np.all(times <= 100.0)
        assert np.all(times > 0)

    def test_zero_horizon(self):
        trace = simulate_trace(InterarrivalLaw.exponential(1.0), 0.0, substream(5))
        assert len(trace.times) == 0
        with pytest.raises(InvalidParams):
            simulate_trace(InterarrivalLaw.exponential(1.0), -1.0, substream(5))

    def test_poisson_count(self):
        law = InterarrivalLaw.exponential(1.0)
        counts = [simulate_trace(law, 10.0, substream(6, r)).count(10.0) for r in range(2000)]
        assert np.mean(counts) == pytest.approx(10.0, abs=3 * math.sqrt(10.0 / 2000))

    def test_extension_keeps_prefix(self):
        law = InterarrivalLaw.pareto(0.4)
        trace = simulate_trace(law, 50.0, substream(7))
        before = trace.times.copy()
        trace.extend(5000.0)
        after = trace.times
        assert np.array_equal(after[: len(before)], before)
        assert trace.horizon == 5000.0

    def test_deterministic_replay(self):
        law = InterarrivalLaw.log_pareto(0.5, 0.3)
        a = simulate_trace(law, 1000.0, substream(8, 1))
        b = simulate_trace(law, 1000.0, substream(8, 1))
        assert np.array_equal(a.times, b.times)

    @pytest.mark.parametrize("t, exp", [(3.0, (1.0, 2.0)), (0.0, (0.0, 2.0)), (2.0, (0.0, 3.0))])
    def test_current_excess(self, t, exp):
        trace = PointTrace.from_times([2.0, 5.0])
        assert current_excess(trace, t) == exp

    def test_current_excess_needs_extension(self):
        with pytest.raises(NeedsExtension):
            current_excess(PointTrace.from_times([2.0, 5.0]), 6.0)
        with pytest.raises(NeedsExtension):
            current_excess(PointTrace.from_times([2.0, 5.0], horizon=5.0), 5.5)
        with pytest.raises(InvalidParams):
            current_excess(PointTrace.from_times([2.0, 5.0]), -1.0)

    def test_current_excess_in_last_gap(self):
        trace = simulate_trace(InterarrivalLaw.pareto(0.5), 10.0, substream(10))
        last = trace.last_at_or_before(10.0) or 0.0
        current, excess = current_excess(trace, 10.0)
        assert trace.horizon == 10.0
        assert current == pytest.approx(10.0 - last)
        assert excess == pytest.approx(trace.next_after(10.0) - 10.0)
        assert excess > 0.0

    def test_current_plus_excess_is_gap(self):
        trace = simulate_trace(InterarrivalLaw.pareto(0.5), 1000.0, substream(9))
        for t in [0.5, 3.0, 77.7, 512.0]:
            trace.extend(trace.next_after(t))
            current, excess = current_excess(trace, t)
            last = trace.last_at_or_before(t) or 0.0
            assert current + excess == pytest.approx(trace.next_after(t) - last)

    def test_fixed_trace_queries(self):
        trace = PointTrace.from_times([1.0, 4.0, 6.0])
        assert trace.next_after(1.0) == 4.0
        assert trace.next_at_or_after(4.0) == 4.0
        assert trace.last_before(4.0) == 1.0
        assert trace.last_at_or_before(4.0) == 4.0
        assert trace.last_at_or_before(0.5) is None
        assert trace.count(5.0) == 2
        assert trace.excess(6.0) == math.inf
        assert trace.next_after(6.0) is None
        assert trace.current(5.0) == 1.0
        assert trace.current(0.5) == 0.5
        assert trace.has_point_in(3.0, 4.0)
        assert not trace.has_point_in(3.0, 4.0, closed_right=False)
        assert not trace.has_point_in(6.5, 10.0)

    def test_short_fixed_trace(self):
        trace = PointTrace.from_times([1.0], horizon=2.0)
        with pytest.raises(TraceTooShort):
            trace.next_after(3.0)
        with pytest.raises(TraceTooShort):
            trace.next_after(1.5)
        # TraceTooShort is a NeedsExtension
        with pytest.raises(NeedsExtension):
            trace.count(5.0)

    @pytest.mark.parametrize(
        "times, horizon",
        [([2.0, 1.0], math.inf), ([-1.0, 1.0], math.inf), ([1.0, 1.0], math.inf), ([1.0, 3.0], 2.0)],
    )
    def test_invalid_fixed_trace(self, times, horizon):
        with pytest.raises(InvalidParams):
            PointTrace.from_times(times, horizon)

    def test_empty_trace(self):
        trace = PointTrace.empty()
        assert trace.next_after(100.0) is None
        assert trace.count(100.0) == 0


class TestDynkinLamperti(object):
    @pytest.mark.parametrize(
        "alpha, x, exp",
        [
            (0.5, 1.0, 0.5),
            (0.5, 3.0, 2.0 / 3.0),
            (0.5, 0.0, 0.0),
            (0.3, 0.0, 0.0),
            (0.5, 0.25, 2.0 / math.pi * math.atan(0.5)),
        ],
    )
    def test_dl_cdf(self, alpha, x, exp):
        assert dl_cdf(alpha, x) == pytest.approx(exp, abs=1e-8)

    @pytest.mark.parametrize("alpha", [0.1, 0.3, 0.5, 0.8, 0.95])
    @pytest.mark.parametrize("x", [0.01, 0.5, 1.0, 2.0, 40.0])
    def test_quadrature_matches_beta_form(self, alpha, x):
        assert dl_cdf(alpha, x) == pytest.approx(dl_cdf_closed_form(alpha, x), abs=1e-8)

    def test_monotone_and_normalised(self):
        grid = [0.0, 0.1, 0.5, 1.0, 2.0, 10.0, 1e3, 1e6]
        values = [dl_cdf(0.4, x) for x in grid]
        assert all(a <= b for a, b in zip(values, values[1:]))
        assert dl_cdf(0.8, 1e8) >= 1 - 1e-6
        assert dl_cdf(0.5, math.inf) == pytest.approx(1.0, abs=1e-9)

    def test_invalid_arguments(self):
        with pytest.raises(InvalidAlpha):
            dl_cdf(1.0, 1.0)
        with pytest.raises(InvalidAlpha):
            dl_cdf(-0.2, 1.0)
        with pytest.raises(InvalidParams):
            dl_cdf(0.5, -1.0)

    def test_dl_empirical(self):
        grid = [0.0, 0.2, 1.0, 3.0, 10.0]
        empirical, distance = dl_empirical(InterarrivalLaw.pareto(0.5), 1e4, 2000, grid, seed=11)
        assert empirical[0] == 0.0
        assert np.all(np.diff(empirical) >= 0)
        assert distance < 0.06

    def test_dl_empirical_errors(self):
        with pytest.raises(EmptyReplicas):
            dl_empirical(InterarrivalLaw.pareto(0.5), 10.0, 0, [1.0])
        with pytest.raises(InvalidLaw):
            dl_empirical(InterarrivalLaw.exponential(1.0), 10.0, 10, [1.0])


class TestGapProbe(object):
    def test_exponential_fails(self):
        estimate, bound, satisfied = gap_probe(InterarrivalLaw.exponential(1.0), 100.0, 0.5, 2000, seed=12)
        assert bound == pytest.approx(0.1)
        assert estimate > 0.99
        assert not satisfied

    def test_pareto_holds(self):
        estimate, bound, satisfied = gap_probe(InterarrivalLaw.pareto(0.5), 1e4, 0.1, 2000, seed=13)
        assert bound == pytest.approx(1e4 ** -0.1)
        assert satisfied
        assert estimate < bound

    def test_errors(self):
        with pytest.raises(EmptyReplicas):
            gap_probe(InterarrivalLaw.pareto(0.5), 10.0, 0.5, 0)
        with pytest.raises(InvalidParams):
            gap_probe(InterarrivalLaw.pareto(0.5), 10.0, 1.5, 10)
