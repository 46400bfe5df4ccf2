import logging
import math
from bisect import bisect_left, bisect_right

import numpy as np
from scipy import integrate, optimize, special

from cprd.core.errors import (
    EmptyReplicas,
    InvalidAlpha,
    InvalidLaw,
    InvalidParams,
    NeedsExtension,
    TraceTooShort,
)
from cprd.core.utils import replica_seed, substream


class LawKind:
    EXPONENTIAL = "exponential"
    PARETO = "pareto"
    LOG_PARETO = "logpareto"

    ALL = [EXPONENTIAL, PARETO, LOG_PARETO]
    HEAVY_TAILED = [PARETO, LOG_PARETO]

    @staticmethod
    def is_valid(kind):
        return kind in LawKind.ALL


def check_alpha(alpha):
    if alpha is None or not 0.0 < alpha < 1.0:
        raise InvalidAlpha(f"alpha must lie in (0, 1), got {alpha}")


class InterarrivalLaw:
    """Law of the gaps between consecutive points of a renewal trace.

    Attributes
    ----------
    kind : str from the enum LawKind
    rate : float
        exponential rate, per unit time
    alpha : float
        tail exponent of the heavy-tailed kinds, in (0, 1)
    xm : float
        Pareto scale, the support starts at xm
    logexp : float
        power of the logarithmic correction of the LogPareto tail
    scale : float
        multiplicative constant of the LogPareto tail

    Notes
    -----
    Survival functions:
     - exponential: exp(-rate t)
     - pareto: min(1, (xm / t)^alpha)
     - logpareto: min(1, ln(e + t)^logexp * t^-alpha * scale), with logexp <= alpha so
       that the tail is strictly decreasing
    """

    def __init__(self, kind, rate=None, alpha=None, xm=None, logexp=None, scale=None):
        self.kind = kind
        self.rate = rate
        self.alpha = alpha
        self.xm = xm
        self.logexp = logexp
        self.scale = scale
        self.check_valid_law()

    @classmethod
    def exponential(cls, rate):
        return cls(LawKind.EXPONENTIAL, rate=rate)

    @classmethod
    def pareto(cls, alpha, xm=1.0):
        return cls(LawKind.PARETO, alpha=alpha, xm=xm)

    @classmethod
    def log_pareto(cls, alpha, logexp, scale=1.0):
        return cls(LawKind.LOG_PARETO, alpha=alpha, logexp=logexp, scale=scale)

    def __repr__(self):
        params = ", ".join(f"{k}={v}" for k, v in self.to_dict().items() if k != "kind")
        return f"InterarrivalLaw({self.kind}: {params})"

    def __eq__(self, other):
        return isinstance(other, InterarrivalLaw) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(tuple(sorted(self.to_dict().items())))

    def check_valid_law(self):
        if not LawKind.is_valid(self.kind):
            raise InvalidLaw(f"Unknown law kind {self.kind}")
        if self.kind == LawKind.EXPONENTIAL:
            if self.rate is None or not 0.0 < self.rate < math.inf:
                raise InvalidLaw(f"Exponential law needs a positive rate, got {self.rate}")
        elif self.kind == LawKind.PARETO:
            check_alpha(self.alpha)
            if self.xm is None or not self.xm > 0.0:
                raise InvalidLaw(f"Pareto law needs a positive scale xm, got {self.xm}")
        elif self.kind == LawKind.LOG_PARETO:
            check_alpha(self.alpha)
            if self.scale is None or not self.scale > 0.0:
                raise InvalidLaw(f"LogPareto law needs a positive scale, got {self.scale}")
            if self.logexp is None or self.logexp > self.alpha:
                raise InvalidLaw(
                    f"LogPareto law needs logexp <= alpha for a monotone tail, got {self.logexp}"
                )

    @property
    def is_heavy_tailed(self):
        return self.kind in LawKind.HEAVY_TAILED

    def _log_tail(self, t):
        # log of the LogPareto tail before truncation at 1
        return (
            self.logexp * math.log(math.log(math.e + t))
            - self.alpha * math.log(t)
            + math.log(self.scale)
        )

    def survival(self, t):
        """P(T >= t)"""
        if t <= 0:
            return 1.0
        if self.kind == LawKind.EXPONENTIAL:
            return math.exp(-self.rate * t)
        if self.kind == LawKind.PARETO:
            return min(1.0, (self.xm / t) ** self.alpha)
        return min(1.0, math.exp(self._log_tail(t)))

    def inverse_survival(self, u):
        """The duration whose survival probability is u, for u in (0, 1]

        Feeding a uniform u gives an exact sample of the law.
        """
        if not 0.0 < u <= 1.0:
            raise ValueError(f"u must lie in (0, 1], got {u}")
        if self.kind == LawKind.EXPONENTIAL:
            return -math.log(u) / self.rate
        if self.kind == LawKind.PARETO:
            return self.xm * u ** (-1.0 / self.alpha)

        log_u = math.log(u)
        lo, hi = 1.0, 1.0
        while self._log_tail(lo) < log_u:
            lo /= 2.0
        while self._log_tail(hi) > log_u:
            hi *= 2.0
        if lo == hi:
            return lo
        return optimize.brentq(
            lambda t: self._log_tail(t) - log_u, lo, hi, xtol=1e-12, rtol=1e-12
        )

    def sample(self, rng, size=None):
        """Draw durations from the law.

        Parameters
        ----------
        rng : np.random.Generator
        size : int or None
            None for a single float

        Returns
        -------
        float or np.ndarray
        """
        if self.kind == LawKind.EXPONENTIAL:
            return rng.exponential(1.0 / self.rate, size)
        # 1 - U lies in (0, 1], keeping the inverse finite
        u = 1.0 - rng.random(size)
        if self.kind == LawKind.PARETO:
            return self.xm * u ** (-1.0 / self.alpha)
        if size is None:
            return self.inverse_survival(float(u))
        return np.array([self.inverse_survival(float(v)) for v in np.ravel(u)]).reshape(
            np.shape(u)
        )

    def to_dict(self):
        if self.kind == LawKind.EXPONENTIAL:
            return {"kind": self.kind, "rate": self.rate}
        if self.kind == LawKind.PARETO:
            return {"kind": self.kind, "alpha": self.alpha, "xm": self.xm}
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "logexp": self.logexp,
            "scale": self.scale,
        }

    @staticmethod
    def from_dict(record):
        """Parse a tagged record such as {"kind": "pareto", "alpha": 0.5, "xm": 1.0}"""
        kind = record.get("kind")
        if kind == LawKind.EXPONENTIAL:
            return InterarrivalLaw.exponential(record.get("rate"))
        if kind == LawKind.PARETO:
            return InterarrivalLaw.pareto(record.get("alpha"), record.get("xm", 1.0))
        if kind == LawKind.LOG_PARETO:
            return InterarrivalLaw.log_pareto(
                record.get("alpha"), record.get("logexp"), record.get("scale", 1.0)
            )
        raise InvalidLaw(f"Unknown law kind {kind}")


class PointTrace:
    """Points S_1 < S_2 < ... of a renewal process started at the anchor S_0 = 0.

    A trace either owns a law and a random stream, in which case it grows lazily
    and deterministically as later times are queried, or it is fixed: an explicit
    list of points, complete when its horizon is infinite.

    Attributes
    ----------
    law : InterarrivalLaw or None
    horizon : float
        every point up to the horizon is known
    """

    CHUNK = 32

    def __init__(self, law=None, rng=None, points=None, horizon=0.0):
        self.law = law
        self._rng = rng
        self._points = list(points) if points is not None else []
        self.horizon = horizon

    @classmethod
    def simulate(cls, law, horizon, rng):
        if horizon < 0:
            raise InvalidParams(f"horizon must be nonnegative, got {horizon}")
        trace = cls(law, rng)
        trace.extend(horizon)
        return trace

    @classmethod
    def from_times(cls, times, horizon=math.inf):
        points = [float(t) for t in times]
        if any(t < 0 for t in points):
            raise InvalidParams("trace points must be nonnegative")
        if any(b <= a for a, b in zip(points, points[1:])):
            raise InvalidParams("trace points must be strictly increasing")
        if points and points[-1] > horizon:
            raise InvalidParams(f"trace point {points[-1]} lies beyond horizon {horizon}")
        return cls(points=points, horizon=horizon)

    @classmethod
    def empty(cls):
        return cls(horizon=math.inf)

    def __repr__(self):
        return f"PointTrace(law={self.law}, horizon={self.horizon}, points={len(self.times)})"

    @property
    def is_extendable(self):
        return self.law is not None and self._rng is not None

    @property
    def times(self):
        return np.array(self._points[: bisect_right(self._points, self.horizon)])

    def _generate(self):
        start = self._points[-1] if self._points else 0.0
        gaps = np.asarray(self.law.sample(self._rng, size=self.CHUNK), dtype=float)
        self._points.extend((start + np.cumsum(gaps)).tolist())

    def _require(self, t):
        """Known points must cover [0, t] and, when extendable, one point beyond t"""
        if self.is_extendable:
            while not self._points or self._points[-1] <= t:
                self._generate()
            self.horizon = max(self.horizon, t)
        elif t > self.horizon:
            raise TraceTooShort(f"trace known up to {self.horizon}, needed {t}")

    def extend(self, horizon):
        """Reveal all points up to horizon; earlier points are never altered"""
        if horizon > self.horizon or self.is_extendable:
            self._require(horizon)
        return self

    def next_after(self, t):
        """First point strictly after t, None when a complete trace has no more points"""
        self._require(t)
        i = bisect_right(self._points, t)
        if i < len(self._points):
            return self._points[i]
        if self.horizon == math.inf:
            return None
        raise TraceTooShort(f"no point of the fixed trace known after {t}")

    def next_at_or_after(self, t):
        self._require(t)
        i = bisect_left(self._points, t)
        if i < len(self._points):
            return self._points[i]
        if self.horizon == math.inf:
            return None
        raise TraceTooShort(f"no point of the fixed trace known after {t}")

    def last_at_or_before(self, t):
        """Last point <= t, None if there is none (the anchor is not a point)"""
        self._require(t)
        i = bisect_right(self._points, t)
        return self._points[i - 1] if i else None

    def last_before(self, t):
        self._require(t)
        i = bisect_left(self._points, t)
        return self._points[i - 1] if i else None

    def count(self, t):
        """N(t), number of points in (0, t]"""
        self._require(t)
        return bisect_right(self._points, t)

    def excess(self, t):
        """E(t): time from t to the next point, inf for an exhausted complete trace"""
        nxt = self.next_after(t)
        return math.inf if nxt is None else nxt - t

    def current(self, t):
        """C(t): time since the last point <= t, measured from the anchor 0 if none"""
        last = self.last_at_or_before(t)
        return t - (last if last is not None else 0.0)

    def has_point_in(self, start, end, closed_right=True):
        self._require(end)
        p = self.next_at_or_after(start)
        if p is None:
            return False
        return p <= end if closed_right else p < end

    def current_excess(self, t):
        """(C(t), E(t)) read off the points known so far, without drawing new ones.

        t must lie within the revealed horizon. The point after t may be any point
        already generated, including one past the horizon in the last revealed gap.

        Raises
        ------
        NeedsExtension
            t lies beyond the horizon, or no known point lies beyond t; extend the
            trace first
        """
        if t < 0:
            raise InvalidParams(f"t must be nonnegative, got {t}")
        if t > self.horizon:
            raise NeedsExtension(f"t={t} lies beyond the horizon {self.horizon}")
        i = bisect_right(self._points, t)
        if i == len(self._points):
            raise NeedsExtension(f"no known point after t={t}")
        last = self._points[i - 1] if i else 0.0
        return t - last, self._points[i] - t


def sample_interarrival(law, rng):
    return float(law.sample(rng))


def simulate_trace(law, horizon, rng):
    return PointTrace.simulate(law, horizon, rng)


def current_excess(trace, t):
    return trace.current_excess(t)


def _alg_integral(power, upper):
    """Integral of y^power / (1 + y) over [0, upper], upper <= 1, power > -1"""
    if upper <= 0.0:
        return 0.0
    value, _ = integrate.quad(
        lambda y: 1.0 / (1.0 + y),
        0.0,
        upper,
        weight="alg",
        wvar=(power, 0.0),
        epsabs=1e-13,
        epsrel=1e-12,
    )
    return value


def dl_constant(alpha):
    return 1.0 / (special.gamma(alpha) * special.gamma(1.0 - alpha))


def dl_cdf(alpha, x):
    """Limit law of E(t)/t for a renewal trace with tail exponent alpha.

    The density C y^-alpha / (y + 1) is integrated by quadrature with an
    algebraic weight on [0, 1]; the part above 1 is mapped back onto (0, 1] by
    y -> 1/y, where it becomes z^(alpha - 1) / (z + 1).

    Parameters
    ----------
    alpha : float
        in (0, 1)
    x : float
        nonnegative, may be inf

    Returns
    -------
    float
    """
    check_alpha(alpha)
    if x < 0:
        raise InvalidParams(f"x must be nonnegative, got {x}")
    head = _alg_integral(-alpha, min(x, 1.0))
    if x > 1.0:
        head += _alg_integral(alpha - 1.0, 1.0) - _alg_integral(alpha - 1.0, 1.0 / x)
    return min(1.0, max(0.0, dl_constant(alpha) * head))


def dl_cdf_closed_form(alpha, x):
    """Same law through the regularized incomplete Beta function I_{x/(1+x)}(1-alpha, alpha)"""
    check_alpha(alpha)
    if x == math.inf:
        return 1.0
    return float(special.betainc(1.0 - alpha, alpha, x / (1.0 + x)))


def replica_trace(law, seed, replica):
    return PointTrace(law, substream(replica_seed(seed, replica)))


def dl_empirical(law, t, n, grid, seed=0):
    """Empirical CDF of E(t)/t over n replicas against the limit law.

    Parameters
    ----------
    law : InterarrivalLaw
        heavy-tailed
    t : float
    n : int
        number of replicas, each with its own stream
    grid : sequence of float
    seed : int

    Returns
    -------
    (np.ndarray, float)
        empirical CDF on the grid and its sup distance to dl_cdf on the grid
    """
    if n < 1:
        raise EmptyReplicas("dl_empirical needs at least one replica")
    if not law.is_heavy_tailed:
        raise InvalidLaw(f"{law} has no nondegenerate excess-time limit")
    if t <= 0:
        raise InvalidParams(f"t must be positive, got {t}")

    ratios = np.empty(n)
    for replica in range(n):
        ratios[replica] = replica_trace(law, seed, replica).excess(t) / t
    ratios.sort()

    grid = np.asarray(grid, dtype=float)
    empirical = np.searchsorted(ratios, grid, side="right") / n
    limit = np.array([dl_cdf(law.alpha, x) for x in grid])
    distance = float(np.max(np.abs(empirical - limit))) if len(grid) else 0.0
    logging.debug(f"DL check for {law} at t={t}: sup distance {distance:.5f}")
    return empirical, distance


def gap_probe(law, t, eps, n, seed=0):
    """Monte Carlo estimate of the gap condition P(S meets [t, t + t^eps]) <= t^-eps.

    Returns
    -------
    (float, float, bool)
        estimate, bound t^-eps, whether the estimate respects the bound
    """
    if n < 1:
        raise EmptyReplicas("gap_probe needs at least one replica")
    if t <= 0:
        raise InvalidParams(f"t must be positive, got {t}")
    if not 0.0 < eps < 1.0:
        raise InvalidParams(f"eps must lie in (0, 1), got {eps}")

    window_end = t + t ** eps
    hits = sum(
        replica_trace(law, seed, replica).has_point_in(t, window_end)
        for replica in range(n)
    )
    estimate = hits / n
    bound = t ** (-eps)
    return estimate, bound, estimate <= bound
