import logging
import math
from decimal import ROUND_CEILING, Decimal, localcontext

import numpy as np
import pandas as pd
from scipy import optimize

from cprd.core.clocks import ClockKind
from cprd.core.errors import EmptyReplicas, InvalidEpsilon, InvalidParams, InvalidRates
from cprd.core.renewal import PointTrace, check_alpha
from cprd.core.utils import replica_seed, substream

MAX_SUBINTERVALS = 10 ** 6


class SizeClass:
    SURVIVES = "survives"
    DIES = "dies"
    UNDETERMINED = "undetermined"


def thresholds(alpha):
    """Cardinality bounds: survival for |V| above the first, extinction below the second"""
    check_alpha(alpha)
    survive_above = 1.0 / (1.0 - alpha)
    die_below = 2.0 + (2.0 * alpha - 1.0) / ((1.0 - alpha) * (2.0 - alpha))
    return survive_above, die_below


def classify_size(alpha, v_size):
    survive_above, die_below = thresholds(alpha)
    if v_size > survive_above:
        return SizeClass.SURVIVES
    if v_size < die_below:
        return SizeClass.DIES
    return SizeClass.UNDETERMINED


def min_gamma(l, lam, sigma):
    """gamma must exceed max(1, 2l/lambda, 2/sigma)"""
    if not lam > 0 or not sigma > 0:
        raise InvalidRates(f"needs lambda > 0 and sigma > 0, got {lam}, {sigma}")
    return max(1.0, 2.0 * l / lam, 2.0 / sigma)


def check_gamma(gamma, l, lam, sigma):
    bound = min_gamma(l, lam, sigma)
    if not gamma > bound:
        raise InvalidParams(f"gamma={gamma} must exceed {bound} for l={l}, lambda={lam}, sigma={sigma}")


def b_n(gamma, n):
    return gamma * math.log(n)


def c_n(b, v_size, alpha, eps):
    return b ** (1.0 + v_size * (alpha + eps))


def _log_n(n):
    # math.log accepts arbitrarily large ints
    return math.log(n)


def _first_index(gamma, eps, alpha, v_size):
    """Least n beyond which b_n c_n <= n^eps / 2 holds for good.

    With L = ln n and k = 2 + |V|(alpha + eps) the condition reads
    f(L) = k ln(gamma L) - eps L + ln 2 <= 0. f is concave with its peak at
    L = k / eps, so past its largest root it stays negative.
    """
    k = 2.0 + v_size * (alpha + eps)

    def f(L):
        return k * math.log(gamma * L) - eps * L + math.log(2.0)

    peak = k / eps
    if f(peak) <= 0:
        return 2
    hi = 2.0 * peak
    while f(hi) > 0:
        hi *= 2.0
    root = optimize.brentq(f, peak, hi, xtol=1e-12)
    if root < 700:
        n0 = max(2, math.ceil(math.exp(root)))
    else:
        with localcontext() as ctx:
            ctx.prec = int(root / 2.3) + 30
            n0 = int(Decimal(root).exp().to_integral_value(rounding=ROUND_CEILING))
    # rounding at the root only matters while consecutive n still move L
    while root < 30 and f(_log_n(n0)) > 0:
        n0 += 1
    return n0


class IntervalScheme:
    """Polynomially growing times t_n with overlap windows [t_n, t_n + c_n b_n].

    Attributes
    ----------
    gamma, eps, alpha : float
    v_size : int
    t_hat_1 : float
    n0 : int
        first index of the scheme; may be astronomically large
    table : list of dict
        rows (n, b_n, c_n, t_n, step, step_ok, t_exceeds_n) for n0..n_max
    """

    def __init__(self, gamma, eps, alpha, v_size, t_hat_1, n_max=None):
        check_alpha(alpha)
        if not eps > 0:
            raise InvalidEpsilon(f"eps must be positive, got {eps}")
        self.beta = v_size * (1.0 - alpha - 3.0 * eps)
        if not self.beta > 1:
            raise InvalidEpsilon(f"beta = |V|(1 - alpha - 3 eps) = {self.beta} must exceed 1")
        if not t_hat_1 > 0:
            raise InvalidParams(f"t_hat_1 must be positive, got {t_hat_1}")
        if not gamma > 0:
            raise InvalidParams(f"gamma must be positive, got {gamma}")
        self.gamma = gamma
        self.eps = eps
        self.alpha = alpha
        self.v_size = v_size
        self.t_hat_1 = t_hat_1
        self.n0 = _first_index(gamma, eps, alpha, v_size)
        self.n_max = self.n0 + 99 if n_max is None else n_max
        self._t = [t_hat_1 + self.step(self.n0)]
        self.table = self._tabulate()
        if not self.table:
            logging.warning(f"Interval scheme table is empty: n_max={self.n_max} < n0={self.n0}")

    def __repr__(self):
        return f"IntervalScheme(gamma={self.gamma}, eps={self.eps}, alpha={self.alpha}, |V|={self.v_size}, n0={self.n0})"

    def b(self, n):
        return b_n(self.gamma, n)

    def c(self, n):
        return c_n(self.b(n), self.v_size, self.alpha, self.eps)

    def power(self, n):
        """n^eps"""
        return math.exp(self.eps * _log_n(n))

    def step(self, n):
        return self.power(n) - self.c(n) * self.b(n)

    def t(self, n):
        if n < self.n0:
            raise InvalidParams(f"t_n is defined for n >= n0={self.n0}, got {n}")
        offset = n - self.n0
        if offset > MAX_SUBINTERVALS:
            raise InvalidParams(f"n - n0 = {offset} is too far to tabulate")
        while len(self._t) <= offset:
            self._t.append(self._t[-1] + self.step(self.n0 + len(self._t)))
        return self._t[offset]

    def _tabulate(self):
        rows = []
        n = self.n0
        while n <= self.n_max:
            b = self.b(n)
            increment = self.step(n)
            rows.append(
                {
                    "n": n,
                    "b_n": b,
                    "c_n": self.c(n),
                    "t_n": self.t(n),
                    "step": increment,
                    "step_ok": self.power(n) / 2.0 <= increment <= self.power(n),
                    "t_exceeds_n": self.t(n) > n,
                }
            )
            n += 1
        return rows

    def to_frame(self):
        return pd.DataFrame(self.table, columns=["n", "b_n", "c_n", "t_n", "step", "step_ok", "t_exceeds_n"])


def interval_scheme(gamma, eps, alpha, v_size, t_hat_1, n_max=None):
    return IntervalScheme(gamma, eps, alpha, v_size, t_hat_1, n_max)


def _subintervals(c):
    count = math.ceil(c)
    if count > MAX_SUBINTERVALS:
        raise InvalidParams(f"{count} sub-intervals is too many to check")
    return range(count)


def event_a(wake_traces, t, window):
    """Some site sees no wake point in (t, t + window]"""
    return any(trace.excess(t) > window for trace in wake_traces)


def event_b(wake_traces, t, b, c):
    """Some sub-interval [t + jb, t + (j+1)b], j in [0, c), is free of wake points at every site"""
    return any(
        all(trace.excess(t + j * b) > b for trace in wake_traces) for j in _subintervals(c)
    )


def traversal_time(path_traces, t):
    """Y_l: time from t until infection symbols have fired along the whole path in order"""
    y = 0.0
    for trace in path_traces:
        y += trace.excess(t + y)
    return y


def event_c(path_traces, t, b, c):
    """In the second half of every sub-interval the path is traversed within b/2"""
    return all(
        traversal_time(path_traces, t + (2 * j + 1) / 2.0 * b) <= b / 2.0
        for j in _subintervals(c)
    )


def event_d(sleep_traces, t, b, c):
    """In the first half of every sub-interval every site sees a sleep point within b/2"""
    return all(
        max(trace.excess(t + j * b) for trace in sleep_traces) <= b / 2.0
        for j in _subintervals(c)
    )


class EventIndicators:
    def __init__(self, a, b, c, d):
        self.a = a
        self.b = b
        self.c = c
        self.d = d

    def __repr__(self):
        return f"EventIndicators(A={self.a}, B={self.b}, C={self.c}, D={self.d})"

    @property
    def all(self):
        return self.a and self.b and self.c and self.d

    def to_dict(self):
        return {"A": self.a, "B": self.b, "C": self.c, "D": self.d}


def detect_events(construction, scheme, g, n):
    """Evaluate A_n, B_n, C_n and D_n on the symbols of a finite-graph run.

    Infection along the spanning path g uses the dormant-dormant symbols of its
    edges; each excess of the traversal is taken at the absolute time t + Y.
    """
    vertices = construction.topology.vertices
    wake = [construction.trace(ClockKind.WAKE, v) for v in vertices]
    sleep = [construction.trace(ClockKind.SLEEP, v) for v in vertices]
    path = [construction.trace(ClockKind.INF_DD, e) for e in g.edge_indices(construction.topology)]
    t, b, c = scheme.t(n), scheme.b(n), scheme.c(n)
    return EventIndicators(
        event_a(wake, t, scheme.power(n + 1)),
        event_b(wake, t, b, c),
        event_c(path, t, b, c),
        event_d(sleep, t, b, c),
    )


def sleep_event_probability(sigma, b, v_size):
    """P(every site sees a sleep point within b/2)"""
    return (1.0 - math.exp(-sigma * b / 2.0)) ** v_size


def log_prob_all_sleep_events(scheme, sigma, m, n_stop):
    """log P(D_n for all n in [m, n_stop]); the sub-interval halves are disjoint"""
    total = 0.0
    for n in range(m, n_stop + 1):
        b = scheme.b(n)
        total += math.ceil(scheme.c(n)) * scheme.v_size * math.log1p(-math.exp(-sigma * b / 2.0))
    return total


def no_recovery_probability(delta, scheme, m):
    """P(the first site sees no recovery symbol before t_m + c_m b_m)"""
    return math.exp(-delta * (scheme.t(m) + scheme.b(m) * scheme.c(m)))


def gw_offspring_prob(lam, sigma, delta):
    """Probability that both edge infections fire before the site recovers or falls asleep"""
    if not lam > 0 or sigma < 0 or delta < 0:
        raise InvalidRates(f"needs lambda > 0 and sigma, delta >= 0, got {lam}, {sigma}, {delta}")
    s = sigma + delta
    return 2.0 * lam / (2.0 * lam + s) * lam / (lam + s)


def gw_critical_lambda(sigma, delta):
    """lambda above which the offspring probability exceeds 1/2, root of 2l^2 - 3sl - s^2"""
    s = sigma + delta
    if not s > 0:
        raise InvalidRates("sigma + delta must be positive")
    return s * (3.0 + math.sqrt(17.0)) / 4.0


def gw_offspring_estimate(lam, sigma, delta, replicas, rng):
    """Race of two Exp(lambda) infections against one Exp(sigma + delta) exit.

    Returns
    -------
    (float, float)
        estimate and its binomial standard error
    """
    gw_offspring_prob(lam, sigma, delta)
    if replicas < 1:
        raise EmptyReplicas("gw_offspring_estimate needs at least one replica")
    infections = rng.exponential(1.0 / lam, size=(replicas, 2))
    s = sigma + delta
    exits = rng.exponential(1.0 / s, size=replicas) if s > 0 else np.full(replicas, np.inf)
    estimate = float(np.mean(infections.max(axis=1) < exits))
    return estimate, math.sqrt(estimate * (1.0 - estimate) / replicas)


def simulate_gw_generations(p, generations, rng, z0=1, cap=10 ** 7):
    """Binary Galton-Watson process, each individual has 2 children with probability p.

    Stops early at extinction or once the population exceeds cap.
    """
    sizes = [z0]
    z = z0
    for _ in range(generations):
        if z == 0 or z > cap:
            break
        z = 2 * int(rng.binomial(z, p))
        sizes.append(z)
    return sizes


class RecursionStep:
    def __init__(self, n, s, x, argmax, x_by_site, w_by_site):
        self.n = n
        self.S = s
        self.X = x
        self.argmax = argmax
        self.X_by_site = x_by_site
        self.W_by_site = w_by_site

    def __repr__(self):
        return f"RecursionStep(n={self.n}, S={self.S}, X={self.X}, x={self.argmax})"

    def to_dict(self):
        return {"n": self.n, "S_n": self.S, "X_n": self.X, "x_n": self.argmax}


class ExtinctionRecursionState:
    def __init__(self, t_hat, steps):
        self.t_hat = t_hat
        self.steps = steps

    def __len__(self):
        return len(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    @property
    def min_x(self):
        return min(step.X for step in self.steps)

    def to_frame(self):
        return pd.DataFrame([step.to_dict() for step in self.steps], columns=["n", "S_n", "X_n", "x_n"])


def extinction_recursion(wake_traces, t_hat, v0, n_max):
    """Interval lengths X_n between wake-up rounds that reach every site.

    Parameters
    ----------
    wake_traces : list of PointTrace
        one per vertex
    t_hat : float
    v0 : int
        initially infected vertex
    n_max : int

    Returns
    -------
    ExtinctionRecursionState
    """
    if not t_hat > 0:
        raise InvalidParams(f"t_hat must be positive, got {t_hat}")
    v_size = len(wake_traces)
    if not 0 <= v0 < v_size:
        raise InvalidParams(f"v0={v0} is not a vertex")

    x_by_site = np.zeros(v_size)
    x_by_site[v0] = wake_traces[v0].excess(0.0)
    steps = []
    s = 0.0
    for n in range(1, n_max + 1):
        if n > 1:
            prev = steps[-1]
            nxt = np.empty(v_size)
            for x in range(v_size):
                if x == prev.argmax:
                    nxt[x] = 0.0
                elif prev.W_by_site[x] >= t_hat:
                    nxt[x] = wake_traces[x].excess(s)
                else:
                    nxt[x] = wake_traces[x].excess(s + t_hat) + t_hat
            x_by_site = nxt
        argmax = int(np.argmax(x_by_site))
        x_n = float(x_by_site[argmax])
        s += x_n
        steps.append(RecursionStep(n, s, x_n, argmax, x_by_site.copy(), x_n - x_by_site))
    return ExtinctionRecursionState(t_hat, steps)


def recursion_replica(law, v_size, t_hat, n_steps, seed, replica):
    """Extinction recursion from vertex 0 on fresh wake traces of one replica"""
    rs = replica_seed(seed, replica)
    traces = [
        PointTrace(law, substream(rs, ClockKind.CODES[ClockKind.WAKE], x)) for x in range(v_size)
    ]
    return extinction_recursion(traces, t_hat, 0, n_steps)


def recursion_statistics(law, v_size, t_hat, n_steps, replicas, seed=0, threshold=100.0):
    """Replicated extinction recursion with fresh wake traces per replica.

    Returns
    -------
    (pd.DataFrame, float)
        per-replica rows (replica, min_X, S_final) and the fraction with min_X < threshold
    """
    if replicas < 1:
        raise EmptyReplicas("recursion_statistics needs at least one replica")
    rows = []
    for r in range(replicas):
        state = recursion_replica(law, v_size, t_hat, n_steps, seed, r)
        rows.append({"replica": r, "min_X": state.min_x, "S_final": state.steps[-1].S})
    frame = pd.DataFrame(rows, columns=["replica", "min_X", "S_final"])
    return frame, float(np.mean(frame["min_X"].values < threshold))


def bad_interval_prob_bound(lam, delta, sigma, m, v_size):
    """Lower bound p_m on the chance that an interval of length below m kills the infection"""
    if min(lam, delta, sigma, m) < 0:
        raise InvalidRates("rates and m must be nonnegative")
    if not delta + sigma > 0:
        raise InvalidRates("delta + sigma must be positive")
    return (
        math.exp(-lam * m * v_size)
        * (1.0 - math.exp(-(delta + sigma))) ** v_size
        * delta
        / (delta + sigma)
    )
