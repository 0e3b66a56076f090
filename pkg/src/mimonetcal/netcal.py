"""MGF-based delay bounds and delay-constrained throughput.

All quantities are in data blocks and time slots.  Service MGFs use the
negative-argument convention, ``E[exp(-theta * S(t))]``; arrival MGFs the
positive one.  Sums over long horizons are carried out in the log domain so
that ``theta * sigma`` in the hundreds does not overflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .markov import ServiceChain

log = logging.getLogger(__name__)

DEFAULT_TRUNC = 4000
TAIL_RATIO = 1e-3
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def default_theta_grid(lo: float = 1e-3, hi: float = 10.0, points: int = 60) -> np.ndarray:
    return np.logspace(math.log10(lo), math.log10(hi), points)


@dataclass(frozen=True)
class PeriodicSource:
    """``sigma`` blocks every ``tau`` slots with a uniformly random phase."""

    sigma: float
    tau: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.tau < 1:
            raise ValueError("tau must be >= 1")

    @classmethod
    def from_rate(cls, lam: float, tau: float) -> "PeriodicSource":
        return cls(sigma=lam * tau, tau=tau)

    @property
    def lam(self) -> float:
        return self.sigma / self.tau


@dataclass(frozen=True)
class DelayBoundResult:
    d: int | None  # None when no bound could be established
    theta_star: float
    tail_mass: float
    trunc: int

    @property
    def feasible(self) -> bool:
        return self.d is not None


@dataclass(frozen=True)
class SearchSettings:
    lambda_tol: float = 1e-3
    trunc: int = DEFAULT_TRUNC
    theta_grid: tuple = field(default_factory=lambda: tuple(default_theta_grid()))
    refine: bool = True
    integer_sigma: bool = False


# -- MGFs ------------------------------------------------------------------


def service_mgf(chain: ServiceChain, theta: float, t: int) -> float:
    """pi (R(-theta) Q)^(t-1) R(-theta) 1, evaluated left to right."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    if t < 1:
        raise ValueError("t must be >= 1")
    return math.exp(service_log_mgf_curve(chain, [theta], t)[0, t])


def service_log_mgf_curve(chain: ServiceChain, thetas, horizon: int) -> np.ndarray:
    """log M_S(theta, t) for t = 0..horizon, one row per theta.

    Column 0 is 0 (no service in zero time).  Steps are taken in blocks: with
    M = Q R(-theta) and the powers M^1..M^B precomputed, one block needs a
    single product for all B row sums plus one to advance the row vector,
    which is renormalized at every block boundary.
    """
    thetas = np.asarray(thetas, dtype=float)
    out = np.zeros((len(thetas), horizon + 1))
    if horizon == 0:
        return out
    max_rate = float(chain.rates.max()) if chain.k else 0.0
    for g, theta in enumerate(thetas):
        decay = np.exp(-theta * chain.rates)
        step = chain.q * decay[None, :]
        # keep one block's decay well inside double range
        block = int(np.clip(500.0 // max(theta * max_rate, 1e-300), 1, 64))
        powers = [np.eye(chain.k)]
        for _ in range(block):
            powers.append(powers[-1] @ step)
        row_sums = np.stack([p.sum(axis=1) for p in powers[:block]], axis=1)  # K x B
        advance = powers[block]
        w = chain.pi * decay  # row vector at t = 1
        scale = 0.0
        t = 1
        while t <= horizon:
            n = min(block, horizon - t + 1)
            sums = w @ row_sums[:, :n]
            out[g, t:t + n] = scale + np.log(sums)
            if t + n > horizon:
                break
            w = w @ advance
            norm = w.sum()
            w = w / norm
            scale += math.log(norm)
            t += n
    return out


def arrival_log_mgf(src: PeriodicSource, theta, t) -> np.ndarray:
    """log M_A(theta, t) for the periodic source, broadcasting over theta and t."""
    theta = np.asarray(theta, dtype=float)
    t = np.asarray(t, dtype=float)
    x = theta * src.sigma
    periods = np.floor(t / src.tau)
    frac = t / src.tau - periods
    # log(1 + f (e^x - 1)); the second form avoids overflow for large x
    with np.errstate(over="ignore"):
        small = np.log1p(frac * np.expm1(np.minimum(x, 30.0)))
    large = x + np.log(frac + (1.0 - frac) * np.exp(-x))
    partial = np.where(x <= 30.0, small, large)
    return x * periods + partial


def arrival_mgf(src: PeriodicSource, theta: float, t: float) -> float:
    if theta <= 0:
        raise ValueError("theta must be positive")
    if t < 0:
        raise ValueError("t must be >= 0")
    return float(np.exp(arrival_log_mgf(src, theta, t)))


# -- delay bound -----------------------------------------------------------


def _log_violation(log_arrival: np.ndarray, log_service: np.ndarray, d: int) -> float:
    """log sum_{s=d}^{T} M_A(s-d) M_S(s) for one theta."""
    horizon = len(log_service) - 1
    return float(logsumexp(log_arrival[: horizon - d + 1] + log_service[d:]))


def _bound_from_curves(log_arrival, log_service, log_eps, window=1):
    """Smallest d with violation <= eps, plus the tail term at d.

    The truncated sum is non-increasing in d (fewer terms, each smaller), so
    bisection finds the same d as a linear scan from 0.
    """
    horizon = len(log_service) - 1
    if _unstable(log_arrival, log_service, window):
        return None, math.inf
    if _log_violation(log_arrival, log_service, 0) <= log_eps:
        d = 0
    elif _log_violation(log_arrival, log_service, horizon) > log_eps:
        return None, math.inf
    else:
        lo, hi = 0, horizon  # invariant: fails at lo, holds at hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _log_violation(log_arrival, log_service, mid) <= log_eps:
                hi = mid
            else:
                lo = mid
        d = hi
    return d, math.exp(log_arrival[horizon - d] + log_service[horizon])


class BoundEvaluator:
    """Delay bounds for one chain across many sources.

    Service curves over the theta grid are computed once and reused.
    """

    def __init__(self, chain: ServiceChain, theta_grid=None, trunc: int = DEFAULT_TRUNC, refine: bool = True):
        if trunc < 1:
            raise ValueError("trunc must be >= 1")
        self.chain = chain
        self.thetas = np.sort(np.asarray(default_theta_grid() if theta_grid is None else theta_grid, dtype=float))
        if len(self.thetas) == 0 or (self.thetas <= 0).any():
            raise ValueError("theta grid must be non-empty and positive")
        self.trunc = trunc
        self.refine = refine
        self.log_service = service_log_mgf_curve(chain, self.thetas, trunc)
        self._steps = np.arange(trunc + 1)

    def _curves(self, src, theta):
        log_service = service_log_mgf_curve(self.chain, [theta], self.trunc)[0]
        return arrival_log_mgf(src, theta, self._steps), log_service

    def at_theta(self, src: PeriodicSource, eps: float, theta: float):
        log_arrival, log_service = self._curves(src, theta)
        return _bound_from_curves(log_arrival, log_service, math.log(eps), _window(src))

    def _grid(self, src, eps):
        log_eps = math.log(eps)
        log_arrival = arrival_log_mgf(src, self.thetas[:, None], self._steps[None, :])
        w = _window(src)
        return [_bound_from_curves(log_arrival[i], self.log_service[i], log_eps, w) for i in range(len(self.thetas))]

    def _objective(self, src, d):
        """Violation log-sum at delay d as a function of log theta (convex in theta)."""
        def f(log_theta):
            log_arrival, log_service = self._curves(src, math.exp(log_theta))
            if _unstable(log_arrival, log_service, _window(src)):
                return math.inf
            return _log_violation(log_arrival, log_service, d)
        return f

    def _grid_values(self, src, d):
        """Violation log-sums at delay d over the grid; inf where the tail is unstable."""
        la = arrival_log_mgf(src, self.thetas[:, None], self._steps[None, :])
        ls = self.log_service
        v = logsumexp(la[:, : self.trunc - d + 1] + ls[:, d:], axis=1)
        v[_unstable_rows(la, ls, _window(src))] = math.inf
        return v

    def _refine(self, src, eps, d_target, values):
        """Look between grid points for a theta meeting delay d_target.

        ``values`` are the grid objective values at d_target.  The objective
        is convex in theta, so secants through the best grid point and its
        neighbours give a lower bound; refinement is skipped when even that
        bound misses eps.  Otherwise golden-section search, stopping early
        once a feasible theta turns up.
        """
        log_eps = math.log(eps)
        i = int(np.argmin(values))
        if not np.isfinite(values[i]):
            return None
        if not _may_reach(self.thetas, values, i, log_eps):
            return None
        f = self._objective(src, d_target)
        a, b = self._bracket(i)
        theta = _golden_min(f, a, b, stop_below=log_eps)
        if f(theta) <= log_eps:
            return math.exp(theta)
        return None

    def _bracket(self, i):
        lo = self.thetas[max(i - 1, 0)]
        hi = self.thetas[min(i + 1, len(self.thetas) - 1)]
        return math.log(lo), math.log(hi)

    def delay_bound(self, src: PeriodicSource, eps: float) -> DelayBoundResult:
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        results = self._grid(src, eps)
        finite = [(d, i) for i, (d, _) in enumerate(results) if d is not None]
        if not finite:
            return DelayBoundResult(None, math.nan, math.inf, self.trunc)
        d_best, i_best = min(finite)  # ties go to the smaller theta
        theta_best, tail = self.thetas[i_best], results[i_best][1]
        if self.refine:
            for _ in range(8):
                if d_best == 0:
                    break
                theta = self._refine(src, eps, d_best - 1, self._grid_values(src, d_best - 1))
                if theta is None:
                    break
                d, tail_new = self.at_theta(src, eps, theta)
                if d is None or d >= d_best:
                    break
                d_best, theta_best, tail = d, theta, tail_new
        return DelayBoundResult(int(d_best), float(theta_best), float(tail), self.trunc)

    def meets(self, src: PeriodicSource, eps: float, d_guarantee: int) -> bool:
        """True iff delay_bound(src, eps).d <= d_guarantee."""
        if not 0 < eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        d = min(int(d_guarantee), self.trunc)
        values = self._grid_values(src, d)
        if (values <= math.log(eps)).any():
            return True
        if not self.refine:
            return False
        return self._refine(src, eps, d, values) is not None


def _window(src) -> int:
    """Tail window: one source period, since the summands are a sawtooth in s."""
    return int(math.ceil(src.tau)) + 1


def _unstable(log_arrival, log_service, window=1) -> bool:
    return bool(_unstable_rows(np.atleast_2d(log_arrival), np.atleast_2d(log_service), window)[0])


def _unstable_rows(la, ls, window):
    """Tail check per theta row: the summand must be decaying at the horizon.

    Two tests: the largest term in the final source period is small next to
    the whole sum, and the summand's log-slope over the last quarter of the
    horizon is negative.  The second catches slow growth (arrivals just above
    the service rate at small theta) that the ratio alone would miss.
    """
    terms = la + ls
    horizon = terms.shape[1] - 1
    ratio = terms[:, -window:].max(axis=1) - logsumexp(terms, axis=1) > math.log(TAIL_RATIO)
    if horizon < 1:
        return ratio
    w = max(horizon // 4, 1)
    return ratio | (terms[:, -1] - terms[:, -1 - w] >= 0.0)


def _may_reach(thetas, values, i, target):
    """Convex lower bound on the objective between grid neighbours of i."""
    fb, b = values[i], thetas[i]
    bounds = []
    if i > 0:
        a = thetas[i - 1]
        if i + 1 < len(thetas) and np.isfinite(values[i + 1]):
            c, fc = thetas[i + 1], values[i + 1]
            bounds.append(fb - (fc - fb) / (c - b) * (b - a))
        else:
            bounds.append(-math.inf)
    if i + 1 < len(thetas):
        c = thetas[i + 1]
        if i > 0 and np.isfinite(values[i - 1]):
            a, fa = thetas[i - 1], values[i - 1]
            bounds.append(fb - (fa - fb) / (b - a) * (c - b))
        else:
            bounds.append(-math.inf)
    return bool(bounds) and min(bounds) <= target


def _golden_min(f, a, b, tol=1e-4, max_iter=60, stop_below=-math.inf):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol or min(fc, fd) <= stop_below:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def delay_bound_at_theta(chain, src, eps, theta, trunc=DEFAULT_TRUNC):
    """Delay bound (slots) at a fixed theta, or None if infeasible/unstable."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if theta <= 0:
        raise ValueError("theta must be positive")
    ev = BoundEvaluator(chain, [theta], trunc, refine=False)
    return ev._grid(src, eps)[0][0]


def delay_bound(chain, src, eps, theta_grid=None, trunc=DEFAULT_TRUNC, refine=True) -> DelayBoundResult:
    return BoundEvaluator(chain, theta_grid, trunc, refine).delay_bound(src, eps)


# -- throughput ------------------------------------------------------------


def throughput(chain, d_guarantee: int, eps: float, tau: float = 10, search: SearchSettings | None = None,
               evaluator: BoundEvaluator | None = None) -> float:
    """Largest arrival rate (blocks/slot) whose delay bound meets d_guarantee."""
    if d_guarantee < 0:
        raise ValueError("d_guarantee must be >= 0")
    search = search or SearchSettings()
    ev = evaluator or BoundEvaluator(chain, search.theta_grid, search.trunc, search.refine)

    def ok(lam):
        return ev.meets(PeriodicSource.from_rate(lam, tau), eps, d_guarantee)

    if not ok(0.0):
        log.warning("delay guarantee %s unreachable even without traffic", d_guarantee)
        return 0.0
    # the untruncated sum diverges for every theta once lambda reaches the mean rate
    hi = float(chain.pi @ chain.rates)
    if search.integer_sigma:
        lo_s, hi_s = 0, int(math.floor(hi * tau))
        if ok(hi_s / tau):
            return hi_s / tau
        while hi_s - lo_s > 1:
            mid = (lo_s + hi_s) // 2
            if ok(mid / tau):
                lo_s = mid
            else:
                hi_s = mid
        return lo_s / tau
    if ok(hi):
        return hi
    lo = 0.0
    while hi - lo > search.lambda_tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
