"""Root-search primitives and zero-rate Black-Scholes helpers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import BracketNotFound, MaxIterExceeded, NoSignChange, OutOfBand

ABS_TOL = 1e-12
REL_TOL = 1e-12
MAX_ITER = 200
MAX_DOUBLINGS = 200


@dataclass(frozen=True)
class MonotoneRootProblem:
    """Root of a strictly monotone scalar function on ``(lo, hi)``.

    ``hi`` may be ``math.inf``; the bracket is then closed by geometric
    expansion from ``lo + seed``.
    """

    evaluator: Callable[[float], float]
    lo: float
    hi: float
    increasing: bool = True
    abs_tol: float = ABS_TOL
    rel_tol: float = REL_TOL
    max_iter: int = MAX_ITER
    seed: float = 1.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty bracket ({self.lo}, {self.hi})")
        if self.abs_tol <= 0 or self.rel_tol < 0 or self.max_iter < 1:
            raise ValueError("invalid tolerances")


def _safe_eval(f, t):
    try:
        v = f(t)
    except OverflowError:
        return math.inf
    if math.isnan(v):
        raise NoSignChange(f"evaluator returned NaN at {t!r}")
    return v


def expand_bracket(evaluator, seed=1.0, increasing=True):
    """Find ``(lo, hi)`` in ``(0, inf)`` with a strict sign change.

    Starting at ``seed`` the search doubles (or halves) until the sign flips.
    """
    if not seed > 0:
        raise ValueError("seed must be positive")
    sgn = 1.0 if increasing else -1.0
    t = seed
    g = sgn * _safe_eval(evaluator, t)
    if g == 0.0:
        return 0.5 * t, 2.0 * t
    step = 0.5 if g > 0 else 2.0
    for _ in range(MAX_DOUBLINGS):
        t_next = t * step
        g_next = sgn * _safe_eval(evaluator, t_next)
        if g_next == 0.0:
            return 0.5 * t_next, 2.0 * t_next
        if (g_next > 0) != (g > 0):
            return (t_next, t) if step < 1 else (t, t_next)
        t, g = t_next, g_next
    raise BracketNotFound(f"no sign change after {MAX_DOUBLINGS} steps from seed {seed}")


def bisect(problem: MonotoneRootProblem) -> float:
    """Bisection on a monotone function.

    Keeps the invariant ``g(lo) <= 0 <= g(hi)`` where ``g`` is the evaluator
    oriented to be increasing, so a root sitting exactly on ``lo`` is allowed
    (the crossing search in the interpolation starts from such a point).
    """
    f = problem.evaluator
    sgn = 1.0 if problem.increasing else -1.0
    lo, hi = problem.lo, problem.hi
    if math.isinf(hi):
        a, b = expand_bracket(lambda t: f(lo + t), problem.seed, problem.increasing)
        lo, hi = lo + a, lo + b
    g_lo = sgn * _safe_eval(f, lo)
    g_hi = sgn * _safe_eval(f, hi)
    if g_lo > 0 or g_hi < 0 or (g_lo == 0 and g_hi == 0):
        raise NoSignChange(f"no sign change on [{lo!r}, {hi!r}]: {g_lo!r}, {g_hi!r}")
    if g_hi == 0:
        return hi
    for _ in range(problem.max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= problem.abs_tol + problem.rel_tol * abs(mid) or mid in (lo, hi):
            return mid
        g_mid = sgn * _safe_eval(f, mid)
        if g_mid == 0.0:
            return mid
        if g_mid < 0:
            lo = mid
        else:
            hi = mid
    raise MaxIterExceeded(f"bisection did not converge in {problem.max_iter} iterations")


def solve_increasing(f, lo, hi=math.inf, seed=1.0, **tol):
    return bisect(MonotoneRootProblem(f, lo, hi, True, seed=seed, **tol))


def solve_decreasing(f, lo, hi=math.inf, seed=1.0, **tol):
    return bisect(MonotoneRootProblem(f, lo, hi, False, seed=seed, **tol))


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def black_scholes_call(spot: float, strike: float, tau: float, sigma: float) -> float:
    """Zero-rate Black-Scholes call price."""
    if tau <= 0 or sigma <= 0:
        return max(spot - strike, 0.0)
    sd = sigma * math.sqrt(tau)
    d1 = (math.log(spot / strike) + 0.5 * sd * sd) / sd
    return spot * norm_cdf(d1) - strike * norm_cdf(d1 - sd)


def implied_vol(price: float, strike: float, spot: float, tau: float) -> float:
    """Annualized zero-rate Black-Scholes volatility reproducing ``price``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    intrinsic = max(spot - strike, 0.0)
    if not intrinsic < price < spot:
        raise OutOfBand(f"price {price} outside ({intrinsic}, {spot}) for strike {strike}")
    return solve_increasing(lambda s: black_scholes_call(spot, strike, tau, s) - price, 0.0)
