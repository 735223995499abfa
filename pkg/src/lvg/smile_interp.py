"""Exact cross-strike interpolation of call prices by piecewise-constant LVG slices.

Each maturity is interpolated by a time-value curve that solves
``sigma(K)**2 V'' = z**2 V`` with a common ``z``.  The curve is grown from
``L`` towards the spot one strike interval at a time (and from ``U`` by
reflection), inserting at most three knots per interval so that every market
time value is hit exactly, the slope at each strike stays controlled, and the
curve stays strictly above the previous maturity's time value.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, DataError, MatchFailure, MonotonicityFailure
from .market_data import AdmissiblePrices, check_strict_admissibility
from .numerics import solve_decreasing, solve_increasing
from .piecewise_exp import LVGSlice, grow_values

log = logging.getLogger(__name__)

MATCH_TOL = 1e-9
GRID_POINTS = 1000


@dataclass(frozen=True)
class Deltas:
    d1: float = 0.5
    d2: float = 0.5
    d3: float = 0.5
    d4: float = 0.5

    def __post_init__(self):
        for name in ("d1", "d2", "d3", "d4"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


class PrevCurve:
    """Previous-maturity time value, zero outside its bounds, optionally reflected."""

    def __init__(self, slc: LVGSlice | None, L=0.0, U=0.0, reflect=False):
        self.slc = slc
        self.L, self.U = L, U
        self.reflect = reflect

    def _map(self, K):
        return self.L + self.U - K if self.reflect else K

    def __call__(self, K):
        if self.slc is None:
            return 0.0
        k = self._map(K)
        if k <= self.slc.L or k >= self.slc.U:
            return 0.0
        return self.slc.time_value(k)

    def right_deriv(self, K):
        """Right derivative of the (possibly reflected) curve at ``K``."""
        if self.slc is None:
            return 0.0
        k = self._map(K)
        s = self.slc
        if not self.reflect:
            if k < s.L or k >= s.U:
                return 0.0
            return s.time_value_deriv(k)
        # reflected: right derivative = -(left derivative of the original at k)
        if k <= s.L or k > s.U:
            return 0.0
        if k == s.U:
            return -_left_deriv_at_U(s)
        return -s.time_value_deriv(k)

    def reflected(self, L, U):
        return PrevCurve(self.slc, L, U, reflect=not self.reflect)


def _left_deriv_at_U(s: LVGSlice):
    seg = len(s.sigma) - 1
    v, dv = s.right.eval(s.U, seg, s.lam_log[1])
    return float(dv)


# -- elementary pieces of one strike step ------------------------------------


def insert_spot_strike(K, C, x, prev: PrevCurve, delta1):
    """Add the spot as a strike if needed.

    ``K, C`` are augmented strikes and call prices (endpoints included).
    Returns ``(K, C, inserted)``.  The price at the spot blends the chord of the
    neighbouring prices with a lower bound; when the plain lower bound
    ``max(V_prev(x), C(K_{j+1}))`` would break strict convexity with the
    neighbours, the supporting lines of the neighbouring chords are included in
    the lower bound.
    """
    K = np.asarray(K, dtype=float)
    C = np.asarray(C, dtype=float)
    if np.any(K == x):
        return K, C, False
    j = int(np.searchsorted(K, x)) - 1
    kl, kr = K[j], K[j + 1]
    chord = C[j] * (kr - x) / (kr - kl) + C[j + 1] * (x - kl) / (kr - kl)
    lower = max(prev(x), C[j + 1])
    value = delta1 * chord + (1 - delta1) * lower
    K2 = np.insert(K, j + 1, x)
    C2 = np.insert(C, j + 1, value)
    if not _locally_convex(K2, C2, j + 1):
        supports = [lower]
        if j >= 1:
            s = (C[j] - C[j - 1]) / (K[j] - K[j - 1])
            supports.append(C[j] + s * (x - K[j]))
        if j + 2 < len(K):
            s = (C[j + 2] - C[j + 1]) / (K[j + 2] - K[j + 1])
            supports.append(C[j + 1] + s * (x - K[j + 1]))
        value = delta1 * chord + (1 - delta1) * max(supports)
        C2[j + 1] = value
        log.debug("spot price at %g raised to %g to keep strict convexity", x, value)
    return K2, C2, True


def _locally_convex(K, C, j):
    for m in range(max(1, j - 1), min(len(K) - 1, j + 2)):
        wl = (K[m + 1] - K[m]) / (K[m + 1] - K[m - 1])
        if not C[m] < wl * C[m - 1] + (1 - wl) * C[m + 1]:
            return False
    return True


def initial_derivative(v1, k1, L, prev_slope_at_L, delta2):
    """Slope of the time value just right of ``L``."""
    return delta2 * v1 / (k1 - L) + (1 - delta2) * prev_slope_at_L


def target_derivative(v_j, v_next, v_next2, k_j, k_next, k_next2, delta3):
    """Blend of the chord slopes on either side of ``k_next``."""
    fwd = (v_next2 - v_next) / (k_next2 - k_next)
    bwd = (v_next - v_j) / (k_next - k_j)
    return delta3 * fwd + (1 - delta3) * bwd


def spot_derivative(v_prev, v_x, v_next, k_prev, x, k_next, delta4):
    """Left slope at the spot; the right slope is this minus one."""
    fwd = (v_next - v_x) / (k_next - x)
    bwd = (v_x - v_prev) / (x - k_prev)
    return delta4 + delta4 * fwd + (1 - delta4) * bwd


def intersection_w(A, B, B1, k_j, k_next, v_next):
    """Abscissa where the line through ``(k_j, A)`` with slope ``B`` meets the
    line through ``(k_next, v_next)`` with slope ``B1``."""
    w = (v_next + B * k_j - A - B1 * k_next) / (B - B1)
    if not k_j < w < k_next:
        raise ContractViolation(f"intersection {w} outside ({k_j}, {k_next})")
    return w


def crossing_y(A, B, k_j, k_next, prev):
    """First point where the tangent line from ``(k_j, A)`` meets ``prev``."""
    if A + B * (k_next - k_j) >= prev(k_next):
        return k_next
    return solve_increasing(lambda y: prev(y) - A - B * (y - k_j), k_j, k_next)


def _seed(width, z):
    return max(width * z, 1e-300)


def solve_two_segments(A, B, B1, k_j, w, k_next, v_next, z):
    """Volatilities ``(sigma_bar, sigma_tilde)`` on ``[k_j, w)`` and ``[w, k_next)``.

    The curve starts at ``k_j`` with value ``A`` and slope ``B``, must hit
    ``v_next`` at ``k_next`` and arrive with slope ``B1``.
    """
    d1 = w - k_j
    d2 = k_next - w
    seed = _seed(k_next - k_j, z)

    def at_w(s):
        return grow_values(A, B, s, z, d1)

    def reach(s):
        a, b = at_w(s)
        return a + b * d2 - v_next

    s_hat = solve_decreasing(reach, 0.0, seed=seed)

    def inner(s):
        a, b = at_w(s)
        if a + b * d2 >= v_next:
            return math.inf, a, b
        st = solve_decreasing(lambda t: grow_values(a, b, t, z, d2)[0] - v_next, 0.0, seed=seed)
        return st, a, b

    def slope_gap(s):
        st, a, b = inner(s)
        if math.isinf(st):
            return b - B1
        return grow_values(a, b, st, z, d2)[1] - B1

    s_bar = solve_increasing(slope_gap, s_hat, seed=max(s_hat, seed))
    s_tilde = inner(s_bar)[0]
    if math.isinf(s_tilde):
        raise ContractViolation("second volatility diverged; slope target not attainable")
    return s_bar, s_tilde


def solve_case_b(A, B, k_j, y, k_next, prev_next, z):
    """Volatility on ``[k_j, y)`` making the tangent at ``y`` pass through
    ``(k_next, prev_next)``."""
    d = y - k_j
    seed = _seed(k_next - k_j, z)

    def f(s):
        a, b = grow_values(A, B, s, z, d)
        return a + b * (k_next - y) - prev_next

    return solve_decreasing(f, 0.0, seed=seed)


@dataclass
class Branch:
    knots: list
    sigmas: list
    A: float
    B: float
    cases: list = field(default_factory=list)


def extend_case_a(br: Branch, start, k_next, v_next, B1, z):
    w = intersection_w(br.A, br.B, B1, start, k_next, v_next)
    s_bar, s_tilde = solve_two_segments(br.A, br.B, B1, start, w, k_next, v_next, z)
    a, b = grow_values(br.A, br.B, s_bar, z, w - start)
    a, b = grow_values(a, b, s_tilde, z, k_next - w)
    br.knots += [w, k_next]
    br.sigmas += [s_bar, s_tilde]
    br.A, br.B = a, b
    br.cases.append("a")
    return br


def extend_case_b(br: Branch, start, y, k_next, prev: PrevCurve, z):
    s_bar = solve_case_b(br.A, br.B, start, y, k_next, prev(k_next), z)
    br.A, br.B = grow_values(br.A, br.B, s_bar, z, y - start)
    br.knots.append(y)
    br.sigmas.append(s_bar)
    br.cases.append("b")
    return br


def build_left_branch(K, V, prev: PrevCurve, B_spot, deltas: Deltas, z):
    """Grow the time value from ``K[0] = L`` to ``K[-1] = x``.

    ``V`` holds the target time values (``V[0] = 0``).  The slope at each
    interior strike follows the chord blend; the slope at the spot is
    ``B_spot``.
    """
    L = K[0]
    br = Branch([L], [], 0.0, initial_derivative(V[1], K[1], L, prev.right_deriv(L), deltas.d2))
    n = len(K) - 1
    for j in range(n):
        if j + 1 < n:
            B1 = target_derivative(V[j], V[j + 1], V[j + 2], K[j], K[j + 1], K[j + 2], deltas.d3)
        else:
            B1 = B_spot
        start = K[j]
        w = intersection_w(br.A, br.B, B1, start, K[j + 1], V[j + 1])
        y = crossing_y(br.A, br.B, start, K[j + 1], prev)
        if w > y:
            extend_case_b(br, start, y, K[j + 1], prev, z)
            start = y
        extend_case_a(br, start, K[j + 1], V[j + 1], B1, z)
    return br


def interpolate_slice(K, C, x, prev_slice: LVGSlice | None, deltas: Deltas, z, scale=None):
    """Slice matching augmented strikes ``K`` / call prices ``C`` exactly.

    ``K[0], K[-1]`` are the bounds and must carry prices ``x - L`` and ``0``;
    ``x`` must already be one of the strikes.
    """
    K = np.asarray(K, dtype=float)
    C = np.asarray(C, dtype=float)
    L, U = K[0], K[-1]
    jx = int(np.flatnonzero(K == x)[0])
    V = C - np.maximum(x - K, 0.0)
    V[0] = V[-1] = 0.0
    prev = PrevCurve(prev_slice)
    B1 = spot_derivative(V[jx - 1], V[jx], V[jx + 1], K[jx - 1], x, K[jx + 1], deltas.d4)
    B2 = B1 - 1.0
    left = build_left_branch(K[:jx + 1], V[:jx + 1], prev, B1, deltas, z)
    Kr = (L + U - K[jx:])[::-1]
    Vr = V[jx:][::-1]
    right = build_left_branch(Kr, Vr, prev.reflected(L, U), -B2, deltas, z)
    right_knots = (L + U - np.array(right.knots))[::-1]
    nu = np.concatenate([left.knots, right_knots[1:]])
    nu[0], nu[-1] = L, U
    nu[len(left.knots) - 1] = x
    sigma = np.concatenate([left.sigmas, right.sigmas[::-1]])
    slc = LVGSlice(nu, sigma, z, x)
    scale = abs(x) if scale is None else scale
    err = np.max(np.abs(slc.call_price(K) - C))
    if err > MATCH_TOL * scale:
        raise MatchFailure(f"slice misses market prices by {err:g}")
    return slc


@dataclass
class SurfaceFit:
    slices: list
    strikes: list  # augmented strikes per maturity (spot included)
    prices: list  # matching call prices
    spot_inserted: list  # whether the spot strike was synthetic
    times: tuple
    z: float
    deltas: Deltas

    def market_mask(self, i):
        """True for the rows that came from the input (not endpoints or spot)."""
        K = self.strikes[i]
        mask = np.ones(len(K), dtype=bool)
        mask[0] = mask[-1] = False
        if self.spot_inserted[i]:
            mask[K == self.slices[i].x] = False
        return mask


def default_z(times):
    return math.sqrt(2.0 / times[0])


def interpolate_surface(prices: AdmissiblePrices, deltas: Deltas | None = None, z=None,
                        check=True) -> SurfaceFit:
    """Slices for every maturity matching all input prices exactly."""
    deltas = deltas or Deltas()
    z = default_z(prices.times) if z is None else z
    if check:
        rep = check_strict_admissibility(prices)
        if not rep.ok:
            raise DataError(f"prices are not strictly admissible: {rep.violations[:5]}")
    x = prices.spot
    slices, strikes, calls, inserted = [], [], [], []
    prev = None
    for i in range(prices.n_maturities):
        K, C = prices.augmented(i)
        K, C, ins = insert_spot_strike(K, C, x, PrevCurve(prev), deltas.d1)
        slc = interpolate_slice(K, C, x, prev, deltas, z, scale=abs(x))
        if check:
            _check_dominance(slc, prev, i)
        slices.append(slc)
        strikes.append(K)
        calls.append(C)
        inserted.append(ins)
        prev = slc
    return SurfaceFit(slices, strikes, calls, inserted, tuple(prices.times), z, deltas)


def _check_dominance(slc, prev, i):
    if prev is None:
        return
    grid = np.linspace(slc.L, slc.U, GRID_POINTS + 2)[1:-1]
    mine = slc.time_value(grid)
    inside = (grid > prev.L) & (grid < prev.U)
    theirs = np.zeros_like(grid)
    theirs[inside] = prev.time_value(grid[inside])
    bad = ~(mine > theirs)
    if np.any(bad):
        k = grid[np.argmax(bad)]
        raise MonotonicityFailure(f"maturity {i + 1}: time value not above previous at K={k:g}")
