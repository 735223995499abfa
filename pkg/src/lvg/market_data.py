"""Quote ingestion, discounting, strike-structure and admissibility checks."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    CurveUndefined,
    DuplicateStrike,
    InfeasibleBounds,
    NegativeSpread,
    ParseError,
)

DAYS_PER_YEAR = 252.0
QUOTE_HEADER = ["maturity_days", "strike", "bid", "ask", "volume"]
CURVE_HEADER = ["tenor_years", "rate"]
CHECK_MARGIN = 1e-12


@dataclass(frozen=True)
class FlatCurve:
    """Piecewise-flat rate curve: ``rates[k]`` applies on ``(tenors[k-1], tenors[k]]``."""

    tenors: np.ndarray
    rates: np.ndarray

    def integral(self, T):
        """``int_0^T r(s) ds``."""
        if T < 0:
            raise CurveUndefined(f"negative tenor {T}")
        if T > self.tenors[-1] * (1 + 1e-12):
            raise CurveUndefined(f"curve ends at {self.tenors[-1]}, need {T}")
        total, start = 0.0, 0.0
        for end, r in zip(self.tenors, self.rates):
            seg_end = min(end, T)
            if seg_end > start:
                total += r * (seg_end - start)
            start = end
            if end >= T:
                break
        return total

    @classmethod
    def constant(cls, rate, horizon=100.0):
        return cls(np.array([horizon]), np.array([rate]))


def parse_curve(csv_text: str) -> FlatCurve:
    rows = list(csv.reader(io.StringIO(csv_text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows or [c.strip() for c in rows[0]] != CURVE_HEADER:
        raise ParseError(1, f"expected header {','.join(CURVE_HEADER)}")
    tenors, rates = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            t, r = (float(c) for c in row)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        tenors.append(t)
        rates.append(r)
    if not tenors or np.any(np.diff(tenors) <= 0) or tenors[0] <= 0:
        raise ParseError(2, "tenors must be positive and strictly increasing")
    return FlatCurve(np.array(tenors), np.array(rates))


@dataclass(frozen=True)
class MaturityQuotes:
    days: float
    T: float
    strikes: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    volume: np.ndarray

    @property
    def traded(self):
        return self.volume > 0

    @property
    def mid(self):
        return 0.5 * (self.bid + self.ask)


@dataclass(frozen=True)
class QuoteGrid:
    spot: float
    maturities: tuple
    rate_curve: FlatCurve | None = None
    dividend_curve: FlatCurve | None = None

    @property
    def times(self):
        return np.array([m.T for m in self.maturities])


def parse_quotes(csv_text: str, spot: float = math.nan, rate_curve=None, dividend_curve=None) -> QuoteGrid:
    """Parse ``maturity_days,strike,bid,ask,volume`` rows into a grid."""
    reader = csv.reader(io.StringIO(csv_text))
    header = None
    buckets: dict[float, dict[float, tuple]] = {}
    for lineno, row in enumerate(reader, start=1):
        if not row or not any(c.strip() for c in row):
            continue
        if header is None:
            header = [c.strip() for c in row]
            if header != QUOTE_HEADER:
                raise ParseError(lineno, f"expected header {','.join(QUOTE_HEADER)}")
            continue
        if len(row) != 5:
            raise ParseError(lineno, f"expected 5 fields, got {len(row)}")
        try:
            days, strike, bid, ask, vol = (float(c) for c in row)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        if not all(math.isfinite(v) for v in (days, strike, bid, ask, vol)):
            raise ParseError(lineno, "non-finite value")
        if days <= 0 or bid < 0 or vol < 0:
            raise ParseError(lineno, "maturity must be positive, bid and volume nonnegative")
        if ask < bid:
            raise NegativeSpread(f"line {lineno}: ask {ask} below bid {bid}")
        per_t = buckets.setdefault(days, {})
        if strike in per_t:
            raise DuplicateStrike(f"line {lineno}: duplicate strike {strike} at maturity {days}")
        per_t[strike] = (bid, ask, vol)
    mats = []
    for days in sorted(buckets):
        ks = sorted(buckets[days])
        arr = np.array([buckets[days][k] for k in ks], dtype=float)
        mats.append(
            MaturityQuotes(days, days / DAYS_PER_YEAR, np.array(ks), arr[:, 0], arr[:, 1], arr[:, 2])
        )
    return QuoteGrid(float(spot), tuple(mats), rate_curve, dividend_curve)


def discount_adjust(grid: QuoteGrid, convention: str = "spot") -> QuoteGrid:
    """Convert quotes to martingale units.

    ``"spot"``: with ``X_t = S_t exp(-int_0^t (r - q))`` a martingale started
    at the spot, ``C = exp(-R) E(S_T - K)+`` becomes
    ``C exp(Q) = E(X_T - K exp(-(R - Q)))+``, where ``R, Q`` integrate the rate
    and dividend curves up to ``T``.  Spot is unchanged, so one model covers
    every maturity.

    ``"forward"``: undiscounted prices ``C exp(R)`` on unchanged strikes, and the
    spot replaced by the forward of the first maturity.  Only consistent when
    all maturities share that forward (for example ``r = q``).
    """
    if grid.rate_curve is None and grid.dividend_curve is None:
        return grid
    if convention not in ("spot", "forward"):
        raise ValueError(f"unknown discounting convention {convention!r}")
    out = []
    spot = grid.spot
    for n, m in enumerate(grid.maturities):
        R = grid.rate_curve.integral(m.T) if grid.rate_curve is not None else 0.0
        Q = grid.dividend_curve.integral(m.T) if grid.dividend_curve is not None else 0.0
        if convention == "spot":
            price_scale, strike_scale = math.exp(Q), math.exp(-(R - Q))
        else:
            price_scale, strike_scale = math.exp(R), 1.0
            if n == 0:
                spot = grid.spot * math.exp(R - Q)
        out.append(
            replace(
                m,
                strikes=m.strikes * strike_scale,
                bid=m.bid * price_scale,
                ask=m.ask * price_scale,
            )
        )
    return QuoteGrid(spot, tuple(out), None, None)


@dataclass
class StructureReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations


def check_strike_structure(grid: QuoteGrid) -> StructureReport:
    """Flag strikes new at ``T_{i+1}`` that fall strictly inside the range at ``T_i``."""
    report = StructureReport()
    for i in range(len(grid.maturities) - 1):
        cur = grid.maturities[i].strikes
        nxt = grid.maturities[i + 1].strikes
        if len(cur) == 0:
            continue
        known = set(cur.tolist())
        for k in nxt:
            if k not in known and cur[0] < k < cur[-1]:
                report.violations.append((i + 1, float(k)))
    return report


@dataclass(frozen=True)
class BoundsPolicy:
    kind: str
    L: float = 0.0
    U: float = 0.0
    factor: float = 1.0

    @classmethod
    def parse(cls, text: str):
        kind, _, arg = text.partition(":")
        if kind == "fixed":
            lo, hi = (float(v) for v in arg.split(","))
            return cls("fixed", L=lo, U=hi)
        if kind == "widen":
            return cls("widen", factor=float(arg))
        raise ValueError(f"unknown bounds policy {text!r}")


def choose_bounds(grid: QuoteGrid, policy: BoundsPolicy, allow_completion: bool = False):
    """Per-maturity ``(L_i, U_i)`` nested in maturity and containing each strike range.

    With ``allow_completion`` a later-maturity strike inside ``(L_i, U_i)`` but
    outside the strike range of ``T_i`` is accepted, since the feasibility stage
    adds it to ``T_i`` as a free price.
    """
    x = grid.spot
    bounds = []
    for m in grid.maturities:
        if policy.kind == "fixed":
            L, U = policy.L, policy.U
        else:
            if policy.factor <= 1:
                raise InfeasibleBounds("widen factor must exceed 1")
            L = m.strikes[0] * (2.0 - policy.factor)
            U = m.strikes[-1] * policy.factor
            if bounds:
                L = min(L, bounds[-1][0])
                U = max(U, bounds[-1][1])
        bounds.append((float(L), float(U)))
    for i, (m, (L, U)) in enumerate(zip(grid.maturities, bounds)):
        if not L < x < U:
            raise InfeasibleBounds(f"spot {x} outside ({L}, {U}) at maturity {m.days}")
        if not (L < m.strikes[0] and m.strikes[-1] < U):
            raise InfeasibleBounds(f"strikes of maturity {m.days} not inside ({L}, {U})")
        if i + 1 < len(bounds):
            Ln, Un = bounds[i + 1]
            if Ln > L or Un < U:
                raise InfeasibleBounds(f"bounds not nested between maturities {i + 1} and {i + 2}")
        if allow_completion:
            continue
        lo_k, hi_k = m.strikes[0], m.strikes[-1]
        for later in grid.maturities[i + 1:]:
            wedged = [k for k in later.strikes if L < k < U and not lo_k <= k <= hi_k]
            if wedged:
                raise InfeasibleBounds(
                    f"strike {wedged[0]} of maturity {later.days} lies in ({L}, {U}) "
                    f"outside the strike range of maturity {m.days}"
                )
    return bounds


@dataclass(frozen=True)
class AdmissiblePrices:
    """Exact call prices per maturity plus bounds.

    ``strikes[i]`` and ``prices[i]`` exclude the synthetic endpoints
    ``(L_i, x - L_i)`` and ``(U_i, 0)``; :meth:`augmented` adds them.
    """

    spot: float
    times: tuple
    strikes: tuple
    prices: tuple
    bounds: tuple
    days: tuple = ()
    eps: float = 0.0

    @property
    def n_maturities(self):
        return len(self.times)

    def augmented(self, i):
        L, U = self.bounds[i]
        K = np.concatenate([[L], self.strikes[i], [U]])
        C = np.concatenate([[self.spot - L], self.prices[i], [0.0]])
        return K, C

    def time_values(self, i):
        return self.prices[i] - np.maximum(self.spot - self.strikes[i], 0.0)


@dataclass
class AdmissibilityReport:
    violations: list = field(default_factory=list)
    min_slack: float = math.inf

    @property
    def ok(self):
        return not self.violations


def check_strict_admissibility(data: AdmissiblePrices, margin: float = CHECK_MARGIN) -> AdmissibilityReport:
    """Check each strict inequality of strict admissibility with slack ``> margin``.

    Violations are tuples ``(kind, maturity_index, strike_indices, slack)`` with
    strike indices into the augmented graph (0 is ``L_i``).
    """
    rep = AdmissibilityReport()
    x = data.spot

    def record(kind, i, idx, slack):
        rep.min_slack = min(rep.min_slack, slack)
        if not slack > margin:
            rep.violations.append((kind, i, idx, float(slack)))

    for i in range(data.n_maturities):
        L, U = data.bounds[i]
        if not L < x < U:
            rep.violations.append(("bounds", i, (), float(min(x - L, U - x))))
        if i > 0:
            Lp, Up = data.bounds[i - 1]
            if L > Lp or U < Up:
                rep.violations.append(("nesting", i, (), 0.0))
        K, C = data.augmented(i)
        if np.any(np.diff(K) <= 0):
            rep.violations.append(("strike_order", i, (), 0.0))
            continue
        for j in range(len(K) - 1):
            record("decreasing", i, (j, j + 1), C[j] - C[j + 1])
        for j in range(1, len(K) - 1):
            wl = (K[j + 1] - K[j]) / (K[j + 1] - K[j - 1])
            chord = wl * C[j - 1] + (1 - wl) * C[j + 1]
            gap = chord - C[j]
            rep.min_slack = min(rep.min_slack, gap)
            if abs(gap) <= margin:
                rep.violations.append(("collinear", i, (j - 1, j, j + 1), float(gap)))
            elif gap < 0:
                rep.violations.append(("convexity", i, (j - 1, j, j + 1), float(gap)))
        for j, (k, c) in enumerate(zip(data.strikes[i], data.prices[i]), start=1):
            record("intrinsic", i, (j,), c - max(x - k, 0.0))
        if i > 0:
            Lp, Up = data.bounds[i - 1]
            prev = dict(zip(data.strikes[i - 1].tolist(), data.prices[i - 1].tolist()))
            for j, (k, c) in enumerate(zip(data.strikes[i].tolist(), data.prices[i]), start=1):
                if not Lp < k < Up:
                    continue
                if k not in prev:
                    rep.violations.append(("calendar_reference_missing", i, (j,), 0.0))
                    continue
                record("calendar", i, (j,), c - prev[k])
    return rep


def admissible_from_arrays(spot, times, strikes: Sequence, prices: Sequence, bounds, days=(), eps=0.0):
    return AdmissiblePrices(
        float(spot),
        tuple(float(t) for t in times),
        tuple(np.asarray(k, dtype=float) for k in strikes),
        tuple(np.asarray(p, dtype=float) for p in prices),
        tuple((float(a), float(b)) for a, b in bounds),
        tuple(days),
        float(eps),
    )
