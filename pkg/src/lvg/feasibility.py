"""Bid/ask quotes to a strictly admissible set of exact prices.

All strict-admissibility inequalities are affine in the prices, so the problem
is a linear feasibility problem.  It is solved by cyclic projection onto the
half-spaces (tightened by the margin ``eps``) followed by projection onto the
price boxes, starting from the box midpoints.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import Infeasible
from .market_data import AdmissiblePrices, QuoteGrid

MAX_SWEEPS = 100_000
DEFAULT_EPS_FRACTION = 1e-4


@dataclass(frozen=True)
class Row:
    """Constraint ``coef . v[idx] >= rhs`` (plus ``eps`` when strict)."""

    kind: str
    maturity: int
    idx: tuple
    coef: tuple
    rhs: float


@dataclass(frozen=True)
class FeasibilityProblem:
    spot: float
    times: tuple
    days: tuple
    bounds: tuple
    strikes: tuple  # completed strike arrays per maturity
    offsets: tuple  # index of the first variable of each maturity
    lower: np.ndarray
    upper: np.ndarray
    traded: np.ndarray
    added: np.ndarray  # True for cells introduced by completion
    volume: np.ndarray
    rows: tuple

    @property
    def n_vars(self):
        return len(self.lower)

    @property
    def n_added(self):
        return int(self.added.sum())

    def split(self, v):
        return tuple(
            np.asarray(v[self.offsets[i]:self.offsets[i] + len(k)], dtype=float)
            for i, k in enumerate(self.strikes)
        )


def complete_strike_grid(grid: QuoteGrid, bounds) -> FeasibilityProblem:
    """Emit variables and constraints on the completed strike grid.

    Every later-maturity strike inside ``(L_i, U_i)`` becomes a free price at
    maturity ``T_i``, boxed by ``[intrinsic, spot]``; so are quoted cells with
    zero volume.  Traded cells are boxed by ``[bid, ask]``.
    """
    x = grid.spot
    mats = grid.maturities
    strikes, offsets = [], []
    lower, upper, traded, added, volume = [], [], [], [], []
    n = 0
    for i, m in enumerate(mats):
        L, U = bounds[i]
        extra = {
            float(k)
            for later in mats[i + 1:]
            for k in later.strikes
            if L < k < U
        }
        quoted = {float(k): j for j, k in enumerate(m.strikes)}
        ks = np.array(sorted(set(quoted) | extra))
        strikes.append(ks)
        offsets.append(n)
        for k in ks:
            j = quoted.get(k)
            if j is not None and m.volume[j] > 0:
                lower.append(m.bid[j])
                upper.append(m.ask[j])
                traded.append(True)
            else:
                lower.append(max(x - k, 0.0))
                upper.append(x)
                traded.append(False)
            added.append(j is None)
            volume.append(m.volume[j] if j is not None else 0.0)
        n += len(ks)

    rows = []
    for i, ks in enumerate(strikes):
        L, U = bounds[i]
        off = offsets[i]
        K = np.concatenate([[L], ks, [U]])
        end_vals = {0: x - L, len(K) - 1: 0.0}

        def term(j, c):
            # variable index for augmented position j, or a constant
            return (None, c * end_vals[j]) if j in end_vals else (off + j - 1, c)

        def add(kind, terms, rhs):
            idx, coef = [], []
            for j, c in terms:
                var, val = term(j, c)
                if var is None:
                    rhs -= val
                else:
                    idx.append(var)
                    coef.append(c)
            if idx:
                rows.append(Row(kind, i, tuple(idx), tuple(coef), rhs))

        for j in range(len(K) - 1):
            add("decreasing", [(j, 1.0), (j + 1, -1.0)], 0.0)
        for j in range(1, len(K) - 1):
            wl = (K[j + 1] - K[j]) / (K[j + 1] - K[j - 1])
            add("convexity", [(j - 1, wl), (j + 1, 1.0 - wl), (j, -1.0)], 0.0)
        for j, k in enumerate(ks, start=1):
            add("intrinsic", [(j, 1.0)], max(x - k, 0.0))
        if i > 0:
            Lp, Up = bounds[i - 1]
            prev = {float(k): offsets[i - 1] + jj for jj, k in enumerate(strikes[i - 1])}
            for j, k in enumerate(ks):
                if Lp < k < Up and float(k) in prev:
                    rows.append(Row("calendar", i, (off + j, prev[float(k)]), (1.0, -1.0), 0.0))

    return FeasibilityProblem(
        spot=x,
        times=tuple(m.T for m in mats),
        days=tuple(m.days for m in mats),
        bounds=tuple(tuple(b) for b in bounds),
        strikes=tuple(strikes),
        offsets=tuple(offsets),
        lower=np.array(lower, dtype=float),
        upper=np.array(upper, dtype=float),
        traded=np.array(traded, dtype=bool),
        added=np.array(added, dtype=bool),
        volume=np.array(volume, dtype=float),
        rows=tuple(rows),
    )


def _slacks(problem, v):
    return np.array([
        sum(c * v[j] for j, c in zip(r.idx, r.coef)) - r.rhs for r in problem.rows
    ])


def max_margin(problem: FeasibilityProblem):
    """Largest uniform slack attainable inside the boxes (LP), and its point."""
    n = problem.n_vars
    m = len(problem.rows)
    A = np.zeros((m, n + 1))
    b = np.zeros(m)
    for r_i, r in enumerate(problem.rows):
        for j, c in zip(r.idx, r.coef):
            A[r_i, j] -= c
        A[r_i, n] = 1.0
        b[r_i] = -r.rhs
    cost = np.zeros(n + 1)
    cost[n] = -1.0
    scale = max(problem.spot, 1.0)
    box = list(zip(problem.lower, problem.upper)) + [(None, scale)]
    res = linprog(cost, A_ub=A, b_ub=b, bounds=box, method="highs")
    if res.status != 0:
        return -math.inf, None
    return float(res.x[n]), res.x[:n]


def solve_feasible_prices(problem: FeasibilityProblem, eps: float | None = None,
                          max_sweeps: int = MAX_SWEEPS) -> AdmissiblePrices:
    """Prices satisfying every strict inequality with slack at least ``eps``."""
    if eps is None:
        eps = DEFAULT_EPS_FRACTION * problem.spot
    v = 0.5 * (problem.lower + problem.upper)
    if problem.rows and _slacks(problem, v).min() < eps:
        best, _ = max_margin(problem)
        if best < eps:
            raise Infeasible(
                f"no prices with margin {eps:g} exist within the quotes (best {best:g})"
            )
        target = min(1.05 * eps, 0.5 * (eps + best))
        v = _project(problem, v, eps, target, max_sweeps)
    return AdmissiblePrices(
        spot=problem.spot,
        times=problem.times,
        strikes=problem.strikes,
        prices=problem.split(v),
        bounds=problem.bounds,
        days=problem.days,
        eps=float(eps),
    )


def _project(problem, v, eps, target, max_sweeps):
    vals = v.tolist()
    lo = problem.lower.tolist()
    hi = problem.upper.tolist()
    rows = [
        (r.idx, r.coef, r.rhs + target, 1.0 / sum(c * c for c in r.coef))
        for r in problem.rows
    ]
    n = len(vals)
    for _ in range(max_sweeps):
        for idx, coef, rhs, inv in rows:
            s = rhs
            for j, c in zip(idx, coef):
                s -= c * vals[j]
            if s > 0:
                t = s * inv
                for j, c in zip(idx, coef):
                    vals[j] += t * c
        for j in range(n):
            if vals[j] < lo[j]:
                vals[j] = lo[j]
            elif vals[j] > hi[j]:
                vals[j] = hi[j]
        worst = min(
            sum(c * vals[j] for j, c in zip(idx, coef)) - (rhs - target)
            for idx, coef, rhs, _ in rows
        )
        if worst >= eps:
            return np.array(vals)
    raise Infeasible(f"projection did not reach margin {eps:g} in {max_sweeps} sweeps")
