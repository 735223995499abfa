"""Non-homogeneous LVG model assembled from calibrated slices.

On the interval ``(T_{m-1}, T_m]`` the local variance is

    a2_m(K) = (2 / t*_m) * (C_m(K) - C_{m-1}(K)) / C_m''(K),

with ``t*_m = T_m - T_{m-1}`` and ``C_0`` the intrinsic value.  Each slice has
``C_m'' = z**2 V_m / sigma_m**2`` in closed form, so the quotient is analytic.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDensity, NestingViolation, OutOfDomain
from .piecewise_exp import LVGSlice

ASSERT_GRID = 1000
# relative floor for the grid check that a2 stays away from zero
POSITIVITY_FLOOR = 1e-300


def _prev_time_value(prev: LVGSlice | None, K):
    K = np.asarray(K, dtype=float)
    if prev is None:
        return np.zeros_like(K)
    out = np.zeros_like(K)
    inside = (K > prev.L) & (K < prev.U)
    if np.any(inside):
        out[inside] = prev.time_value(K[inside])
    return out


@dataclass(frozen=True)
class NonHomLVGModel:
    """Calibrated slices plus the maturity schedule ``0 = T_0 < ... < T_M``."""

    z: float
    x: float
    maturities: tuple
    slices: tuple

    @property
    def n_intervals(self):
        return len(self.slices)

    @property
    def step_sizes(self):
        T = (0.0,) + tuple(self.maturities)
        return tuple(T[m + 1] - T[m] for m in range(len(self.maturities)))

    def bounds(self, m):
        s = self.slices[m - 1]
        return s.L, s.U

    def to_dict(self):
        return {
            "z": float(self.z),
            "x": float(self.x),
            "maturities": [float(t) for t in self.maturities],
            "slices": [
                {
                    "nu": [float(v) for v in s.nu],
                    "sigma": [float(v) for v in s.sigma],
                    "L": s.L,
                    "U": s.U,
                }
                for s in self.slices
            ],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        z, x = float(d["z"]), float(d["x"])
        slices = [
            LVGSlice.from_dict({**s, "z": z, "x": x}) for s in d["slices"]
        ]
        return assemble_model(slices, d["maturities"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def save_model(model: NonHomLVGModel, path):
    with open(path, "w") as fh:
        fh.write(model.to_json())


def load_model(path) -> NonHomLVGModel:
    with open(path) as fh:
        return NonHomLVGModel.from_json(fh.read())


def local_variance(model: NonHomLVGModel, m: int, K):
    """Local variance on the ``m``-th interval (1-based), right limit at knots."""
    if not 1 <= m <= model.n_intervals:
        raise ValueError(f"interval index {m} out of range")
    s = model.slices[m - 1]
    K = np.asarray(K, dtype=float)
    if np.any(K <= s.L) or np.any(K >= s.U) or np.any(np.isnan(K)):
        raise OutOfDomain(f"strike outside ({s.L}, {s.U})")
    prev = model.slices[m - 2] if m > 1 else None
    tstep = model.step_sizes[m - 1]
    v = np.asarray(s.time_value(K))
    spread = v - _prev_time_value(prev, K)
    sig2 = s.local_sigma(K) ** 2
    out = (2.0 / tstep) * spread * sig2 / (s.z**2 * v)
    return float(out) if K.ndim == 0 else out


def single_smile_calibration(curve, curve_dd, x, tau):
    """Local variance reproducing one call curve at maturity ``tau``.

    ``curve`` and ``curve_dd`` evaluate the call price and its second strike
    derivative.  Returns a vectorized function ``a2(K)``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")

    def a2(K):
        K = np.asarray(K, dtype=float)
        tv = np.asarray(curve(K), dtype=float) - np.maximum(x - K, 0.0)
        dd = np.asarray(curve_dd(K), dtype=float)
        if np.any(dd <= 0):
            raise DegenerateDensity("second strike derivative is not positive")
        if np.any(tv <= 0):
            raise DegenerateDensity("curve has no time value")
        out = (2.0 / tau) * tv / dd
        return float(out) if K.ndim == 0 else out

    return a2


def decile_bins(L, U, n=10):
    return np.linspace(L, U, n + 1)


def coarsen_coefficient(knots, a2, bins=None):
    """Piecewise-constant coefficient matching the per-bin mean of ``1/a2``.

    ``knots`` (length n+1) and ``a2`` (length n) describe the input; ``bins``
    are edges covering the same interval.  Returns ``(bins, a2_bar)``.
    """
    knots = np.asarray(knots, dtype=float)
    a2 = np.asarray(a2, dtype=float)
    if len(knots) != len(a2) + 1:
        raise ValueError("need len(knots) == len(a2) + 1")
    bins = decile_bins(knots[0], knots[-1]) if bins is None else np.asarray(bins, dtype=float)
    if bins[0] != knots[0] or bins[-1] != knots[-1] or np.any(np.diff(bins) <= 0):
        raise ValueError("bins must partition the knot range")
    out = np.empty(len(bins) - 1)
    for b in range(len(bins) - 1):
        lo, hi = bins[b], bins[b + 1]
        left = np.clip(knots[:-1], lo, hi)
        right = np.clip(knots[1:], lo, hi)
        inv = math.fsum((right - left) / a2)
        out[b] = (hi - lo) / inv
    return bins, out


def geodesic_integral(knots, a2, lo, hi):
    """Exact ``int_lo^hi dK / a2(K)`` for a piecewise-constant coefficient."""
    knots = np.asarray(knots, dtype=float)
    left = np.clip(knots[:-1], lo, hi)
    right = np.clip(knots[1:], lo, hi)
    return math.fsum((right - left) / np.asarray(a2, dtype=float))


def coarsen_slice(s: LVGSlice, bins=None) -> LVGSlice:
    """Slice whose squared volatility is the coarsened version of ``s``'s.

    The spot is forced to be a bin edge only if it already is one; the
    resulting slice prices the coarsened model, not the market.
    """
    edges, a2bar = coarsen_coefficient(s.nu, s.sigma**2, bins)
    return LVGSlice(edges, np.sqrt(a2bar), s.z, s.x)


def assemble_model(slices, maturities) -> NonHomLVGModel:
    slices = tuple(slices)
    T = tuple(float(t) for t in maturities)
    if len(slices) != len(T) or not slices:
        raise NestingViolation("need one slice per maturity")
    if any(not T[i] < T[i + 1] for i in range(len(T) - 1)) or not T[0] > 0:
        raise NestingViolation("maturities must be positive and strictly increasing")
    z, x = slices[0].z, slices[0].x
    for i, s in enumerate(slices):
        if s.z != z or s.x != x:
            raise NestingViolation(f"slice {i + 1} has a different z or spot")
        if i and not (s.L <= slices[i - 1].L and s.U >= slices[i - 1].U):
            raise NestingViolation(f"bounds of slice {i + 1} do not contain those of slice {i}")
    model = NonHomLVGModel(z, x, T, slices)
    _assert_bounded(model)
    return model


def _assert_bounded(model):
    for m in range(1, model.n_intervals + 1):
        s = model.slices[m - 1]
        grid = np.linspace(s.L, s.U, ASSERT_GRID + 2)[1:-1]
        a2 = local_variance(model, m, grid)
        if not np.all(np.isfinite(a2)) or np.any(a2 <= POSITIVITY_FLOOR):
            k = grid[np.argmax(~(np.isfinite(a2) & (a2 > POSITIVITY_FLOOR)))]
            raise NestingViolation(f"local variance of interval {m} degenerates near K={k:g}")
