"""Monte Carlo for a diffusion run on an independent gamma clock.

Each path draws its business time from the gamma clock, then Euler-steps
``dD = a(D) dW`` over that time with absorption at the bounds.  Paths are
grouped in fixed-size batches and batch ``b`` always uses the substream
``SeedSequence([seed, b])``, so estimates do not depend on how batches are
scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedMaturity
from .piecewise_exp import LVGSlice

DEFAULT_STEPS = 2000
BATCH = 10_000
MIN_PATHS = 100
EULER_BUDGET = 0.002  # fraction of the time value allowed for discretization bias


@dataclass(frozen=True)
class GammaClock:
    tstar: float
    alpha: float | None = None  # rate; None means the unbiased 1/t*
    seed: int = 0

    def __post_init__(self):
        if not self.tstar > 0:
            raise ValueError("t* must be positive")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 1.0 / self.tstar)
        if not self.alpha > 0:
            raise ValueError("rate must be positive")

    @property
    def unbiased(self):
        return math.isclose(self.alpha * self.tstar, 1.0, rel_tol=1e-15)

    def mean(self, t):
        return t / (self.tstar * self.alpha)

    def variance(self, t):
        return t / (self.tstar * self.alpha**2)


@dataclass(frozen=True)
class McEstimate:
    price: float
    std_error: float
    n_paths: int
    n_steps: int
    terminal_mean: float = math.nan
    terminal_std_error: float = math.nan
    absorbed_fraction: float = math.nan

    def __post_init__(self):
        if self.n_paths < MIN_PATHS:
            raise ValueError(f"need at least {MIN_PATHS} paths")


def sample_gamma(t, clock: GammaClock, rng: np.random.Generator, size=None):
    """Draws of the clock at time ``t``: Gamma(shape t/t*, rate alpha)."""
    if not t > 0:
        raise ValueError("t must be positive")
    return rng.gamma(t / clock.tstar, 1.0 / clock.alpha, size)


def _batch_rng(seed, b):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(b)]))


def simulate_terminal(slc: LVGSlice, n_paths, n_steps=DEFAULT_STEPS, seed=0, t=None, clock=None):
    """Terminal values of the subordinated diffusion at calendar time ``t``.

    Returns an array of length ``n_paths``; absorbed paths sit on a bound.
    """
    clock = clock or GammaClock(slc.tstar, seed=seed)
    t = slc.tstar if t is None else t
    nu, sig = slc.nu, slc.sigma
    L, U = slc.L, slc.U
    out = np.empty(n_paths)
    for b, start in enumerate(range(0, n_paths, BATCH)):
        m = min(BATCH, n_paths - start)
        rng = _batch_rng(seed, b)
        tau = sample_gamma(t, clock, rng, m)
        sq = np.sqrt(tau / n_steps)
        D = np.full(m, slc.x)
        alive = np.ones(m, dtype=bool)
        for _ in range(n_steps):
            z = rng.standard_normal(m)
            seg = np.clip(np.searchsorted(nu, D, side="right") - 1, 0, len(sig) - 1)
            D = np.where(alive, D + sig[seg] * sq * z, D)
            lo = D <= L
            hi = D >= U
            D[lo] = L
            D[hi] = U
            alive &= ~(lo | hi)
        out[start:start + m] = D
    return out


def simulate_slice_call(slc: LVGSlice, K, n_paths, n_steps=DEFAULT_STEPS, seed=0) -> McEstimate:
    """Call price at the slice maturity ``t*`` by simulation."""
    if n_paths < MIN_PATHS:
        raise ValueError(f"need at least {MIN_PATHS} paths")
    if K >= slc.U:
        return McEstimate(0.0, 0.0, n_paths, n_steps, slc.x, 0.0, math.nan)
    D = simulate_terminal(slc, n_paths, n_steps, seed)
    pay = np.maximum(D - K, 0.0)
    root_n = math.sqrt(n_paths)
    return McEstimate(
        price=float(pay.mean()),
        std_error=float(pay.std(ddof=1) / root_n),
        n_paths=n_paths,
        n_steps=n_steps,
        terminal_mean=float(D.mean()),
        terminal_std_error=float(D.std(ddof=1) / root_n),
        absorbed_fraction=float(np.mean((D == slc.L) | (D == slc.U))),
    )


def martingale_gap(est: McEstimate, spot):
    """``|E[D] - x|`` in units of its standard error."""
    if est.terminal_std_error == 0:
        return 0.0
    return abs(est.terminal_mean - spot) / est.terminal_std_error


def simulate_nonhom_first_interval(model, K, T=None, n_paths=100_000, n_steps=DEFAULT_STEPS, seed=0):
    """Call price at ``T_1`` of the non-homogeneous model.

    On ``(0, T_1]`` the transition kernel is that of slice 1 run on a clock
    with characteristic time ``T_1``.
    """
    T1 = model.maturities[0]
    T = T1 if T is None else T
    if not math.isclose(T, T1, rel_tol=1e-12):
        raise UnsupportedMaturity(f"pathwise simulation covers only T_1={T1:g}, got {T:g}")
    s = model.slices[0]
    if not math.isclose(s.tstar, T1, rel_tol=1e-12):
        # slice 1 prices the maturity 2/z**2; rescale the clock to T_1
        # through its local variance a2 = (2 / (T_1 z**2)) sigma**2.
        factor = math.sqrt(s.tstar / T1)
        s = LVGSlice(s.nu, s.sigma * factor, math.sqrt(2.0 / T1), s.x)
    return simulate_slice_call(s, K, n_paths, n_steps, seed)
