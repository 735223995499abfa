"""Strike-grid curves of a calibrated model as CSV rows and a static SVG."""
from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import OutOfBand  # noqa: E402
from .numerics import implied_vol  # noqa: E402

# fixed salt and no timestamp keep the SVG byte-identical across runs
plt.rcParams["svg.hashsalt"] = "lvg"
plt.rcParams["svg.fonttype"] = "none"


def curve_table(model, n=200, span=None):
    """Rows ``(maturity, strike, call, implied_vol)`` on a shared strike grid.

    ``span`` restricts the grid (default: the first slice's bounds, which
    every later slice contains).  The implied vol is NaN where the price sits
    outside the Black-Scholes band.
    """
    first = model.slices[0]
    lo, hi = span if span is not None else (first.L, first.U)
    grid = np.linspace(lo, hi, n + 2)[1:-1]
    rows = []
    for T, s in zip(model.maturities, model.slices):
        inside = (grid > s.L) & (grid < s.U)
        calls = np.maximum(model.x - grid, 0.0)
        calls[inside] = s.call_price(grid[inside])
        for k, c in zip(grid, calls):
            rows.append((T, float(k), float(c), _safe_iv(c, k, model.x, T)))
    return rows


def _safe_iv(price, strike, spot, T):
    try:
        return implied_vol(price, strike, spot, T)
    except OutOfBand:
        return math.nan


def render_svg(rows, path, spot=None, market=None):
    """Two panels: call prices and implied vols against strike, one line per maturity.

    ``market`` optionally holds ``(maturity, strike, price, iv)`` points to overlay.
    """
    fig, (ax_p, ax_v) = plt.subplots(1, 2, figsize=(10, 4))
    mats = sorted({r[0] for r in rows})
    for T in mats:
        sel = [r for r in rows if r[0] == T]
        k = [r[1] for r in sel]
        label = f"T={T * 252:.0f}d"
        ax_p.plot(k, [r[2] for r in sel], lw=1, label=label)
        ax_v.plot(k, [r[3] for r in sel], lw=1, label=label)
    if market:
        ax_p.plot([m[1] for m in market], [m[2] for m in market], "k.", ms=3)
        ax_v.plot([m[1] for m in market], [m[3] for m in market], "k.", ms=3)
    if spot is not None:
        for ax in (ax_p, ax_v):
            ax.axvline(spot, color="0.6", lw=0.5)
    ax_p.set_xlabel("strike")
    ax_p.set_ylabel("call price")
    ax_v.set_xlabel("strike")
    ax_v.set_ylabel("implied volatility")
    ax_v.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
