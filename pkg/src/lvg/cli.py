"""Command-line front end: ``lvg <command> [options]``.

Exit codes: 0 success, 1 bad input data, 2 internal contract violation.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation, DataError, OutOfBand, ParseError
from .feasibility import complete_strike_grid, solve_feasible_prices
from .gamma_mc import DEFAULT_STEPS, EULER_BUDGET, martingale_gap, simulate_nonhom_first_interval
from .market_data import (
    DAYS_PER_YEAR,
    QUOTE_HEADER,
    BoundsPolicy,
    admissible_from_arrays,
    check_strict_admissibility,
    check_strike_structure,
    choose_bounds,
    discount_adjust,
    parse_curve,
    parse_quotes,
)
from .numerics import implied_vol
from .pdde_pricer import DEFAULT_NODES, model_backward_prices
from .smile_interp import Deltas, interpolate_surface
from .surface import assemble_model, coarsen_slice, load_model, save_model

DEFAULT_BOUNDS = "widen:1.5"
REPRICE_TOL = 1e-9


def fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.12g}"


def write_csv(rows, header, path=None, stream=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    if stream is not None:
        stream.write(text)
    return text


@dataclass(frozen=True)
class RunConfig:
    command: str
    quotes: str | None
    rates: str | None
    dividends: str | None
    model: str | None
    out: str | None
    spot: float | None
    z: float | None
    deltas: Deltas
    eps: float | None
    grid_n: int
    paths: int
    steps: int
    seed: int
    bounds: BoundsPolicy
    strikes: tuple
    payoff: str
    bins: int

    @classmethod
    def from_args(cls, ns):
        if ns.z is not None and ns.tstar is not None:
            raise DataError("give at most one of --z and --tstar")
        z = ns.z
        if ns.tstar is not None:
            if not ns.tstar > 0:
                raise DataError("--tstar must be positive")
            z = math.sqrt(2.0 / ns.tstar)
        if z is not None and not z > 0:
            raise DataError("--z must be positive")
        if ns.eps is not None and not ns.eps > 0:
            raise DataError("--eps must be positive")
        if ns.grid_n < 1 or ns.paths < 100 or ns.steps < 1:
            raise DataError("--grid-n and --steps must be positive, --paths at least 100")
        try:
            deltas = Deltas(ns.delta1, ns.delta2, ns.delta3, ns.delta4)
            bounds = BoundsPolicy.parse(ns.bounds)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        strikes = ()
        if ns.strikes:
            try:
                strikes = tuple(float(s) for s in ns.strikes.split(","))
            except ValueError:
                raise DataError(f"bad --strikes list {ns.strikes!r}") from None
        return cls(ns.command, ns.quotes, ns.rates, ns.dividends, ns.model, ns.out, ns.spot, z,
                   deltas, ns.eps, ns.grid_n, ns.paths, ns.steps, ns.seed, bounds, strikes,
                   ns.payoff, ns.bins)


def _read(path, what):
    if path is None:
        raise DataError(f"missing --{what}")
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _with_file(path, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ParseError as exc:
        raise ParseError(exc.line, f"{path}: {exc.message}") from None
    except DataError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def _load_grid(cfg: RunConfig):
    if cfg.spot is None or not cfg.spot > 0:
        raise DataError("--spot is required and must be positive")
    rates = divs = None
    if cfg.rates:
        rates = _with_file(cfg.rates, parse_curve, _read(cfg.rates, "rates"))
    if cfg.dividends:
        divs = _with_file(cfg.dividends, parse_curve, _read(cfg.dividends, "dividends"))
    grid = _with_file(cfg.quotes, parse_quotes, _read(cfg.quotes, "quotes"), cfg.spot, rates, divs)
    if not grid.maturities:
        raise DataError(f"{cfg.quotes}: no quotes")
    return discount_adjust(grid)


def _is_exact(grid):
    return all(np.all(m.bid == m.ask) and np.all(m.volume > 0) for m in grid.maturities)


def _exact_prices(grid, bounds):
    return admissible_from_arrays(
        grid.spot,
        grid.times,
        [m.strikes for m in grid.maturities],
        [m.bid for m in grid.maturities],
        bounds,
        [m.days for m in grid.maturities],
    )


def _admissible(cfg, grid):
    """Exact prices from the quotes, running the feasibility stage if they are spreads."""
    if _is_exact(grid):
        return _exact_prices(grid, choose_bounds(grid, cfg.bounds)), False
    bounds = choose_bounds(grid, cfg.bounds, allow_completion=True)
    problem = complete_strike_grid(grid, bounds)
    return solve_feasible_prices(problem, cfg.eps), True


def cmd_check(cfg, out):
    grid = _load_grid(cfg)
    structure = check_strike_structure(grid)
    rows = [("structure", int(i), "", k, "") for i, k in structure.violations]
    bounds = choose_bounds(grid, cfg.bounds, allow_completion=True)
    mids = admissible_from_arrays(
        grid.spot, grid.times, [m.strikes for m in grid.maturities],
        [m.mid for m in grid.maturities], bounds, [m.days for m in grid.maturities],
    )
    rep = check_strict_admissibility(mids)
    for kind, i, idx, slack in rep.violations:
        K, _ = mids.augmented(i)
        strikes = " ".join(fmt(K[j]) for j in idx)
        rows.append((kind, int(i) + 1, fmt(grid.maturities[i].days), strikes, slack))
    write_csv(rows, ["kind", "maturity_index", "maturity_days", "strikes", "slack"], stream=out)
    if rows:
        raise DataError(f"{len(rows)} violation(s)")
    return 0


def cmd_feasify(cfg, out):
    grid = _load_grid(cfg)
    bounds = choose_bounds(grid, cfg.bounds, allow_completion=True)
    problem = complete_strike_grid(grid, bounds)
    prices = solve_feasible_prices(problem, cfg.eps)
    rows = []
    for i, days in enumerate(prices.days):
        for k, c in zip(prices.strikes[i], prices.prices[i]):
            rows.append((days, k, c, c, 1))
    text = write_csv(rows, QUOTE_HEADER, path=cfg.out)
    if cfg.out is None:
        out.write(text)
    return 0


def _repricing_rows(fit, days):
    rows = []
    for i, s in enumerate(fit.slices):
        mask = fit.market_mask(i)
        K = fit.strikes[i][mask]
        C = fit.prices[i][mask]
        model = s.call_price(K)
        for k, c, m in zip(K, C, model):
            err = abs(m - c)
            rows.append((days[i], k, c, m, err, err <= REPRICE_TOL * abs(fit.slices[i].x)))
    return rows


def cmd_calibrate(cfg, out):
    if cfg.out is None:
        raise DataError("missing --out")
    grid = _load_grid(cfg)
    prices, _ = _admissible(cfg, grid)
    fit = interpolate_surface(prices, cfg.deltas, cfg.z)
    model = assemble_model(fit.slices, fit.times)
    save_model(model, cfg.out)
    days = [m.days for m in grid.maturities]
    knot_rows = []
    for i, s in enumerate(model.slices):
        for j, sig in enumerate(s.sigma):
            knot_rows.append((days[i], j, s.nu[j], s.nu[j + 1], sig))
    write_csv(knot_rows, ["maturity_days", "segment", "knot_left", "knot_right", "sigma"],
              path=_sibling(cfg.out, "_knots.csv"))
    rows = _repricing_rows(fit, days)
    write_csv(rows, ["maturity_days", "strike", "market", "model", "abs_err", "pass"], stream=out)
    if not all(r[-1] for r in rows):
        raise ContractViolation("repricing check failed")
    return 0


def _sibling(path, suffix):
    p = Path(path)
    return p.with_name(p.stem + suffix)


def _payoff(spec, strike):
    if spec == "call":
        return lambda s: np.maximum(s - strike, 0.0)
    if spec == "put":
        return lambda s: np.maximum(strike - s, 0.0)
    raise DataError(f"unknown payoff {spec!r}")


def price_european(model, payoff, m, n):
    """Time-0 price at the spot of ``payoff`` paid at maturity ``m`` (1-based)."""
    nodes, u = model_backward_prices(model, payoff, n, maturity=m)
    return float(np.interp(model.x, nodes, u))


def cmd_price(cfg, out):
    model = load_model(cfg.model) if cfg.model else _missing("model")
    strikes = cfg.strikes or _missing("strikes")
    rows = []
    for m, T in enumerate(model.maturities, start=1):
        for k in strikes:
            rows.append((T, k, cfg.payoff, price_european(model, _payoff(cfg.payoff, k), m, cfg.grid_n)))
    text = write_csv(rows, ["maturity", "strike", "type", "price"], path=cfg.out)
    if cfg.out is None:
        out.write(text)
    return 0


def _missing(what):
    raise DataError(f"missing --{what}")


def _price_rows(text, path):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ParseError(1, f"{path}: empty file")
    header = [h.strip() for h in header]
    rows = []
    if header == QUOTE_HEADER:
        for line, r in enumerate(reader, start=2):
            if not r:
                continue
            try:
                days, k, bid, ask, _ = (float(v) for v in r)
            except ValueError as exc:
                raise ParseError(line, f"{path}: {exc}") from None
            rows.append((days / DAYS_PER_YEAR, k, "call", 0.5 * (bid + ask)))
        return rows
    if header != ["maturity", "strike", "type", "price"]:
        raise ParseError(1, f"{path}: expected a quote or price header")
    for line, r in enumerate(reader, start=2):
        if not r:
            continue
        try:
            rows.append((float(r[0]), float(r[1]), r[2], float(r[3])))
        except (ValueError, IndexError) as exc:
            raise ParseError(line, f"{path}: {exc}") from None
    return rows


def cmd_iv(cfg, out):
    if cfg.spot is None:
        raise DataError("--spot is required")
    x = cfg.spot
    rows = []
    for T, k, kind, p in _price_rows(_read(cfg.quotes, "quotes"), cfg.quotes):
        call = p if kind == "call" else p + (x - k)
        try:
            vol = implied_vol(call, k, x, T)
        except OutOfBand:
            vol = math.nan
        rows.append((T, k, kind, p, vol))
    text = write_csv(rows, ["maturity", "strike", "type", "price", "implied_vol"], path=cfg.out)
    if cfg.out is None:
        out.write(text)
    return 0


def cmd_coarsen(cfg, out):
    if cfg.out is None:
        raise DataError("missing --out")
    model = load_model(cfg.model) if cfg.model else _missing("model")
    slices = []
    for s in model.slices:
        slices.append(coarsen_slice(s, np.linspace(s.L, s.U, cfg.bins + 1)))
    coarse = assemble_model(slices, model.maturities)
    save_model(coarse, cfg.out)
    rows = []
    for m, (a, b) in enumerate(zip(model.slices, coarse.slices), start=1):
        rows.append((m, len(a.sigma), len(b.sigma)))
    write_csv(rows, ["maturity_index", "segments_in", "segments_out"], stream=out)
    return 0


def cmd_mc_check(cfg, out):
    model = load_model(cfg.model) if cfg.model else _missing("model")
    s = model.slices[0]
    strikes = cfg.strikes or (model.x,)
    rows = []
    ok = True
    for k in strikes:
        est = simulate_nonhom_first_interval(model, k, n_paths=cfg.paths, n_steps=cfg.steps,
                                             seed=cfg.seed)
        closed = float(s.call_price(k)) if s.L <= k <= s.U else max(model.x - k, 0.0)
        diff = abs(est.price - closed)
        budget = 3 * est.std_error + EULER_BUDGET * (closed - max(model.x - k, 0.0))
        ok &= diff <= budget and martingale_gap(est, model.x) <= 3.0
        rows.append((k, est.price, est.std_error, closed, diff))
    write_csv(rows, ["strike", "price", "std_error", "closed_form", "abs_diff"], path=cfg.out,
              stream=None if cfg.out else out)
    return 0 if ok else 2


def cmd_plot_data(cfg, out):
    from .plotting import curve_table, render_svg

    if cfg.out is None:
        raise DataError("missing --out")
    model = load_model(cfg.model) if cfg.model else _missing("model")
    rows = curve_table(model, n=cfg.grid_n if cfg.grid_n != DEFAULT_NODES else 200)
    csv_path = _sibling(cfg.out, ".csv")
    write_csv(rows, ["maturity", "strike", "call", "implied_vol"], path=csv_path)
    render_svg(rows, _sibling(cfg.out, ".svg"), spot=model.x)
    return 0


COMMANDS = {
    "check": cmd_check,
    "feasify": cmd_feasify,
    "calibrate": cmd_calibrate,
    "price": cmd_price,
    "iv": cmd_iv,
    "coarsen": cmd_coarsen,
    "mc-check": cmd_mc_check,
    "plot-data": cmd_plot_data,
}


def build_parser():
    p = argparse.ArgumentParser(prog="lvg", description="Local variance gamma calibration")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--quotes")
    p.add_argument("--rates")
    p.add_argument("--dividends")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--spot", type=float)
    p.add_argument("--z", type=float)
    p.add_argument("--tstar", type=float)
    for i in range(1, 5):
        p.add_argument(f"--delta{i}", type=float, default=0.5)
    p.add_argument("--eps", type=float)
    p.add_argument("--grid-n", type=int, default=DEFAULT_NODES)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bounds", default=DEFAULT_BOUNDS)
    p.add_argument("--strikes", help="comma-separated strikes")
    p.add_argument("--payoff", default="call", choices=["call", "put"])
    p.add_argument("--bins", type=int, default=10)
    return p


def run(argv, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    ns = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(ns)
        return COMMANDS[cfg.command](cfg, out)
    except DataError as exc:
        err.write(f"error: {exc}\n")
        return exc.exit_code
    except ContractViolation as exc:
        err.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return exc.exit_code


def main(argv=None):
    sys.exit(run(sys.argv[1:] if argv is None else argv))
