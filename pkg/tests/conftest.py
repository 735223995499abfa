import sys
import numpy as np
import pytest

from lvg.market_data import admissible_from_arrays
from lvg.numerics import black_scholes_call

SPOT = 1286.0
DAYS = (2, 7, 27, 47, 67)
VOLS = (0.22, 0.20, 0.19, 0.185, 0.18)
STRIKES = np.arange(1250.0, 1321.0, 10.0)


def bs_surface(spot=SPOT, days=DAYS, vols=VOLS, strikes=STRIKES, bounds=None):
    times = [d / 252.0 for d in days]
    prices = [np.array([black_scholes_call(spot, k, t, v) for k in strikes]) for t, v in zip(times, vols)]
    bounds = bounds or [(0.0, 2.0 * spot)] * len(days)
    return admissible_from_arrays(spot, times, [strikes] * len(days), prices, bounds, days)


@pytest.fixture(scope="session")
def surface():
    return bs_surface()


@pytest.fixture(scope="session")
def fit(surface):
    from lvg.smile_interp import interpolate_surface

    return interpolate_surface(surface)


@pytest.fixture(scope="session")
def model(fit):
    from lvg.surface import assemble_model

    return assemble_model(fit.slices, fit.times)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
