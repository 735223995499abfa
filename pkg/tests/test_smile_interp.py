import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import lvg.smile_interp as si
from lvg.errors import ContractViolation, DataError
from lvg.market_data import admissible_from_arrays, check_strict_admissibility
from lvg.numerics import black_scholes_call
from lvg.piecewise_exp import LVGSlice
from lvg.smile_interp import (
    Branch,
    Deltas,
    PrevCurve,
    crossing_y,
    extend_case_a,
    initial_derivative,
    insert_spot_strike,
    interpolate_slice,
    interpolate_surface,
    intersection_w,
    spot_derivative,
    target_derivative,
)
from lvg.piecewise_exp import grow_values


def bs_data(x, times, vols, strikes, bounds):
    prices = [np.array([black_scholes_call(x, k, t, v) for k in strikes]) for t, v in zip(times, vols)]
    return admissible_from_arrays(x, times, [strikes] * len(times), prices, [bounds] * len(times))


CASE_B = dict(x=100.0, times=[0.5, 0.9], vols=[0.18, 0.155], strikes=np.array([65.0, 92.5]),
              bounds=(50.0, 120.0))
CASE_B_DELTAS = Deltas(0.65, 0.75, 0.1, 0.4)


def random_surface(seed):
    rng = np.random.default_rng(seed)
    x = 100.0
    M = int(rng.integers(1, 5))
    T = np.sort(rng.choice(np.arange(1, 253), M, replace=False)) / 252.0
    vols = rng.uniform(0.1, 0.5, M)
    vols = np.sqrt(np.maximum.accumulate(vols**2 * T) * 1.02 ** np.arange(M) / T)
    N = int(rng.integers(2, 9))
    K = np.sort(rng.choice(np.arange(60.0, 141.0, 2.5), N, replace=False))
    lo = min(K[0], x) - rng.uniform(0.5, 40)
    hi = max(K[-1], x) + rng.uniform(0.5, 40)
    d = bs_data(x, T, vols, K, (lo, hi))
    deltas = Deltas(*rng.uniform(0.05, 0.95, 4))
    return d, deltas


# -- step 0 -------------------------------------------------------------------


def test_spot_already_strike_identity():
    K = np.array([0.0, 95.0, 100.0, 105.0, 300.0])
    C = np.array([100.0, 7.0, 3.5, 1.5, 0.0])
    K2, C2, ins = insert_spot_strike(K, C, 100.0, PrevCurve(None), 0.5)
    assert not ins and K2 is K and C2 is C


def test_spot_insertion_first_maturity():
    d = bs_data(100.0, [0.1], [0.2], np.array([90.0, 95.0, 102.0, 110.0]), (0.0, 300.0))
    K, C = d.augmented(0)
    K2, C2, ins = insert_spot_strike(K, C, 100.0, PrevCurve(None), 0.5)
    assert ins
    j = int(np.flatnonzero(K2 == 100.0)[0])
    chord = C[2] + (C[3] - C[2]) * (100 - 95) / (102 - 95)
    assert C2[j] == pytest.approx(0.5 * chord + 0.5 * C[3], rel=1e-15)
    rep = check_strict_admissibility(
        admissible_from_arrays(100.0, [0.1], [K2[1:-1]], [C2[1:-1]], [(0.0, 300.0)]))
    assert rep.ok


def test_spot_insertion_linear_limit():
    K = np.array([0.0, 95.0, 105.0, 300.0])
    C = np.array([100.0, 7.0, 1.5, 0.0])
    _, C2, _ = insert_spot_strike(K, C, 100.0, PrevCurve(None), 1 - 1e-15)
    assert C2[2] == pytest.approx(4.25, abs=1e-12)


def test_spot_insertion_convexity_fallback():
    # the plain blend would sit below the extension of the left chord and break
    # convexity at 99; the supporting line joins the lower bound instead
    K = np.array([0.0, 90.0, 99.0, 101.0, 300.0])
    C = np.array([100.0, 10.5, 2.0, 0.5, 0.0])
    assert check_strict_admissibility(
        admissible_from_arrays(100.0, [0.1], [K[1:-1]], [C[1:-1]], [(0.0, 300.0)])).ok
    plain = 0.5 * 1.25 + 0.5 * 0.5
    K2, C2, _ = insert_spot_strike(K, C, 100.0, PrevCurve(None), 0.5)
    support = 2.0 + (2.0 - 10.5) / 9.0
    assert C2[3] == pytest.approx(0.5 * 1.25 + 0.5 * support, rel=1e-15)
    assert C2[3] > plain
    assert si._locally_convex(K2, C2, 3)


# -- step 1 pieces --------------------------------------------------------------


def test_initial_derivative_first_maturity():
    assert initial_derivative(2.0, 90.0, 50.0, 0.0, 0.3) == pytest.approx(0.3 * 2.0 / 40.0)
    assert initial_derivative(2.0, 90.0, 50.0, 0.0, 1 - 1e-15) == pytest.approx(2.0 / 40.0)


def test_initial_derivative_generic_inequalities():
    prev = LVGSlice(np.array([50.0, 80.0, 150.0]), np.array([8.0, 12.0]), 4.0, 100.0)
    p = PrevCurve(prev)
    v1 = 1.3 * prev.time_value(70.0)
    B = initial_derivative(v1, 70.0, 50.0, p.right_deriv(50.0), 0.5)
    assert p.right_deriv(50.0) < B < v1 / (70.0 - 50.0)


def test_target_derivative_average_and_between():
    assert target_derivative(0.0, 1.0, 1.5, 0.0, 1.0, 2.0, 0.5) == pytest.approx(0.75)
    rng = np.random.default_rng(0)
    for _ in range(100):
        k = np.sort(rng.uniform(0, 10, 3))
        v = np.array([0.0, 1.0, 0.0]) + rng.uniform(0.1, 1.0)  # concave-cap: distinct chords
        b = target_derivative(*v, *k, rng.uniform(0.01, 0.99))
        fwd = (v[2] - v[1]) / (k[2] - k[1])
        bwd = (v[1] - v[0]) / (k[1] - k[0])
        assert min(fwd, bwd) < b < max(fwd, bwd)


def test_intersection_symmetric_midpoint():
    assert intersection_w(1.0, -0.5, 0.5, 0.0, 2.0, 1.0) == pytest.approx(1.0)


def test_intersection_outside_raises():
    with pytest.raises(ContractViolation):
        intersection_w(1.0, 0.5, 0.4, 0.0, 2.0, 1.0)


def test_crossing_no_previous():
    assert crossing_y(1.0, -0.1, 0.0, 3.0, PrevCurve(None)) == 3.0


def test_crossing_root_residual():
    prev = LVGSlice(np.array([50.0, 150.0]), np.array([10.0]), 3.0, 100.0)
    p = PrevCurve(prev)
    A = p(80.0) * 1.05
    B = p.right_deriv(80.0) * 0.3
    y = crossing_y(A, B, 80.0, 98.0, p)
    assert 80.0 < y < 98.0
    assert abs(p(y) - (A + B * (y - 80.0))) < 1e-10


def test_case_a_residuals_and_near_linear_limit():
    A, B, k_next, v_next = 1.0, 0.05, 2.0, 1.2
    chord = (v_next - A) / (k_next - 0.0)
    for B1 in (0.3, chord + 1e-6):
        br = extend_case_a(Branch([0.0], [], A, B), 0.0, k_next, v_next, B1, 1.5)
        assert abs(br.A - v_next) < 1e-10 and abs(br.B - B1) < 1e-8
        assert br.knots[-1] == k_next and len(br.sigmas) == 2
    # slope target barely above the chord: the second segment becomes very flat
    assert br.sigmas[1] > 100


def test_case_a_mirror_symmetry():
    # reflecting the data maps the branch onto the one built from the right end
    d = bs_data(100.0, [0.1], [0.25], np.array([90.0, 95.0, 100.0, 105.0, 110.0]), (40.0, 160.0))
    K, C = d.augmented(0)
    s = interpolate_slice(K, C, 100.0, None, Deltas(), 5.0)
    Kr = (200.0 - K)[::-1]
    Cr = (C - np.maximum(100.0 - K, 0))[::-1] + np.maximum(100.0 - Kr, 0)
    r = interpolate_slice(Kr, Cr, 100.0, None, Deltas(), 5.0)
    g = np.linspace(41, 159, 97)
    np.testing.assert_allclose(r.time_value(200.0 - g), s.time_value(g), rtol=1e-9, atol=1e-12)


def test_case_b_triggered_and_lemma_inequalities(monkeypatch):
    calls = []
    orig = si.extend_case_b

    def spy(br, start, y, k_next, prev, z):
        out = orig(br, start, y, k_next, prev, z)
        calls.append((y, k_next, prev, out.A, out.B))
        return out

    monkeypatch.setattr(si, "extend_case_b", spy)
    d = bs_data(**CASE_B)
    fit = interpolate_surface(d, CASE_B_DELTAS)
    assert calls
    for y, k_next, prev, A, B in calls:
        # tangent at y passes through the previous curve at k_next
        assert abs(A + B * (k_next - y) - prev(k_next)) < 1e-10
        # and stays above it in between
        g = np.linspace(y, k_next, 50)[1:-1]
        assert np.all(A + B * (g - y) > np.array([prev(k) for k in g]))
    for i, s in enumerate(fit.slices):
        np.testing.assert_allclose(s.call_price(fit.strikes[i]), fit.prices[i], atol=1e-9 * 100)


def test_case_b_never_for_first_maturity(monkeypatch):
    monkeypatch.setattr(si, "extend_case_b", lambda *a: pytest.fail("case b at first maturity"))
    d = bs_data(CASE_B["x"], CASE_B["times"][:1], CASE_B["vols"][:1], CASE_B["strikes"], CASE_B["bounds"])
    interpolate_surface(d, CASE_B_DELTAS)


# -- whole slices and surfaces --------------------------------------------------------


def test_three_strike_slice():
    d = bs_data(100.0, [0.1], [0.2], np.array([95.0, 100.0, 105.0]), (0.0, 300.0))
    K, C = d.augmented(0)
    s = interpolate_slice(K, C, 100.0, None, Deltas(), 2.0)
    assert np.abs(s.call_price(K) - C).max() < 1e-10
    assert s.n_interior_knots <= 3 * (3 + 2)


def test_spot_slope_jump_target():
    d = bs_data(100.0, [0.1], [0.2], np.array([95.0, 100.0, 105.0]), (0.0, 300.0))
    K, C = d.augmented(0)
    s = interpolate_slice(K, C, 100.0, None, Deltas(d4=0.3), 2.0)
    V = C - np.maximum(100.0 - K, 0)
    B1 = spot_derivative(V[1], V[2], V[3], 95.0, 100.0, 105.0, 0.3)
    assert s.left_state_at_spot()[1] == pytest.approx(B1, abs=1e-8)
    assert s.time_value_deriv(100.0) == pytest.approx(B1 - 1, abs=1e-8)


def test_inadmissible_input_rejected():
    d = admissible_from_arrays(100.0, [0.1], [[90.0, 100.0, 110.0]], [[12.0, 7.0, 2.0]], [(0.0, 300.0)])
    with pytest.raises(DataError):
        interpolate_surface(d)


def test_single_maturity_reduces_to_slice():
    d = bs_data(100.0, [0.1], [0.2], np.array([90.0, 100.0, 110.0]), (0.0, 300.0))
    fit = interpolate_surface(d, z=3.0)
    K, C = d.augmented(0)
    s = interpolate_slice(K, C, 100.0, None, Deltas(), 3.0)
    np.testing.assert_array_equal(fit.slices[0].nu, s.nu)
    np.testing.assert_array_equal(fit.slices[0].sigma, s.sigma)


def test_delta3_changes_knots_not_prices():
    d = bs_data(100.0, [0.05, 0.1, 0.2], [0.25, 0.22, 0.2], np.array([85.0, 95.0, 100.0, 108.0, 115.0]),
                (40.0, 180.0))
    a = interpolate_surface(d, Deltas(d3=0.2))
    b = interpolate_surface(d, Deltas(d3=0.8))
    assert not np.array_equal(a.slices[0].nu, b.slices[0].nu)
    for i in range(3):
        np.testing.assert_allclose(a.slices[i].call_price(a.strikes[i]), b.slices[i].call_price(b.strikes[i]),
                                   atol=1e-9 * 100)


def test_market_mask_marks_synthetic_rows(fit):
    for i in range(len(fit.slices)):
        m = fit.market_mask(i)
        assert m.sum() == 8 and not m[0] and not m[-1]


def _assert_surface_properties(d, fit):
    x = d.spot
    for i, s in enumerate(fit.slices):
        K, C = fit.strikes[i], fit.prices[i]
        assert np.abs(s.call_price(K) - C).max() <= 1e-9 * x
        vl, dl = s.left_state_at_spot()
        assert dl - s.time_value_deriv(x) == pytest.approx(1.0, abs=1e-10)
        assert s.n_interior_knots <= 3 * (len(d.strikes[i]) + 2)
        g = np.linspace(s.L, s.U, 1002)[1:-1]
        v = s.time_value(g)
        C_g = s.call_price(g)
        assert np.all(np.diff(C_g) < 0)
        if i:
            prev = fit.slices[i - 1]
            inside = (g > prev.L) & (g < prev.U)
            pv = np.zeros_like(g)
            pv[inside] = prev.time_value(g[inside])
            assert np.all(v > pv)
            if s.L == prev.L:
                assert s.time_value_deriv(s.L) > prev.time_value_deriv(prev.L)
        # below later market time values on their strikes
        for j in range(i + 1, len(fit.slices)):
            later = d.time_values(j)
            inside = (d.strikes[j] > s.L) & (d.strikes[j] < s.U)
            assert np.all(s.time_value(d.strikes[j][inside]) < later[inside])
        # analytic convexity: the time value is positive, so C'' = z^2 V / sigma^2 > 0
        assert np.all(s.density(g) > 0)


def test_acceptance_like_surface(surface, fit):
    _assert_surface_properties(surface, fit)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_admissible_surfaces(seed):
    d, deltas = random_surface(seed)
    if not check_strict_admissibility(d, margin=1e-9).ok:
        return
    fit = interpolate_surface(d, deltas)
    _assert_surface_properties(d, fit)


def test_deltas_validated():
    with pytest.raises(ValueError):
        Deltas(d2=1.0)


def test_grow_values_saturates():
    v, d = grow_values(1.0, 1.0, 1e-3, 10.0, 100.0)
    assert v == np.inf and d == np.inf
