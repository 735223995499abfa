import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lvg.errors import DegenerateDensity, NestingViolation, OutOfDomain
from lvg.piecewise_exp import LVGSlice
from lvg.smile_interp import interpolate_surface
from lvg.surface import (
    NonHomLVGModel,
    assemble_model,
    coarsen_coefficient,
    coarsen_slice,
    geodesic_integral,
    load_model,
    local_variance,
    save_model,
    single_smile_calibration,
)

from conftest import bs_surface

THREE_SEG = LVGSlice(np.array([0.0, 80.0, 100.0, 130.0, 250.0]), np.array([18.0, 25.0, 14.0, 30.0]), 2.0, 100.0)


def interior_points(s, n=500, avoid=()):
    g = np.linspace(s.L, s.U, n + 2)[1:-1]
    knots = np.concatenate([s.nu, np.asarray(avoid, dtype=float)])
    return g[np.min(np.abs(g[:, None] - knots[None, :]), axis=1) > 0]


def test_first_interval_coincides_with_slice_coefficient():
    m = assemble_model([THREE_SEG], [THREE_SEG.tstar])
    K = interior_points(THREE_SEG)
    np.testing.assert_allclose(local_variance(m, 1, K), THREE_SEG.local_sigma(K) ** 2, rtol=1e-13)


def test_first_interval_general_step():
    T1 = 0.7
    m = assemble_model([THREE_SEG], [T1])
    K = interior_points(THREE_SEG)
    expect = 2.0 / (T1 * THREE_SEG.z**2) * THREE_SEG.local_sigma(K) ** 2
    np.testing.assert_allclose(local_variance(m, 1, K), expect, rtol=1e-13)


def test_local_variance_domain():
    m = assemble_model([THREE_SEG], [0.5])
    with pytest.raises(OutOfDomain):
        local_variance(m, 1, THREE_SEG.L)
    with pytest.raises(ValueError):
        local_variance(m, 2, 50.0)


def test_right_limit_at_knot():
    m = assemble_model([THREE_SEG], [THREE_SEG.tstar])
    assert local_variance(m, 1, 80.0) == pytest.approx(25.0**2, rel=1e-13)


@pytest.fixture(scope="module")
def model100():
    d = bs_surface(spot=100.0, days=(126, 252, 378), vols=(0.25, 0.23, 0.22),
                   strikes=np.array([80.0, 90.0, 95.0, 105.0, 110.0, 120.0]), bounds=[(20.0, 250.0)] * 3)
    fit = interpolate_surface(d)
    return assemble_model(fit.slices, fit.times)


def test_second_interval_vs_finite_differences(model100):
    m = model100
    s2, s1 = m.slices[1], m.slices[0]
    h = 1e-3 * m.x
    K = interior_points(s2, 60)
    knots = np.concatenate([s1.nu, s2.nu])
    K = K[np.min(np.abs(K[:, None] - knots[None, :]), axis=1) > 2 * h]

    def second(hh):
        return (s2.call_price(K + hh) - 2 * s2.call_price(K) + s2.call_price(K - hh)) / hh**2

    # one Richardson step removes the O(h^2) term of the centred difference
    dd = (4 * second(h / 2) - second(h)) / 3
    fd = 2.0 / m.step_sizes[1] * (s2.call_price(K) - s1.call_price(K)) / dd
    np.testing.assert_allclose(local_variance(m, 2, K), fd, rtol=1e-6)


def test_pdde_identity_every_interval(model):
    for mi in range(1, model.n_intervals + 1):
        s = model.slices[mi - 1]
        K = interior_points(s, 500)
        prev = model.slices[mi - 2].call_price(K) if mi > 1 else np.maximum(model.x - K, 0)
        res = 0.5 * model.step_sizes[mi - 1] * local_variance(model, mi, K) * s.density(K) - (s.call_price(K) - prev)
        assert np.abs(res).max() <= 1e-9


def test_local_variance_positive_and_bounded(model):
    for mi in range(1, model.n_intervals + 1):
        a2 = local_variance(model, mi, interior_points(model.slices[mi - 1], 1000))
        assert np.all(a2 > 0) and np.all(np.isfinite(a2))


def test_dummy_knots_do_not_change_local_variance():
    s = THREE_SEG
    nu = np.insert(s.nu, 2, 90.0)
    sig = np.insert(s.sigma, 1, s.sigma[1])
    padded = LVGSlice(nu, sig, s.z, s.x)
    K = interior_points(s, 300, avoid=[90.0])
    a = local_variance(assemble_model([s], [0.4]), 1, K)
    b = local_variance(assemble_model([padded], [0.4]), 1, K)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_single_smile_round_trip():
    s = THREE_SEG
    a2 = single_smile_calibration(s.call_price, s.density, s.x, s.tstar)
    for j in range(len(s.sigma)):
        K = np.linspace(s.nu[j], s.nu[j + 1], 12)[1:-1]
        np.testing.assert_allclose(a2(K), s.sigma[j] ** 2, rtol=1e-8)
    # building the slice back from the recovered coefficient reproduces the curve
    mids = 0.5 * (s.nu[:-1] + s.nu[1:])
    rebuilt = LVGSlice(s.nu, np.sqrt(a2(mids)), s.z, s.x)
    K = np.linspace(s.L, s.U, 200)
    np.testing.assert_allclose(rebuilt.call_price(K), s.call_price(K), rtol=1e-10, atol=1e-12)


def test_single_smile_scaling():
    s = THREE_SEG
    a = single_smile_calibration(s.call_price, s.density, s.x, 0.3)
    b = single_smile_calibration(s.call_price, s.density, s.x, 0.6)
    assert b(95.0) == pytest.approx(a(95.0) / 2, rel=1e-15)


def test_single_smile_intrinsic_rejected():
    a2 = single_smile_calibration(lambda K: np.maximum(100.0 - K, 0.0), lambda K: np.zeros_like(K), 100.0, 0.5)
    with pytest.raises(DegenerateDensity):
        a2(np.array([90.0, 110.0]))


def test_coarsen_harmonic_mean():
    edges, out = coarsen_coefficient([0.0, 1.0, 2.0], [0.04, 0.09], [0.0, 2.0])
    assert out[0] == pytest.approx(2 / (1 / 0.04 + 1 / 0.09), rel=1e-15)


def test_coarsen_aligned_identity():
    knots = [0.0, 1.0, 2.5, 4.0]
    a2 = [0.1, 0.3, 0.2]
    _, out = coarsen_coefficient(knots, a2, knots)
    np.testing.assert_allclose(out, a2, rtol=1e-15)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_coarsen_preserves_geodesic_integral(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 40))
    knots = np.concatenate([[0.0], np.sort(rng.uniform(0, 10, n - 1)), [10.0]])
    knots = np.unique(knots)
    a2 = rng.uniform(0.01, 5.0, len(knots) - 1)
    bins = np.unique(np.concatenate([[0.0], np.sort(rng.uniform(0, 10, int(rng.integers(0, 8)))), [10.0]]))
    edges, out = coarsen_coefficient(knots, a2, bins)
    for b in range(len(edges) - 1):
        lo, hi = edges[b], edges[b + 1]
        assert (hi - lo) / out[b] == pytest.approx(geodesic_integral(knots, a2, lo, hi), rel=1e-12)
    # idempotent on its own output
    _, again = coarsen_coefficient(edges, out, edges)
    np.testing.assert_allclose(again, out, rtol=1e-15)


def test_coarsen_default_deciles():
    edges, out = coarsen_coefficient([0.0, 5.0, 10.0], [1.0, 4.0])
    assert len(edges) == 11 and len(out) == 10


def test_coarsen_slice():
    c = coarsen_slice(THREE_SEG, [0.0, 125.0, 250.0])
    assert list(c.nu) == [0.0, 125.0, 250.0]


def test_assemble_single_and_errors():
    m = assemble_model([THREE_SEG], [0.5])
    assert m.n_intervals == 1 and m.step_sizes == (0.5,)
    with pytest.raises(NestingViolation):
        assemble_model([THREE_SEG, THREE_SEG], [0.5, 0.4])
    narrow = LVGSlice(np.array([50.0, 200.0]), np.array([20.0]), 2.0, 100.0)
    with pytest.raises(NestingViolation):
        assemble_model([THREE_SEG, narrow], [0.5, 0.6])
    with pytest.raises(NestingViolation):
        assemble_model([THREE_SEG], [0.5, 0.6])


def test_assemble_rejects_non_dominating_slices():
    # the same slice twice: zero calendar spread means zero local variance
    with pytest.raises(NestingViolation):
        assemble_model([THREE_SEG, THREE_SEG], [0.5, 0.6])


def test_three_maturity_model(model100):
    assert model100.n_intervals == 3
    assert model100.step_sizes == pytest.approx((0.5, 0.5, 0.5))


def test_json_round_trip(model, tmp_path):
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    assert back.to_json() == model.to_json()
    d = json.loads(path.read_text())
    assert set(d) == {"z", "x", "maturities", "slices"}
    assert set(d["slices"][0]) == {"nu", "sigma", "L", "U"}
    K = np.linspace(1200, 1350, 7)
    np.testing.assert_array_equal(local_variance(back, 3, K), local_variance(model, 3, K))
    assert NonHomLVGModel.from_json(model.to_json()).maturities == model.maturities
