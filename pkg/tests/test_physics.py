from fractions import Fraction

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tpcnet.physics import (
    alpha_from_rho,
    compose_reflected,
    exact_km_reflected,
    make_degraded_pairs,
    make_synthetic_scene,
    recover_reflectivity,
    split_illumination,
)


def field(value, shape=(1, 4, 4)):
    return np.full(shape, value, dtype=np.float64)


def test_alpha_from_rho_values():
    assert np.all(alpha_from_rho(field(0.0)) == 1.0)
    assert np.all(alpha_from_rho(field(0.25)) == 0.5)


@pytest.mark.parametrize("bad", [0.5, 0.7, -0.01])
def test_alpha_from_rho_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        alpha_from_rho(field(bad))


def test_exact_km_scalar():
    E = exact_km_reflected(field(1.0, (1, 1, 1)), field(0.1, (1, 1, 1)), field(0.5, (1, 1, 1)))
    assert E.item() == pytest.approx(0.505, abs=1e-15)


def test_exact_km_lambertian_is_retinex():
    rng = np.random.default_rng(1)
    e, R = rng.uniform(0.5, 2, (3, 5, 5)), rng.uniform(0, 1, (3, 5, 5))
    np.testing.assert_array_equal(exact_km_reflected(e, np.zeros((1, 5, 5)), R), e * R)


@given(st.floats(0, 0.49), st.floats(0.1, 10))
def test_exact_km_white_material(rho, e):
    E = exact_km_reflected(field(e, (1, 1, 1)), field(rho, (1, 1, 1)), field(1.0, (1, 1, 1)))
    assert E.item() == pytest.approx(e * (1 - rho + rho * rho), rel=1e-12)


def test_compose_reflected_scalar_and_limits():
    one = (1, 1, 1)
    E = compose_reflected(field(2.0, one), field(0.5, one), field(0.3, one))
    assert E.item() == pytest.approx(0.8, abs=1e-15)
    rng = np.random.default_rng(2)
    e, R = rng.uniform(0.5, 2, (3, 6, 6)), rng.uniform(0, 1, (3, 6, 6))
    assert np.max(np.abs(compose_reflected(e, np.ones((1, 6, 6)), R) - e * R)) < 1e-12
    a = rng.uniform(0, 1, (1, 6, 6))
    np.testing.assert_allclose(compose_reflected(e, a, np.ones_like(e)), e * (1 + a) / 2, rtol=1e-14)


def test_shape_mismatch_rejected():
    e = np.ones((3, 4, 4))
    with pytest.raises(ValueError):
        compose_reflected(e, np.ones((1, 4, 5)), e)
    with pytest.raises(ValueError):
        exact_km_reflected(e, np.zeros((1, 4, 4)), np.ones((3, 4, 5)))
    with pytest.raises(ValueError):
        split_illumination(e, np.ones((3, 4, 4)))


def test_split_illumination_scalar():
    pair = split_illumination(field(1.0, (1, 1, 1)), field(0.25, (1, 1, 1)))
    assert pair.L.item() == 0.25 and pair.L_bar.item() == 0.75


def test_split_illumination_matches_elementwise_oracle():
    rng = np.random.default_rng(7)
    e = rng.uniform(0.5, 2.0, (3, 8, 8))
    a = rng.uniform(0, 1, (1, 8, 8))
    pair = split_illumination(e, a)
    for c in range(3):
        for i in range(8):
            for j in range(8):
                assert pair.L[c, i, j] == pytest.approx(a[0, i, j] * e[c, i, j], rel=1e-15)
                assert pair.L_bar[c, i, j] == pytest.approx((1 - a[0, i, j]) * e[c, i, j], rel=1e-14)


@settings(max_examples=200)
@given(
    arrays(np.float64, (3, 4, 4), elements=st.floats(-1e6, 1e6, allow_subnormal=False)),
    arrays(np.float64, (1, 4, 4), elements=st.floats(0, 1)),
)
def test_split_illumination_sum_is_bit_exact(e, a):
    pair = split_illumination(e, a)
    assert np.all(pair.L + pair.L_bar - e == 0)


@pytest.mark.parametrize("dtype", [torch.float32, torch.float64])
def test_split_illumination_bit_exact_torch(dtype):
    g = torch.Generator().manual_seed(0)
    e = torch.randn(4, 8, 32, 32, generator=g, dtype=dtype) * 5
    a = torch.rand(4, 1, 32, 32, generator=g, dtype=dtype)
    pair = split_illumination(e, a)
    assert torch.count_nonzero(pair.L + pair.L_bar - e) == 0


def test_recover_reflectivity_cases():
    one = (1, 1, 1)
    E = compose_reflected(field(2.0, one), field(0.5, one), field(0.3, one))
    pair = split_illumination(field(2.0, one), field(0.5, one))
    assert pair.L_bar.item() == 1.0 and pair.L.item() == 1.0
    R = recover_reflectivity(E, pair.L_bar, 1 / pair.L)
    assert R.item() == pytest.approx(0.3, abs=1e-15)

    L_bar = np.random.default_rng(3).uniform(0, 2, (3, 4, 4))
    assert np.all(recover_reflectivity(L_bar / 2, L_bar, np.full_like(L_bar, 7.0)) == 0)


@pytest.mark.parametrize("seed", range(5))
def test_round_trip_double(seed):
    sc = make_synthetic_scene(seed, 3, 16, 16)
    pair = split_illumination(sc.e, sc.alpha)
    R = recover_reflectivity(sc.E_approx, pair.L_bar, 1 / pair.L)
    assert np.max(np.abs(R - sc.R)) < 1e-9


def test_round_trip_single():
    sc = make_synthetic_scene(11, 3, 16, 16)
    e, a, R0 = (torch.tensor(x, dtype=torch.float32) for x in (sc.e, sc.alpha, sc.R))
    E = compose_reflected(e, a, R0)
    pair = split_illumination(e, a)
    assert pair.L.min() >= 1e-3
    R = recover_reflectivity(E, pair.L_bar, 1 / pair.L)
    assert (R - R0).abs().max() < 1e-5


def test_scene_is_deterministic_and_valid():
    a, b = make_synthetic_scene(0, 3, 8, 8), make_synthetic_scene(0, 3, 8, 8)
    for name in ("e", "rho_f", "alpha", "R", "E_exact", "E_approx"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.e.shape == a.R.shape == a.E_exact.shape == (3, 8, 8)
    assert a.rho_f.shape == a.alpha.shape == (1, 8, 8)
    assert a.e.min() >= 0.5 and a.e.max() <= 2.0
    assert a.rho_f.min() >= 0 and a.rho_f.max() <= 0.2
    assert a.R.min() >= 0 and a.R.max() <= 1
    np.testing.assert_array_equal(a.alpha, 1 - 2 * a.rho_f)


def test_truncation_error_is_exactly_the_dropped_term():
    # in exact arithmetic on the stored floats, E_exact - E_approx == rho^2 e R
    sc = make_synthetic_scene(5, 2, 3, 3)
    for idx in np.ndindex(sc.e.shape):
        e, R = Fraction(sc.e[idx]), Fraction(sc.R[idx])
        rho = Fraction(sc.rho_f[(0,) + idx[1:]])
        a = 1 - 2 * rho
        exact = e * ((1 - rho) ** 2 * R + rho)
        approx = a * e * R + (1 - a) * e / 2
        assert exact - approx == rho * rho * e * R


@pytest.mark.parametrize("seed", range(10))
def test_truncation_bound_floating_point(seed):
    sc = make_synthetic_scene(seed, 3, 16, 16)
    diff = np.abs(sc.E_exact - sc.E_approx)
    bound = sc.rho_f**2 * sc.e * sc.R
    slack = 8 * np.finfo(np.float64).eps * (np.abs(sc.E_exact) + np.abs(sc.E_approx))
    assert np.all(diff <= bound + slack)


def test_degraded_pairs_are_darker():
    pairs = make_degraded_pairs(0, 3, 16, 16)
    for low, high in pairs:
        assert low.shape == high.shape == (3, 16, 16)
        assert low.dtype == np.float32
        assert low.mean() < 0.5 * high.mean()
        assert 0 <= low.min() and high.max() <= 1
