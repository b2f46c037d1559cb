import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from crystalflow.grid import GridSpec, l1_norm
from crystalflow.mobility import (EXACT_SIGN, SMOOTHED_SIGN, MobilityConfig, MobilityOverflowError,
                                  MollifierSpec, bump, bump_derivative, bump_normalization,
                                  compute_mobility, reciprocal, sample_mollifier_derivative,
                                  sign_field)

# Independent pure-Python double sum with the normalizing constant from mpmath,
# sine data, n_x = 200, eps = 0.04, exact sign.
ORACLE_SINE_MOB_L1 = 5.273074911000762e28
ORACLE_SINE_MOB_INV_L1 = 5.273074911000762e28
# 1 / int_{-1}^{1} exp(-1/(1-x^2)) dx, mpmath at 30 digits
BUMP_C = 2.252283621043581


def test_normalization_constant():
    assert bump_normalization() == pytest.approx(BUMP_C, rel=1e-13)
    assert bump_normalization() == pytest.approx(2.25228, abs=1e-5)


def test_bump_support_and_derivative():
    x = np.array([-1.5, -1.0, 1.0, 2.0])
    assert np.all(bump(x) == 0) and np.all(bump_derivative(x) == 0)
    xs = np.linspace(-0.9, 0.9, 7)
    fd = (bump(xs + 1e-6) - bump(xs - 1e-6)) / 2e-6
    assert np.allclose(bump_derivative(xs), fd, rtol=1e-6, atol=1e-8)


def test_mollifier_spec_bounds():
    with pytest.raises(ValueError):
        MollifierSpec(np.pi)
    with pytest.raises(ValueError):
        MollifierSpec(0.0)
    with pytest.raises(ValueError):
        MobilityConfig.make(0.1, SMOOTHED_SIGN, slope=0.0)
    with pytest.raises(ValueError):
        MobilityConfig.make(0.1, "sign-ish")


@pytest.mark.parametrize("n,eps", [(200, 0.04), (64, 0.5), (33, 0.3)])
def test_kernel_mean_zero_and_odd(n, eps):
    g = GridSpec(n)
    k = sample_mollifier_derivative(MollifierSpec(eps), g)
    assert abs(g.dx * k.sum()) < 1e-12 * max(1.0, np.abs(k).sum() * g.dx)
    mirror = k[(-np.arange(n)) % n]
    # odd up to the mean correction, which shifts both sides by the same constant
    assert np.ptp((k + mirror)[1:]) < 1e-9 * np.abs(k).max()


def test_zero_profile_gives_unit_mobility():
    g = GridSpec(50)
    for variant in (EXACT_SIGN, SMOOTHED_SIGN):
        assert np.all(compute_mobility(np.zeros(50), g, MobilityConfig.make(0.3, variant)) == 1.0)


def test_constant_profile_gives_unit_mobility():
    g = GridSpec(40)
    M = compute_mobility(np.full(40, 2.5), g, MobilityConfig.make(0.4))
    assert np.all(M == 1.0)


def test_sine_mobility_matches_quadrature_oracle():
    g = GridSpec(200)
    M = compute_mobility(np.sin(g.x), g, MobilityConfig.make(0.04, EXACT_SIGN))
    assert l1_norm(M, g) == pytest.approx(ORACLE_SINE_MOB_L1, rel=1e-6)
    assert l1_norm(reciprocal(M), g) == pytest.approx(ORACLE_SINE_MOB_INV_L1, rel=1e-6)


def test_fft_path_matches_direct():
    g = GridSpec(200)
    cfg = MobilityConfig.make(0.1, SMOOTHED_SIGN)
    h = np.sin(g.x) + 0.3 * np.cos(3 * g.x)
    a = compute_mobility(h, g, cfg)
    b = compute_mobility(h, g, cfg, method="fft")
    assert np.allclose(a, b, rtol=1e-11)


def test_flat_region_sign_zero():
    g = GridSpec(8)
    h = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=float)
    assert np.all(sign_field(h, g, MobilityConfig.make(0.5)) == 0)


def test_overflow_reports_exponent():
    g = GridSpec(4000)
    with pytest.raises(MobilityOverflowError) as info:
        compute_mobility(np.sin(g.x), g, MobilityConfig.make(0.002), method="fft")
    assert info.value.max_exponent > 700


def test_reciprocal():
    assert np.all(reciprocal(np.ones(5)) == 1)
    M = np.random.default_rng(0).uniform(0.1, 10, 20)
    assert np.allclose(reciprocal(reciprocal(M)), M, rtol=1e-15)


profiles = st.integers(8, 48).flatmap(
    lambda n: arrays(np.float64, n, elements=st.floats(-3, 3, allow_nan=False)))


@given(profiles, st.sampled_from([EXACT_SIGN, SMOOTHED_SIGN]), st.floats(0.2, 1.0))
def test_odd_symmetry_and_positivity(h, variant, eps):
    g = GridSpec(h.size)
    cfg = MobilityConfig.make(eps, variant)
    try:
        M = compute_mobility(h, g, cfg)
        Mm = compute_mobility(-h, g, cfg)
    except MobilityOverflowError:
        return
    assert np.all(M > 0) and np.all(np.isfinite(M))
    assert np.allclose(M * Mm, 1.0, rtol=1e-12)


@given(st.integers(8, 40), st.floats(-5, 5))
def test_constants_stationary(n, c):
    g = GridSpec(n)
    assert np.all(compute_mobility(np.full(n, c), g, MobilityConfig.make(0.5, SMOOTHED_SIGN)) == 1.0)
