import numpy as np
import pytest
from scipy.integrate import quad

from crystalflow.grid import GridSpec
from crystalflow.initial import KINDS, initial_profile, raw_profile


def test_sine_n4():
    h = initial_profile("sine", GridSpec(4))
    assert np.allclose(h, [0, 1, 0, -1], atol=1e-15)


def test_jump_values():
    assert raw_profile("jump", np.array([3 * np.pi / 4]))[0] == pytest.approx(-1.0)
    assert raw_profile("jump", np.array([np.pi / 2]))[0] == pytest.approx(0.0, abs=1e-15)
    assert raw_profile("jump", np.array([3 * np.pi / 2]))[0] == 0.0
    mean_c = quad(lambda x: raw_profile("jump", np.array([x]))[0], 0, 2 * np.pi,
                  points=[np.pi / 2, 3 * np.pi / 2])[0] / (2 * np.pi)
    assert abs(mean_c) < 1e-12
    g = GridSpec(256)
    assert abs(raw_profile("jump", g.x).mean()) < 2 * g.dx


def test_facet_plateau_after_mean_subtraction():
    mean_c = quad(lambda x: raw_profile("facet", np.array([x]))[0], 0, 2 * np.pi,
                  points=[np.pi / 2, 3 * np.pi / 4, 5 * np.pi / 4, 3 * np.pi / 2])[0] / (2 * np.pi)
    assert mean_c == pytest.approx((1 + np.pi / 2) / (2 * np.pi), rel=1e-10)
    assert 1 - mean_c == pytest.approx(0.59085, abs=1e-5)
    g = GridSpec(4096)
    h = initial_profile("facet", g)
    plateau = h[(g.x >= 3 * np.pi / 4) & (g.x < 5 * np.pi / 4)]
    assert np.ptp(plateau) == 0
    assert plateau[0] == pytest.approx(1 - mean_c, abs=2 * g.dx)


def test_left_closed_boundaries():
    x = np.array([np.pi / 2, 3 * np.pi / 4, 5 * np.pi / 4])
    assert np.allclose(raw_profile("facet", x), [0.0, 1.0, 1.0], atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("n", [4, 7, 200, 513])
def test_mean_zero(kind, n):
    assert abs(initial_profile(kind, GridSpec(n)).mean()) < 1e-12


def test_unknown_kind():
    with pytest.raises(ValueError):
        initial_profile("cosine", GridSpec(8))
