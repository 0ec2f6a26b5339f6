import math

import numpy as np
import pytest

from hbmc.drift import DriftSpec
from hbmc.errors import UnsupportedOrder
from hbmc.geometry import HyperbolicPoint, hyperbolic_distance
from hbmc.kernels import q2_density
from hbmc.parametrix import (ConvolutionQuadSpec, _spatial_grid,
                             density_parametrix, density_parametrix_grid,
                             geodesic_midpoint, h1, hn_convolution,
                             hn_majorant, remainder_bound)
from hbmc.theta import theta

Z0 = HyperbolicPoint(0.0, 1.0)
ZERO = DriftSpec(kind="zero", K0=1.0)
LIN05 = DriftSpec(kind="linear_y", K0=0.5, c=0.5)

COARSE = ConvolutionQuadSpec(n_time=8, n_x=24, n_y=24)


def test_h1_is_theta_times_density():
    t = 0.5
    z2 = HyperbolicPoint(0.3, 1.2)
    val = h1(LIN05, t, Z0, z2)
    ref = theta(LIN05, t, Z0, z2).value * q2_density(t, Z0, z2)
    assert val == pytest.approx(ref, rel=1e-12)


def test_h1_zero_drift():
    assert h1(ZERO, 0.5, Z0, HyperbolicPoint(0.3, 1.2)) == 0.0


def test_majorant_n1():
    q = 0.37
    assert hn_majorant(1, 2.0, 1.0, q) == pytest.approx(1.5 * q)


def test_majorant_series_sums_to_exponential():
    t, K0, q = 1.0, 1.0, 1.0
    total = sum(hn_majorant(n, t, K0, q) for n in range(1, 60))
    assert total == pytest.approx(1.5 * K0 * q * math.exp(1.5 * K0 * t),
                                  rel=1e-12)


def test_majorant_ratio_test():
    t, K0 = 1.0, 1.0
    vals = [hn_majorant(n, t, K0, 1.0) for n in range(1, 10)]
    for n in range(3, 9):   # decreasing once n > 3 K0 t / 2 + 1
        assert vals[n] < vals[n - 1]


def test_majorant_validation():
    with pytest.raises(ValueError):
        hn_majorant(0, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        hn_majorant(1, -1.0, 1.0, 1.0)


def test_hn_zero_drift():
    term = hn_convolution(ZERO, 2, 0.5, Z0, HyperbolicPoint(0.3, 1.0),
                          quad=COARSE)
    assert term.value == 0.0


def test_hn_order_validation():
    z2 = HyperbolicPoint(0.3, 1.0)
    with pytest.raises(ValueError):
        hn_convolution(LIN05, 1, 0.5, Z0, z2)
    with pytest.raises(UnsupportedOrder):
        hn_convolution(LIN05, 4, 0.5, Z0, z2)


def test_h2_within_majorant():
    z2 = HyperbolicPoint(0.3, 1.0)
    term = hn_convolution(LIN05, 2, 0.5, Z0, z2, quad=COARSE)
    assert term.n == 2
    assert abs(term.value) <= term.majorant * (1 + 1e-6)
    assert term.majorant == pytest.approx(
        hn_majorant(2, 0.5, LIN05.K0, q2_density(0.5, Z0, z2)), rel=1e-10)


def test_h2_quadratic_in_drift_scale():
    z2 = HyperbolicPoint(0.3, 1.0)
    quarter = DriftSpec(kind="linear_y", K0=0.5, c=0.25)
    a = hn_convolution(quarter, 2, 0.5, Z0, z2, quad=COARSE).value
    b = hn_convolution(LIN05, 2, 0.5, Z0, z2, quad=COARSE).value
    assert b == pytest.approx(4.0 * a, rel=1e-10)


def test_remainder_bound_tail_formula():
    # tail of q * (e^{at} - partial sum), a = 3K0/2
    t, K0, q = 0.5, 0.5, 2.0
    a = 1.5 * K0 * t
    expect = q * (math.exp(a) - 1.0 - a - a ** 2 / 2)
    assert remainder_bound(t, K0, 2, q) == pytest.approx(expect, rel=1e-12)


def test_density_zero_terms_is_driftless_density():
    z2 = HyperbolicPoint(0.25, 1.0)
    val, rem = density_parametrix(LIN05, 0.5, Z0, z2, 0)
    assert val == pytest.approx(q2_density(0.5, Z0, z2), rel=1e-10)
    assert rem > 0


def test_density_zero_drift_any_terms():
    z2 = HyperbolicPoint(0.25, 1.0)
    val, _ = density_parametrix(ZERO, 0.5, Z0, z2, 2, quad=COARSE)
    assert val == pytest.approx(q2_density(0.5, Z0, z2), rel=1e-8)


def test_density_remainder_small_at_small_K0t():
    # K0 t = 0.25, two terms: certified remainder under 2% of the value
    z2 = HyperbolicPoint(0.25, 1.0)
    val, rem = density_parametrix(LIN05, 0.5, Z0, z2, 2)
    assert val > 0
    assert rem < 0.02 * val


def test_density_grid_moment_identity(table):
    """First-moment identity: for mu = c y the drifted mean of x' is
    x0 + c y0 t; integrating x' against the one-term density must
    reproduce it (and the mass must stay 1) up to target-box truncation."""
    t = 0.5
    gx, gy, gw = _spatial_grid(Z0, t, ConvolutionQuadSpec(n_x=64, n_y=64,
                                                          box_sigmas=9.0))
    res = density_parametrix_grid(LIN05, t, Z0, gx, gy, 1)
    mass = float(np.sum(gw * res.values))
    moment = float(np.sum(gw * gx * res.values))
    assert mass == pytest.approx(1.0, abs=5e-3)
    assert moment == pytest.approx(LIN05.c * Z0.y * t, abs=7e-3)


def test_geodesic_midpoint_vertical():
    mid = geodesic_midpoint(HyperbolicPoint(0.0, 1.0),
                            HyperbolicPoint(0.0, math.e ** 2))
    assert mid.x == pytest.approx(0.0, abs=1e-12)
    assert mid.y == pytest.approx(math.e, rel=1e-10)


def test_geodesic_midpoint_equidistant():
    a = HyperbolicPoint(-0.7, 0.8)
    b = HyperbolicPoint(1.2, 2.1)
    mid = geodesic_midpoint(a, b)
    da = hyperbolic_distance(a, mid)
    db = hyperbolic_distance(mid, b)
    assert da == pytest.approx(db, rel=1e-8)
