import numpy as np
import pytest

from hbmc.geometry import HyperbolicPoint
from hbmc.kernels import kernel_ratio, mckean_p2, q2_density


def test_table_p2_matches_quadrature(table):
    rng = np.random.default_rng(1)
    ts = np.exp(rng.uniform(np.log(0.05), np.log(4.0), 20))
    rs = rng.uniform(0.01, 6.0, 20)
    tab = table.p2(ts, rs)
    for i in range(20):
        assert tab[i] == pytest.approx(mckean_p2(ts[i], rs[i]).value,
                                       rel=2e-6)


def test_table_ratio_matches_quadrature(table):
    rng = np.random.default_rng(2)
    ts = np.exp(rng.uniform(np.log(0.05), np.log(4.0), 20))
    rs = rng.uniform(0.05, 5.0, 20)
    tab = table.ratio(ts, rs)
    for i in range(20):
        assert tab[i] == pytest.approx(kernel_ratio(ts[i], rs[i]), rel=5e-6)


def test_table_small_time_extension(table):
    # below the table's t range rho follows the exact (1/t) r/sinh r scaling
    r = 1.0
    t_small = 2e-5
    lo = table.t_lo
    expected = table.ratio(lo, r) * lo / t_small
    assert table.ratio(t_small, r) == pytest.approx(float(expected), rel=1e-10)


def test_table_q2_density(table):
    z = HyperbolicPoint(0.0, 1.0)
    z2 = HyperbolicPoint(0.4, 1.7)
    from hbmc.geometry import hyperbolic_distance
    r = hyperbolic_distance(z, z2)
    assert float(table.q2_density(0.7, r, z2.y)) == pytest.approx(
        q2_density(0.7, z, z2), rel=2e-6)


def test_profile_matches_pointwise(table):
    t = 0.37
    r = np.linspace(0.0, 8.0, 57)
    p2_prof, rho_prof = table.profile(t, r)
    np.testing.assert_allclose(p2_prof, table.p2(np.full_like(r, t), r),
                               rtol=1e-7)
    # the profile path and the pointwise path interpolate in different
    # orders; they agree to ~1e-7 but not exactly
    np.testing.assert_allclose(rho_prof, table.ratio(np.full_like(r, t), r),
                               rtol=5e-7)


def test_table_vectorization_shape(table):
    t = np.full((3, 4), 0.5)
    r = np.linspace(0.1, 2.0, 12).reshape(3, 4)
    assert table.p2(t, r).shape == (3, 4)
    assert table.ratio(t, r).shape == (3, 4)
