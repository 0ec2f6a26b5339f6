import math

import numpy as np
import pytest

from hbmc.drift import DriftSpec
from hbmc.estimator import (PoissonClock, estimate_density, estimate_many,
                            sample_clock, second_moment_bound,
                            simulate_weighted_block, weighted_sample)
from hbmc.geometry import HyperbolicPoint
from hbmc.kernels import q2_density
from hbmc.payoffs import get_payoff
from hbmc.rng import RngStream

Z0 = HyperbolicPoint(0.0, 1.0)
ZERO = DriftSpec(kind="zero", K0=1.0)
LIN = DriftSpec(kind="linear_y", K0=1.0, c=0.5)
SINE = DriftSpec(kind="sine_x", K0=1.0, c=1.0)
ONE = get_payoff("one")
X = get_payoff("x")
COS_EXP = get_payoff("cos_exp")


def test_clock_invariants():
    gen = RngStream(0, 0).generator
    clock = sample_clock(1.0, 2.0, gen)
    assert clock.rate == 2.0 and clock.horizon == 1.0
    assert all(0 < e <= 1.0 for e in clock.events)
    assert list(clock.events) == sorted(clock.events)


def test_clock_validation():
    with pytest.raises(ValueError):
        PoissonClock(rate=1.0, horizon=1.0, events=(0.5, 0.2))
    with pytest.raises(ValueError):
        PoissonClock(rate=1.0, horizon=1.0, events=(1.5,))
    with pytest.raises(ValueError):
        sample_clock(1.0, 0.0, RngStream(0, 0).generator)


@pytest.mark.parametrize("t,rate", [(1.0, 1.0), (0.5, 2.0)])
def test_clock_statistics(t, rate):
    gen = RngStream(1, 0).generator
    counts = np.array([sample_clock(t, rate, gen).n_events
                       for _ in range(20000)])
    se = counts.std(ddof=1) / math.sqrt(counts.size)
    assert abs(counts.mean() - rate * t) <= 4 * se
    frac0 = np.mean(counts == 0)
    se0 = math.sqrt(frac0 * (1 - frac0) / counts.size)
    assert abs(frac0 - math.exp(-rate * t)) <= 4 * se0


def test_weighted_sample_zero_drift():
    for i in range(50):
        ws = weighted_sample(ZERO, 0.5, Z0, 1.0, RngStream(2, i))
        if ws.n_events == 0:
            assert ws.weight == pytest.approx(math.exp(0.5), rel=1e-14)
        else:
            assert ws.weight == 0.0


def test_weighted_sample_empty_clock_any_drift():
    for i in range(200):
        ws = weighted_sample(SINE, 0.25, Z0, 1.0, RngStream(3, i))
        if ws.n_events == 0:
            assert ws.weight == pytest.approx(math.exp(0.25), rel=1e-14)
            break
    else:
        pytest.fail("no empty clock in 200 draws (p ~ 1e-25)")


def test_weighted_sample_event_leg_validation():
    with pytest.raises(ValueError):
        weighted_sample(SINE, 0.25, Z0, 1.0, RngStream(0, 0),
                        event_leg="sideways")
    with pytest.raises(ValueError):
        simulate_weighted_block(SINE, 0.25, Z0, 1.0, 0, 0,
                                event_leg="sideways")


def test_driftless_normalization():
    res = estimate_many(ZERO, [ONE], 1.0, Z0, 50000, seed=4)[ONE.spec_string()]
    assert abs(res.mean - 1.0) <= 4 * res.std_error
    assert res.diagnostics["clamp_count"] == 0


def test_drifted_weight_normalization():
    res = estimate_many(LIN, [ONE], 0.5, Z0, 100000,
                        seed=5)[ONE.spec_string()]
    assert abs(res.mean - 1.0) <= 4 * res.std_error


def test_linear_drift_moment_identity():
    res = estimate_many(LIN, [X], 0.5, Z0, 100000, seed=6)[X.spec_string()]
    assert abs(res.mean - 0.25) <= 4 * res.std_error


def test_worker_invariance_bit_identical():
    kw = dict(t=0.5, z0=Z0, n_paths=40000, seed=7)
    serial = estimate_many(LIN, [X, ONE], **kw, workers=1)
    parallel = estimate_many(LIN, [X, ONE], **kw, workers=3)
    assert serial == parallel


def test_scalar_and_block_routes_agree():
    """The scalar reference path (exact quadrature kernels, per-path grids)
    and the vectorized block engine are independent implementations of the
    same estimator; their means must agree statistically."""
    t = 0.25
    n = 4000
    vals = []
    for i in range(n):
        ws = weighted_sample(SINE, t, Z0, 1.0, RngStream(8, i))
        vals.append(ws.weight * math.cos(ws.endpoint.x)
                    * math.exp(-ws.endpoint.y))
    vals = np.array(vals)
    se_s = vals.std(ddof=1) / math.sqrt(n)
    blk = estimate_many(SINE, [COS_EXP], t, Z0, 65536,
                        seed=9)[COS_EXP.spec_string()]
    z = (vals.mean() - blk.mean) / math.hypot(se_s, blk.std_error)
    assert abs(z) <= 4


def test_mirrored_pairing_is_biased():
    """Negative control for the leg-pairing convention: weighting the leg
    that *ends* at each event (instead of the leg it starts) shifts the
    estimate for x-dependent drifts.  Paired comparison on identical paths
    and clocks."""
    diffs = []
    for b in range(40):
        foll = simulate_weighted_block(SINE, 0.25, Z0, 1.0, 12, b)
        prec = simulate_weighted_block(SINE, 0.25, Z0, 1.0, 12, b,
                                       event_leg="preceding")
        assert np.array_equal(foll["x"], prec["x"])
        f = np.cos(foll["x"]) * np.exp(-foll["y"])
        diffs.append((prec["weight"] - foll["weight"]) * f)
    d = np.concatenate(diffs)
    se = d.std(ddof=1) / math.sqrt(d.size)
    assert d.mean() > 4 * se


def test_rate_invariance_small():
    a = estimate_many(LIN, [X], 0.5, Z0, 60000, rate=0.5,
                      seed=13)[X.spec_string()]
    b = estimate_many(LIN, [X], 0.5, Z0, 60000, rate=2.0,
                      seed=14)[X.spec_string()]
    z = (a.mean - b.mean) / math.hypot(a.std_error, b.std_error)
    assert abs(z) <= 4


def test_second_moment_bound_closed_form():
    # t=1, K0=1, rate=1, f_sup=1 -> exp(13/4)
    assert second_moment_bound(1.0, 1.0, 1.0, 1.0) == pytest.approx(
        math.exp(13.0 / 4.0), rel=1e-12)
    # K0 -> 0 limit: only the N=0 term survives, bound -> e^{lambda t}
    assert second_moment_bound(2.0, 1e-12, 1.0, 1.0) == pytest.approx(
        math.exp(2.0), rel=1e-9)
    with pytest.raises(ValueError):
        second_moment_bound(-1.0, 1.0, 1.0, 1.0)


def test_diagnostics_fields():
    res = estimate_many(SINE, [ONE], 0.25, Z0, 20000,
                        seed=15)[ONE.spec_string()]
    d = res.diagnostics
    for key in ("max_abs_weight", "mean_events", "max_abs_theta",
                "n_theta_over_claimed_bound", "n_payoff_over_cap",
                "clamp_count"):
        assert key in d
    assert d["clamp_count"] == 0
    assert d["mean_events"] == pytest.approx(0.25, abs=0.05)


def test_density_zero_drift_matches_kernel():
    x_edges = np.array([-0.6, -0.2, 0.2, 0.6])
    y_edges = np.array([0.6, 1.0, 1.4, 1.8])
    est = estimate_density(ZERO, 0.5, Z0, (x_edges, y_edges), 150000, seed=16)
    # compare against midpoint-rule cell averages of the exact density
    for i in range(3):
        for j in range(3):
            xm = 0.5 * (x_edges[i] + x_edges[i + 1])
            ym = 0.5 * (y_edges[j] + y_edges[j + 1])
            ref = q2_density(0.5, Z0, HyperbolicPoint(xm, ym))
            tol = 4 * est.std_error[i, j] + 0.05 * ref  # midpoint-rule slack
            assert abs(est.density[i, j] - ref) <= tol


def test_density_mass_and_areas():
    x_edges = np.linspace(-8.0, 8.0, 9)
    y_edges = np.concatenate([[1e-3], np.geomspace(0.05, 40.0, 12)])
    est = estimate_density(ZERO, 0.5, Z0, (x_edges, y_edges), 100000, seed=17)
    mass = float(np.sum(est.density * est.cell_areas()))
    se = float(np.sqrt(np.sum((est.std_error * est.cell_areas()) ** 2)))
    assert abs(mass - 1.0) <= 4 * se + 1e-3   # small tail outside the box
    assert est.counts.sum() <= 100000


def test_density_grid_validation():
    with pytest.raises(ValueError):
        estimate_density(ZERO, 0.5, Z0, (np.array([0.0, -1.0]),
                                         np.array([1.0, 2.0])), 1000)
