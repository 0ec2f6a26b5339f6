import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbmc.drift import (BUILTIN_KINDS, DriftSpec, eval_mu, eval_mu_arrays,
                        load_drift_table_csv, validate_drift)
from hbmc.errors import OutOfTable
from hbmc.geometry import HyperbolicPoint


def test_eval_examples():
    assert eval_mu(DriftSpec(kind="zero", K0=1.0),
                   HyperbolicPoint(3.0, 5.0)) == 0.0
    assert eval_mu(DriftSpec(kind="linear_y", K0=1.0, c=0.5),
                   HyperbolicPoint(3.0, 2.0)) == pytest.approx(1.0)
    assert eval_mu(DriftSpec(kind="sine_x", K0=1.0, c=1.0),
                   HyperbolicPoint(math.pi / 2, 1.0)) == pytest.approx(1.0)
    assert eval_mu(DriftSpec(kind="tanh_x", K0=1.0, c=1.0),
                   HyperbolicPoint(0.0, 2.0)) == 0.0


@given(st.sampled_from([k for k in BUILTIN_KINDS if k != "zero"]),
       st.floats(-60, 60), st.floats(1e-3, 1e3),
       st.floats(0.05, 3.0), st.floats(-1.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_growth_bound_exact(kind, x, y, K0, frac):
    spec = DriftSpec(kind=kind, K0=K0, c=frac * K0)
    assert abs(eval_mu(spec, HyperbolicPoint(x, y))) <= K0 * y


def test_symmetries():
    sine = DriftSpec(kind="sine_x", K0=1.0, c=1.0)
    tanh = DriftSpec(kind="tanh_x", K0=1.0, c=1.0)
    lin = DriftSpec(kind="linear_y", K0=1.0, c=0.7)
    z = HyperbolicPoint(1.3, 2.0)
    zm = HyperbolicPoint(-1.3, 2.0)
    assert eval_mu(sine, z) == pytest.approx(-eval_mu(sine, zm))
    assert eval_mu(tanh, z) == pytest.approx(-eval_mu(tanh, zm))
    assert eval_mu(lin, z) == eval_mu(lin, zm)


def test_c_exceeding_K0_rejected():
    with pytest.raises(ValueError):
        DriftSpec(kind="sine_x", K0=1.0, c=1.5)
    with pytest.raises(ValueError):
        DriftSpec(kind="linear_y", K0=0.5, c=-0.7)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        DriftSpec(kind="quadratic", K0=1.0)


def test_config_dict_roundtrip():
    spec = DriftSpec(kind="sine_x", K0=2.0, c=1.5)
    assert DriftSpec.from_config_dict(spec.to_config_dict()) == spec


def test_validate_zero_passes():
    rep = validate_drift(DriftSpec(kind="zero", K0=1.0), (-5, 5, 0.1, 10),
                         samples=1024)
    assert rep.passed
    assert rep.max_growth_ratio == 0.0


def test_validate_equality_case_passes():
    rep = validate_drift(DriftSpec(kind="linear_y", K0=1.0, c=1.0),
                         (-5, 5, 0.1, 10), samples=1024)
    assert rep.passed
    assert rep.max_growth_ratio == pytest.approx(1.0)


def test_validate_planted_violation_fails():
    # table drift with mu = 2 K0 y at one node
    K0 = 1.0
    xg = (0.0, 1.0, 2.0)
    yg = (1.0, 2.0)
    vals = [0.0] * 6
    vals[3] = 2 * K0 * 2.0     # node (x=1, y=2): mu = 2 K0 y
    spec = DriftSpec(kind="table", K0=K0, x_grid=xg, y_grid=yg,
                     mu_values=tuple(vals))
    rep = validate_drift(spec, (0, 2, 1, 2), samples=4096)
    assert not rep.passed
    assert rep.max_growth_ratio > K0
    x_w, y_w, mu_w = rep.worst_sample
    assert abs(mu_w) / y_w == pytest.approx(rep.max_growth_ratio)


def test_table_out_of_hull():
    spec = DriftSpec(kind="table", K0=1.0, x_grid=(0.0, 1.0),
                     y_grid=(1.0, 2.0), mu_values=(0.0, 0.0, 0.0, 0.0))
    with pytest.raises(OutOfTable):
        eval_mu(spec, HyperbolicPoint(5.0, 1.5))


def test_csv_loader_roundtrip(tmp_path):
    path = tmp_path / "mu.csv"
    rows = ["x,y,mu"]
    for x in (0.0, 1.0):
        for y in (1.0, 2.0):
            rows.append(f"{x},{y},{0.25 * y}")
    path.write_text("\n".join(rows) + "\n")
    spec = load_drift_table_csv(str(path), K0=1.0)
    assert spec.kind == "table"
    assert eval_mu(spec, HyperbolicPoint(0.5, 1.5)) == pytest.approx(0.375)


def test_arrays_match_scalar():
    spec = DriftSpec(kind="tanh_x", K0=1.0, c=0.8)
    xs = np.linspace(-2, 2, 7)
    ys = np.linspace(0.5, 3.0, 7)
    arr = eval_mu_arrays(spec, xs, ys)
    for i in range(7):
        assert arr[i] == pytest.approx(
            eval_mu(spec, HyperbolicPoint(xs[i], ys[i])))
