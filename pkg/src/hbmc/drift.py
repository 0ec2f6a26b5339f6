"""Drift functions mu(x, y) for the drifted process, with the linear-growth
condition |mu(x, y)| <= K0 * y and validation machinery."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.stats import qmc

from .errors import ConfigError, OutOfTable
from .geometry import HyperbolicPoint

BUILTIN_KINDS = ("zero", "linear_y", "sine_x", "tanh_x")


@dataclass(frozen=True)
class DriftSpec:
    """A drift mu with its growth constant K0.

    kind:
        "zero"      mu = 0
        "linear_y"  mu = c * y
        "sine_x"    mu = c * y * sin(x)
        "tanh_x"    mu = c * y * tanh(x)
        "table"     bilinear interpolation of tabulated mu on a rectilinear
                    (x, y) grid
    For the builtin kinds |c| <= K0 guarantees |mu| <= K0 * y identically.
    """

    kind: str
    K0: float
    c: float = 0.0
    x_grid: tuple = field(default=(), repr=False)
    y_grid: tuple = field(default=(), repr=False)
    mu_values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.K0 <= 0.0:
            raise ValueError(f"K0 must be positive, got {self.K0}")
        if self.kind in BUILTIN_KINDS:
            if self.kind != "zero" and abs(self.c) > self.K0 * (1.0 + 1e-12):
                raise ValueError(f"|c|={abs(self.c)} exceeds K0={self.K0}")
        elif self.kind == "table":
            if not (self.x_grid and self.y_grid and self.mu_values):
                raise ValueError("table drift needs x_grid, y_grid and mu_values")
            if min(self.y_grid) <= 0.0:
                raise ValueError("table y grid must be strictly positive")
            if len(self.mu_values) != len(self.x_grid) * len(self.y_grid):
                raise ValueError("mu_values size does not match grid")
        else:
            raise ValueError(f"unknown drift kind {self.kind!r}")

    def _interpolator(self):
        xg = np.asarray(self.x_grid)
        yg = np.asarray(self.y_grid)
        vals = np.asarray(self.mu_values).reshape(xg.size, yg.size)
        return RegularGridInterpolator((xg, yg), vals, method="linear",
                                       bounds_error=True)

    def to_config_dict(self) -> dict:
        d = {"kind": self.kind, "K0": self.K0}
        if self.kind not in ("zero", "table"):
            d["c"] = self.c
        if self.kind == "table":
            d["x_grid"] = list(self.x_grid)
            d["y_grid"] = list(self.y_grid)
            d["mu_values"] = list(self.mu_values)
        return d

    @classmethod
    def from_config_dict(cls, d: dict) -> "DriftSpec":
        return cls(kind=d["kind"], K0=float(d["K0"]), c=float(d.get("c", 0.0)),
                   x_grid=tuple(d.get("x_grid", ())),
                   y_grid=tuple(d.get("y_grid", ())),
                   mu_values=tuple(d.get("mu_values", ())))


def eval_mu(spec: DriftSpec, z: HyperbolicPoint) -> float:
    return float(eval_mu_arrays(spec, z.x, z.y))


def eval_mu_arrays(spec: DriftSpec, x, y):
    """Vectorized drift evaluation."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if spec.kind == "zero":
        return np.zeros(np.broadcast(x, y).shape)
    if spec.kind == "linear_y":
        return spec.c * y + 0.0 * x
    if spec.kind == "sine_x":
        return spec.c * y * np.sin(x)
    if spec.kind == "tanh_x":
        return spec.c * y * np.tanh(x)
    # table
    interp = spec._interpolator()
    pts = np.stack([np.broadcast_to(x, np.broadcast(x, y).shape).ravel(),
                    np.broadcast_to(y, np.broadcast(x, y).shape).ravel()], axis=-1)
    try:
        out = interp(pts)
    except ValueError as exc:
        raise OutOfTable(f"drift table queried outside its grid hull: {exc}") from exc
    return out.reshape(np.broadcast(x, y).shape)


@dataclass(frozen=True)
class ValidationReport:
    """Sample-based check of the drift hypotheses on a box."""

    max_growth_ratio: float         # max |mu| / y over samples
    growth_ok: bool
    lipschitz_quotient: float       # empirical local Lipschitz estimate
    boundedness_sup: float          # max over x-probes of |mu| at fixed y
    worst_sample: tuple             # (x, y, mu) achieving max_growth_ratio
    n_samples: int

    @property
    def passed(self) -> bool:
        return self.growth_ok


def validate_drift(spec: DriftSpec, box: tuple, samples: int = 100_000,
                   rng_seed: int = 0) -> ValidationReport:
    """Quasi-random sweep of |mu(x,y)| <= K0 y plus Lipschitz/boundedness probes.

    box = (x_lo, x_hi, y_lo, y_hi) with y_lo > 0. Failures are reported in
    the flags, never raised.
    """
    x_lo, x_hi, y_lo, y_hi = map(float, box)
    if y_lo <= 0.0:
        raise ValueError("box must have y > 0")
    eng = qmc.Sobol(d=2, scramble=True, seed=rng_seed)
    pts = eng.random(int(samples))
    xs = x_lo + pts[:, 0] * (x_hi - x_lo)
    ys = y_lo + pts[:, 1] * (y_hi - y_lo)
    mu = eval_mu_arrays(spec, xs, ys)
    ratios = np.abs(mu) / ys
    i_worst = int(np.argmax(ratios))
    max_ratio = float(ratios[i_worst])
    growth_ok = max_ratio <= spec.K0 * (1.0 + 1e-12)

    # local Lipschitz quotient from perturbed pairs (Euclidean metric)
    h = 1e-4 * min(x_hi - x_lo, y_hi - y_lo, 1.0)
    sub = slice(0, min(int(samples), 4096))
    mu2 = eval_mu_arrays(spec, np.clip(xs[sub] + h, x_lo, x_hi),
                         np.clip(ys[sub] + h, y_lo, y_hi))
    dx = np.clip(xs[sub] + h, x_lo, x_hi) - xs[sub]
    dy = np.clip(ys[sub] + h, y_lo, y_hi) - ys[sub]
    dist = np.sqrt(dx * dx + dy * dy)
    ok = dist > 0
    lip = float(np.max(np.abs(mu2[ok] - mu[sub][ok]) / dist[ok])) if np.any(ok) else 0.0

    # boundedness in x at a few fixed heights
    probe_y = np.linspace(y_lo, y_hi, 5)
    probe_x = np.linspace(x_lo, x_hi, 401)
    bx, by = np.meshgrid(probe_x, probe_y)
    bsup = float(np.max(np.abs(eval_mu_arrays(spec, bx, by))))

    return ValidationReport(
        max_growth_ratio=max_ratio, growth_ok=growth_ok,
        lipschitz_quotient=lip, boundedness_sup=bsup,
        worst_sample=(float(xs[i_worst]), float(ys[i_worst]), float(mu[i_worst])),
        n_samples=int(samples))


def load_drift_table_csv(path: str, K0: float) -> DriftSpec:
    """Build a table drift from a CSV with columns x, y, mu on a rectilinear grid."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"x", "y", "mu"} <= set(reader.fieldnames):
            raise ConfigError(f"drift CSV {path} must have columns x,y,mu")
        for rec in reader:
            rows.append((float(rec["x"]), float(rec["y"]), float(rec["mu"])))
    if not rows:
        raise ConfigError(f"drift CSV {path} is empty")
    xs = sorted({r[0] for r in rows})
    ys = sorted({r[1] for r in rows})
    if len(rows) != len(xs) * len(ys):
        raise ConfigError(f"drift CSV {path} is not a full rectilinear grid")
    lut = {(r[0], r[1]): r[2] for r in rows}
    vals = [lut[(x, y)] for x in xs for y in ys]
    return DriftSpec(kind="table", K0=K0, x_grid=tuple(xs), y_grid=tuple(ys),
                     mu_values=tuple(vals))
