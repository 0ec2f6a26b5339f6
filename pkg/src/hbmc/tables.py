"""Fast vectorized kernel evaluation via precomputed spline tables.

The scalar quadrature routines in :mod:`hbmc.kernels` cost ~0.1 ms per
point, far too slow for 1e6-path Monte Carlo.  This module tabulates two
smooth scaled quantities on a (log t, r) grid and interpolates them with
bicubic splines:

* ``LJ = log J(t, r)`` where ``p_2 = prefactor(t) exp(-r^2/2t) J``; the
  explicit Gaussian and prefactor are kept analytic, so interpolated
  ``log p_2`` stays accurate even where p_2 underflows.
* ``log rho`` where ``rho = e^t 2 pi p_4 / p_2`` is the radial log-derivative
  ratio entering the drift weight.

Interpolation error is at the 1e-6..1e-7 level (checked against the direct
quadrature in the test suite), far below the Monte Carlo tolerances the fast
path feeds into.  Tables are deterministic, cached per process, and
optionally persisted to a cache directory.
"""

from __future__ import annotations

import hashlib
import math
import os
import threading

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RectBivariateSpline

_LOG_CUT = 50.0  # exp(-50) truncation of the scaled McKean integrand


def _log_j_gl(t, r, n_gl: int, nodes=None):
    """log of the scaled McKean integral J(t, r), fixed-order Gauss-Legendre.

    Broadcasts over t, r arrays. The integrand is smooth on [0, u_max] after
    the b = r + u^2 substitution, so fixed-order GL converges geometrically.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if nodes is None:
        x, w = leggauss(n_gl)
    else:
        x, w = nodes
    # map [-1, 1] -> [0, u_max]
    u2max = -r + np.sqrt(r * r + 2.0 * t * _LOG_CUT)
    umax = np.sqrt(np.maximum(u2max, 1e-14))
    u = 0.5 * (x[..., None, :] + 1.0) * umax[..., :, None]
    half = 0.5 * umax[..., :, None]
    tt = t[..., :, None]
    rr = r[..., :, None]
    uu2 = u * u
    b = rr + uu2
    den = 2.0 * np.sinh(rr + 0.5 * uu2) * np.sinh(0.5 * uu2)
    f = 2.0 * u * b * np.exp(-(2.0 * rr * uu2 + uu2 * uu2) / (2.0 * tt)) / np.sqrt(den)
    val = np.sum(f * w, axis=-1) * half[..., 0]
    return np.log(val)


class KernelTable:
    """Bicubic-spline tables for log p_2 and the p_4/p_2 ratio."""

    TABLE_VERSION = 1

    def __init__(self, t_lo: float = 1e-4, t_hi: float = 4.6, nt: int = 160,
                 r_hi: float = 15.0, nr: int = 140, n_gl: int = 160,
                 cache_dir: str | None = None):
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        self.r_hi = float(r_hi)
        self._u_lo = math.log(self.t_lo)
        self._u_hi = math.log(self.t_hi)
        u_grid = np.linspace(self._u_lo, self._u_hi, nt)
        # graded radial grid, denser near 0 where curvature is largest
        r_grid = r_hi * (np.arange(nr) / (nr - 1.0)) ** 1.5
        lj, logrho = self._load_or_build(u_grid, r_grid, n_gl, cache_dir)
        self._lj_spline = RectBivariateSpline(u_grid, r_grid, lj, kx=3, ky=3, s=0)
        self._logrho_spline = RectBivariateSpline(u_grid, r_grid, logrho, kx=3, ky=3, s=0)

    # -- construction --------------------------------------------------------

    def _cache_key(self, u_grid, r_grid, n_gl):
        h = hashlib.sha256()
        h.update(np.asarray([self.TABLE_VERSION, n_gl], dtype=float).tobytes())
        h.update(u_grid.tobytes())
        h.update(r_grid.tobytes())
        return h.hexdigest()[:16]

    def _load_or_build(self, u_grid, r_grid, n_gl, cache_dir):
        path = None
        if cache_dir is None:
            cache_dir = os.environ.get(
                "HBMC_CACHE_DIR",
                os.path.join(os.path.expanduser("~"), ".cache", "hbmc"))
        if cache_dir:
            path = os.path.join(cache_dir, f"ktab_{self._cache_key(u_grid, r_grid, n_gl)}.npz")
            if os.path.exists(path):
                with np.load(path) as d:
                    return d["lj"], d["logrho"]
        lj, logrho = self._build(u_grid, r_grid, n_gl)
        if path is not None:
            try:
                os.makedirs(cache_dir, exist_ok=True)
                tmp = path + f".tmp{os.getpid()}"
                np.savez(tmp, lj=lj, logrho=logrho)
                os.replace(tmp, path)
            except OSError:
                pass
        return lj, logrho

    @staticmethod
    def _build(u_grid, r_grid, n_gl):
        nodes = leggauss(n_gl)
        t = np.exp(u_grid)[:, None] + np.zeros((1, r_grid.size))
        r = r_grid[None, :] + np.zeros((u_grid.size, 1))
        lj = _log_j_gl(t, r, n_gl, nodes)
        # rho at grid nodes: (r/t - d/dr log J) / sinh r, central differences
        # on the even extension of log J; ratio is even and smooth in r, so
        # nodes below the difference step are evaluated at the step instead.
        r_eff = np.maximum(r, 1e-3)
        h = np.maximum(1e-3, 1e-3 * r_eff)
        lj_p = _log_j_gl(t, r_eff + h, n_gl, nodes)
        lj_m = _log_j_gl(t, np.abs(r_eff - h), n_gl, nodes)
        dlj = (lj_p - lj_m) / (2.0 * h)
        rho = (r_eff / t - dlj) / np.sinh(r_eff)
        return lj, np.log(np.maximum(rho, 1e-300))

    # -- queries -------------------------------------------------------------

    def log_p2(self, t, r):
        """log p_2(t, r), vectorized. t clipped to the table range; the
        analytic prefactor and Gaussian factor always use the true t."""
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        u = np.clip(np.log(np.maximum(t, 1e-300)), self._u_lo, self._u_hi)
        rc = np.clip(r, 0.0, self.r_hi)
        lj = self._lj_spline.ev(u, rc)
        log_pref = 0.5 * math.log(2.0) - t / 8.0 - 1.5 * np.log(2.0 * math.pi * t)
        return log_pref - r * r / (2.0 * t) + lj

    def p2(self, t, r):
        return np.exp(self.log_p2(t, r))

    def ratio(self, t, r):
        """rho = e^t 2 pi p_4 / p_2, vectorized.

        Below the table's t range the exact small-time scaling
        rho ~ (1/t) r/sinh(r) is used to extend the tabulated value.
        """
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        tc = np.clip(t, self.t_lo, self.t_hi)
        rc = np.clip(r, 0.0, self.r_hi)
        rho = np.exp(self._logrho_spline.ev(np.log(tc), rc))
        return np.where(t < self.t_lo, rho * self.t_lo / np.maximum(t, 1e-300), rho)

    def q2_density(self, t, r, y2):
        """Lebesgue transition density p_2(t, r) / y'^2, vectorized."""
        return np.exp(self.log_p2(t, r) - 2.0 * np.log(np.asarray(y2, dtype=float)))

    def profile(self, t: float, r):
        """(p_2, rho) at fixed scalar t for a large array of radii.

        Fast path for quadrature matrices: the smooth spline components are
        sampled once on a dense radial grid and linearly interpolated, while
        the stiff exact factors (Gaussian, prefactor, small-t rho scaling)
        are applied pointwise.  Agrees with log_p2 / ratio to the dense-grid
        interpolation error of the smooth parts (~1e-9).
        """
        t = float(t)
        r = np.asarray(r, dtype=float)
        u = min(max(math.log(max(t, 1e-300)), self._u_lo), self._u_hi)
        nodes = np.linspace(0.0, self.r_hi, 4097)
        lj_dense = self._lj_spline.ev(np.full(nodes.shape, u), nodes)
        lrho_dense = self._logrho_spline.ev(np.full(nodes.shape, u), nodes)
        rc = np.clip(r, 0.0, self.r_hi)
        lj = np.interp(rc, nodes, lj_dense)
        lrho = np.interp(rc, nodes, lrho_dense)
        log_pref = 0.5 * math.log(2.0) - t / 8.0 - 1.5 * math.log(2.0 * math.pi * t)
        p2 = np.exp(log_pref - r * r / (2.0 * t) + lj)
        rho = np.exp(lrho)
        if t < self.t_lo:
            rho *= self.t_lo / t
        return p2, rho


_default_table: KernelTable | None = None
_table_lock = threading.Lock()


def get_default_table() -> KernelTable:
    """Process-wide lazily built table with default parameters."""
    global _default_table
    if _default_table is None:
        with _table_lock:
            if _default_table is None:
                _default_table = KernelTable()
    return _default_table
