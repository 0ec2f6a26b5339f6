"""Heat kernels on hyperbolic space: McKean's integral on H^2, Milson's
radial-derivative recursion, and Gruet's oscillatory representation for
general dimension, plus the log-gradient ratio used by the drift weight.

All evaluators work with the kernel taken with respect to the Riemannian
volume form, p_n(t, r), r the geodesic distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad

from .errors import DegenerateRadius, NonConvergence, TimeTooSmall
from .geometry import HyperbolicPoint, hyperbolic_distance

_LN2 = math.log(2.0)

# r below which the radial-derivative recursion is refused (1/sinh(r) noise
# amplification); callers switch to the Gruet representation there.
MILSON_MIN_RADIUS = 1e-6


@dataclass(frozen=True)
class KernelConfig:
    """Quadrature and truncation parameters for kernel evaluation."""

    rel_tol: float = 1e-8
    b_max_factor: float = 8.0
    t_min: float = 0.05
    max_subdivisions: int = 200

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-3):
            raise ValueError(f"rel_tol must be in (0, 1e-3], got {self.rel_tol}")
        if self.t_min <= 0.0:
            raise ValueError(f"t_min must be positive, got {self.t_min}")
        if self.b_max_factor < 4.0:
            raise ValueError(f"b_max_factor must be >= 4, got {self.b_max_factor}")
        if self.max_subdivisions < 10:
            raise ValueError(f"max_subdivisions must be >= 10, got {self.max_subdivisions}")


DEFAULT_CONFIG = KernelConfig()


@dataclass(frozen=True)
class KernelValue:
    """A kernel evaluation p_n(t, r) with its arguments."""

    value: float
    t: float
    r: float
    n: int


def _check_tr(t: float, r: float):
    if t <= 0.0:
        raise ValueError(f"t must be positive, got {t}")
    if r < 0.0:
        raise ValueError(f"r must be nonnegative, got {r}")


def _mckean_prefactor(t: float) -> float:
    return math.sqrt(2.0) * math.exp(-t / 8.0) / (2.0 * math.pi * t) ** 1.5


def _b_max(t: float, r: float, cfg: KernelConfig) -> float:
    # Gaussian-envelope truncation: the integral tail beyond b_max is bounded
    # by t * exp(-b_max^2 / 2t), pushed below rel_tol by the log term.
    return r + cfg.b_max_factor * math.sqrt(t) + math.sqrt(2.0 * t * math.log(1.0 / cfg.rel_tol))


def _quad_checked(f, a: float, b: float, cfg: KernelConfig, epsabs=0.0, epsrel=None, points=None):
    epsrel = 0.1 * cfg.rel_tol if epsrel is None else epsrel
    out = quad(f, a, b, epsabs=epsabs, epsrel=epsrel,
               limit=cfg.max_subdivisions, full_output=1, points=points)
    val, err = out[0], out[1]
    if len(out) > 3:  # warning message present
        scale = max(abs(val), 1e-300)
        if err > 100.0 * epsrel * scale and err > epsabs:
            raise NonConvergence(
                f"adaptive quadrature failed on [{a}, {b}]: {out[3].splitlines()[0]}")
    return val


def mckean_p2(t: float, r: float, cfg: KernelConfig = DEFAULT_CONFIG) -> KernelValue:
    """McKean's kernel p_2 on H^2.

    The endpoint inverse-square-root singularity at b = r is removed by the
    substitution b = r + u^2; the difference cosh(b) - cosh(r) is evaluated
    as 2 sinh((b+r)/2) sinh((b-r)/2) to avoid cancellation near u = 0.
    """
    _check_tr(t, r)
    u_max = math.sqrt(_b_max(t, r, cfg) - r)

    def integrand(u):
        b = r + u * u
        den = 2.0 * math.sinh(0.5 * (b + r)) * math.sinh(0.5 * u * u)
        if den <= 0.0:
            return 0.0
        return 2.0 * u * b * math.exp(-b * b / (2.0 * t)) / math.sqrt(den)

    val = _quad_checked(integrand, 0.0, u_max, cfg)
    return KernelValue(value=_mckean_prefactor(t) * val, t=t, r=r, n=2)


# -- scaled McKean integral ---------------------------------------------------
#
# p_2(t, r) = prefactor(t) * exp(-r^2 / 2t) * J(t, r), with
# J = int_0^inf 2 u (r + u^2) exp(-(2 r u^2 + u^4) / 2t)
#        / sqrt(2 sinh(r + u^2/2) sinh(u^2/2)) du.
# J stays O(1)-representable where p_2 itself underflows, so log p_2 and its
# radial log-derivative remain computable for very small t.


def _j_u_max(t: float, r: float, log_cut: float) -> float:
    # solve 2 r u^2 + u^4 = 2 t * log_cut for u^2
    u2 = -r + math.sqrt(r * r + 2.0 * t * log_cut)
    return math.sqrt(max(u2, 1e-12))


@lru_cache(maxsize=200_000)
def _log_j_cached(t: float, r: float, rel_tol: float, max_subdivisions: int) -> float:
    cfg = KernelConfig(rel_tol=min(rel_tol, 1e-6), max_subdivisions=max_subdivisions)
    log_cut = math.log(1.0 / cfg.rel_tol) + 25.0
    u_max = _j_u_max(t, r, log_cut)

    def integrand(u):
        u2 = u * u
        b = r + u2
        den = 2.0 * math.sinh(0.5 * (b + r)) * math.sinh(0.5 * u2)
        if den <= 0.0:
            return 0.0
        return 2.0 * u * b * math.exp(-(2.0 * r * u2 + u2 * u2) / (2.0 * t)) / math.sqrt(den)

    val = _quad_checked(integrand, 0.0, u_max, cfg, epsrel=1e-11)
    if val <= 0.0:
        raise NonConvergence(f"scaled McKean integral nonpositive at t={t}, r={r}")
    return math.log(val)


def log_mckean_p2(t: float, r: float, cfg: KernelConfig = DEFAULT_CONFIG) -> float:
    """log p_2(t, r), stable down to very small t where p_2 underflows."""
    _check_tr(t, r)
    lj = _log_j_cached(t, r, cfg.rel_tol, cfg.max_subdivisions)
    return math.log(_mckean_prefactor(t)) - r * r / (2.0 * t) + lj


def _dr_log_j(t: float, r: float, cfg: KernelConfig) -> float:
    """d/dr of log J by Richardson-extrapolated central differences.

    log J is even in r (inherited from the evenness of log p_2 after the
    explicit -r^2/2t term is split off), which supplies values at negative
    offsets near r = 0.
    """
    def lj(rr):
        return _log_j_cached(t, abs(rr), cfg.rel_tol, cfg.max_subdivisions)

    h = max(1e-4, 1e-3 * r)
    d1 = (lj(r + h) - lj(r - h)) / (2.0 * h)
    d2 = (lj(r + 0.5 * h) - lj(r - 0.5 * h)) / h
    return (4.0 * d2 - d1) / 3.0


def kernel_ratio(t: float, r: float, cfg: KernelConfig = DEFAULT_CONFIG) -> float:
    """The radial ratio e^t * 2 pi * p_4(t, r) / p_2(t, r).

    Computed through the radial-derivative identity
    e^t 2 pi p_4 = -d/dr p_2 / sinh(r), i.e. as
    (r/t - d/dr log J) / sinh(r), which stays accurate for small t and
    extends smoothly (even in r) through r = 0.
    """
    _check_tr(t, r)
    r_eval = max(r, 1e-3)  # ratio is even and smooth in r; O(r^2) error
    num = r_eval / t - _dr_log_j(t, r_eval, cfg)
    return num / math.sinh(r_eval)


def milson_p4(t: float, r: float, cfg: KernelConfig = DEFAULT_CONFIG) -> KernelValue:
    """p_4 via Milson's recursion p_4 = -e^{-t} / (2 pi sinh r) * d/dr p_2.

    The radial derivative is taken on the McKean representation with
    Richardson-extrapolated central differences; the derivative of the
    explicit Gaussian factor is handled in log form so small-t evaluations
    do not lose accuracy to underflow.
    """
    _check_tr(t, r)
    if r < MILSON_MIN_RADIUS:
        raise DegenerateRadius(
            f"milson_p4 requires r >= {MILSON_MIN_RADIUS}; use gruet_pn(4, ...) at small r")
    p2 = math.exp(log_mckean_p2(t, r, cfg))
    dr_log_p2 = -r / t + _dr_log_j(t, r, cfg)
    val = -math.exp(-t) / (2.0 * math.pi * math.sinh(r)) * p2 * dr_log_p2
    return KernelValue(value=val, t=t, r=r, n=4)


# -- Gruet's oscillatory representation --------------------------------------


def _log_sinh(b: float) -> float:
    return b + math.log1p(-math.exp(-2.0 * b)) - _LN2


def _log_cosh(b: float) -> float:
    b = abs(b)
    return b + math.log1p(math.exp(-2.0 * b)) - _LN2


def gruet_pn(n: int, t: float, r: float, cfg: KernelConfig = DEFAULT_CONFIG) -> KernelValue:
    """p_n(t, r) for n >= 2 via Gruet's oscillatory integral.

    The integrand alternates with the sign of sin(pi b / t); the domain is
    partitioned at the zeros b = k t and the lobes are integrated separately
    and summed with compensated accumulation. The exponent, including the
    e^{pi^2/2t} growth, is assembled in log space and exponentiated per
    quadrature point.
    """
    if n < 2:
        raise ValueError(f"Gruet's formula needs n >= 2, got {n}")
    _check_tr(t, r)
    if t < cfg.t_min:
        raise TimeTooSmall(f"t={t} below t_min={cfg.t_min} for oscillatory quadrature")

    half_np1 = 0.5 * (n + 1)
    lcr = _log_cosh(r)
    pi_sq = math.pi * math.pi

    def integrand(b):
        if b <= 0.0:
            return 0.0
        s = math.sin(math.pi * b / t)
        if s == 0.0:
            return 0.0
        log_mag = ((pi_sq - b * b) / (2.0 * t) + _log_sinh(b)
                   - half_np1 * np.logaddexp(_log_cosh(b), lcr))
        return math.exp(log_mag) * s

    log_cut = math.log(1.0 / cfg.rel_tol) + 25.0
    # decay envelope exp(-b^2/2t + b): solve for the truncation point
    b_max = t + math.sqrt(t * t + pi_sq + 2.0 * t * log_cut) + cfg.b_max_factor * math.sqrt(t)
    n_lobes = int(math.ceil(b_max / t))

    lobes = []
    for k in range(n_lobes):
        a, b = k * t, (k + 1) * t
        lobes.append(_quad_checked(integrand, a, b, cfg, epsrel=1e-12))
    total = math.fsum(lobes)

    # Severe inter-lobe cancellation (small t, large r) can leave fewer
    # correct digits than rel_tol asks for; redo those points with enough
    # working precision to absorb the cancellation.
    lobe_scale = max(abs(v) for v in lobes) if lobes else 0.0
    if lobe_scale > 0.0 and abs(total) < 1e-5 * lobe_scale:
        total = _gruet_integral_mp(n, t, r, b_max, cfg)

    pref = (math.exp(-((n - 1) ** 2) * t / 8.0)
            / (math.pi * (2.0 * math.pi) ** (n / 2.0) * math.sqrt(t))
            * math.gamma(half_np1))
    return KernelValue(value=pref * total, t=t, r=r, n=n)


def _gruet_integral_mp(n: int, t: float, r: float, b_max: float, cfg: KernelConfig) -> float:
    import mpmath as mp

    digits_lost = max(0.0, (math.pi * math.pi / (2.0 * t)) / math.log(10.0))
    with mp.workdps(int(25 + digits_lost + math.log10(1.0 / cfg.rel_tol))):
        tt, rr = mp.mpf(t), mp.mpf(r)

        def f(b):
            return (mp.e ** ((mp.pi ** 2 - b * b) / (2 * tt)) * mp.sinh(b)
                    * mp.sin(mp.pi * b / tt)
                    / (mp.cosh(b) + mp.cosh(rr)) ** (mp.mpf(n + 1) / 2))

        pts = [k * tt for k in range(int(math.ceil(b_max / t)) + 1)]
        return float(mp.quad(f, pts))


# -- derived quantities ------------------------------------------------------


def grad_x_log_q2(t: float, z: HyperbolicPoint, z2: HyperbolicPoint,
                  cfg: KernelConfig = DEFAULT_CONFIG) -> float:
    """d/dx log q_2(t, z, z') in the first argument.

    Uses the closed identity d/dx q_2 = ((x - x') / (y y')) * (-e^t 2 pi p_4),
    so the returned value is ((x - x')/(y y')) * (-kernel_ratio); exactly 0
    when x = x'.
    """
    if t <= 0.0:
        raise ValueError(f"t must be positive, got {t}")
    if z.x == z2.x:
        return 0.0
    r = hyperbolic_distance(z, z2)
    rho = kernel_ratio(t, r, cfg)
    return (z.x - z2.x) / (z.y * z2.y) * (-rho)


def q2_density(t: float, z: HyperbolicPoint, z2: HyperbolicPoint,
               cfg: KernelConfig = DEFAULT_CONFIG) -> float:
    """Lebesgue transition density of driftless HBM: p_2(t, r(z, z')) / y'^2."""
    if t <= 0.0:
        raise ValueError(f"t must be positive, got {t}")
    r = hyperbolic_distance(z, z2)
    return mckean_p2(t, r, cfg).value / (z2.y * z2.y)
