"""Poisson-clock unbiased Monte Carlo estimator for the drifted process.

The estimator realizes E[f(Z^mu_t)] as
    e^{lambda t} lambda^{-N} E[ prod_i theta(T_{i+1} - T_i, Z^0_{T_i},
    Z^0_{T_{i+1}}) f(Z^0_t) ],   T_{N+1} := t,
with T_i the events of a rate-lambda Poisson clock on (0, t], N their count,
and Z^0 driftless hyperbolic Brownian motion.  Each clock event starts a
weighted leg that ends at the next event (or at t); the initial leg
(0, T_1] carries no weight.  This pairing is forced by the Duhamel series
q2 + q2 * h1 + q2 * h1 * h1 + ... for the drifted density, whose unweighted
driftless kernel sits at the *start* of the chain: the mirrored pairing
(each event ending a weighted leg, final leg free) corresponds to the chain
with q2 moved to the end, and since mu d/dx does not commute with the
driftless semigroup the two differ whenever mu depends on x.  The mirrored
form is measurably biased (~3% for a sine-in-x drift at t = 0.25 against
both the Euler oracle and the parametrix series); it remains available as
event_leg="preceding" for negative-control tests.

At lambda = 1 the weight reduces to e^t times the plain product of drift
weights.  General lambda is an importance-sampling reweighting of the jump
times (a variance knob) that leaves the mean invariant.

Paths are processed in fixed-size blocks; block b draws only from the
counter-based stream (seed, b), and block partials are reduced in block
order, so estimates are bit-identical regardless of worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .drift import DriftSpec, eval_mu_arrays
from .geometry import HyperbolicPoint, hyperbolic_distance_arrays
from .kernels import DEFAULT_CONFIG, KernelConfig
from .payoffs import Payoff
from .rng import RngStream, as_generator
from .simulate import DEFAULT_SUBSTEPS_PER_UNIT, sample_hbm_grid
from .tables import get_default_table
from .theta import theta, theta_bound

MAX_CLOCK_EVENTS = 30       # Poisson(<=4) tail beyond this is ~1e-24
DEFAULT_BLOCK_SIZE = 16384
_SWEEP_CHUNK = 256          # fixed column chunk; part of the draw contract


@dataclass(frozen=True)
class PoissonClock:
    """Sorted event times of a rate-lambda Poisson process on (0, horizon]."""

    rate: float
    horizon: float
    events: tuple

    def __post_init__(self):
        if self.rate <= 0.0 or self.horizon <= 0.0:
            raise ValueError("rate and horizon must be positive")
        ev = self.events
        if any(not (0.0 < e <= self.horizon) for e in ev):
            raise ValueError("events must lie in (0, horizon]")
        if any(b <= a for a, b in zip(ev, ev[1:])):
            raise ValueError("events must be strictly increasing")

    @property
    def n_events(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class WeightedSample:
    weight: float
    endpoint: HyperbolicPoint
    n_events: int
    clock: PoissonClock


@dataclass(frozen=True)
class EstimateResult:
    mean: float
    std_error: float
    n_paths: int
    seed: int
    diagnostics: dict


def sample_clock(t: float, rate: float, rng) -> PoissonClock:
    """Clock events by cumulative exponential(rate) interarrivals, truncated at t."""
    if t <= 0.0 or rate <= 0.0:
        raise ValueError("t and rate must be positive")
    gen = as_generator(rng)
    events = []
    acc = 0.0
    while True:
        acc += gen.exponential(1.0 / rate)
        if acc > t:
            break
        events.append(acc)
    return PoissonClock(rate=rate, horizon=t, events=tuple(events))


def weighted_sample(spec: DriftSpec, t: float, z0: HyperbolicPoint, rate: float,
                    rng, cfg: KernelConfig = DEFAULT_CONFIG,
                    substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT,
                    event_leg: str = "following") -> WeightedSample:
    """One weighted path sample (scalar reference path; see estimate_* for the
    vectorized engine).

    event_leg="following" (default) weights the leg from each clock event to
    the next event or to t; "preceding" is the mirrored, biased pairing kept
    only for negative-control tests (see module docstring).
    """
    if event_leg not in ("following", "preceding"):
        raise ValueError(f"unknown event_leg {event_leg!r}")
    clock = sample_clock(t, rate, rng)
    times = list(clock.events) + [t]
    grid = sample_hbm_grid(z0, times, rng, substeps_per_unit=substeps_per_unit)
    w = math.exp(rate * t) * rate ** (-clock.n_events)
    if event_leg == "following":
        leg_times = list(clock.events) + [t]
        for i, ev in enumerate(clock.events):
            a = grid.points[i]
            b = grid.points[i + 1]
            w *= theta(spec, leg_times[i + 1] - ev, a, b, cfg).value
    else:
        prev = z0
        for i, ev in enumerate(clock.events):
            gap = ev - (clock.events[i - 1] if i > 0 else 0.0)
            cur = grid.points[i]
            w *= theta(spec, gap, prev, cur, cfg).value
            prev = cur
    return WeightedSample(weight=w, endpoint=grid.points[-1],
                          n_events=clock.n_events, clock=clock)


def second_moment_bound(t: float, K0: float, rate: float, f_sup: float) -> float:
    """Closed-form ceiling f_sup^2 e^{2 lambda t} E[(3K0/2lambda)^{2N}]
    implied by the claimed |theta| <= 3K0/2; at lambda=1 this is
    f_sup^2 exp(t (1 + 9 K0^2 / 4)).  The theta ceiling itself does not
    hold (see hbmc.theta), so this is a reference quantity, not a
    guaranteed bound."""
    if t <= 0.0 or K0 <= 0.0 or rate <= 0.0 or f_sup <= 0.0:
        raise ValueError("all arguments must be positive")
    q = (1.5 * K0 / rate) ** 2
    return f_sup ** 2 * math.exp(2.0 * rate * t + rate * t * (q - 1.0))


# -- vectorized block engine -------------------------------------------------


def simulate_weighted_block(spec: DriftSpec, t: float, z0: HyperbolicPoint,
                            rate: float, seed: int, block_id: int,
                            block_size: int = DEFAULT_BLOCK_SIZE,
                            substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT,
                            table=None, event_leg: str = "following") -> dict:
    """Simulate one block of weighted samples.

    Returns arrays: weight, x, y (endpoints), n_events, plus theta
    diagnostics.  Clock events are merged into the uniform substep grid per
    path; Y advances exactly, X by left-point substeps; the drift weights
    couple each event point to the next event (or the endpoint at t) through
    the fast kernel-ratio table.  event_leg="preceding" selects the mirrored,
    biased pairing for negative-control tests only.
    """
    if event_leg not in ("following", "preceding"):
        raise ValueError(f"unknown event_leg {event_leg!r}")
    if table is None:
        table = get_default_table()
    gen = RngStream(seed, block_id).generator
    B = block_size
    K = MAX_CLOCK_EVENTS

    # clock: cumulative exponential interarrivals
    inter = gen.exponential(1.0 / rate, size=(B, K))
    T = np.cumsum(inter, axis=1)
    if T[:, -1].min() <= t:
        raise RuntimeError("MAX_CLOCK_EVENTS exceeded; rate * t too large")
    n_ev = (T <= t).sum(axis=1)
    T_ev = np.minimum(T, t)          # pads hold t, masked out later

    # merged per-path grid: uniform substeps plus this path's events
    n_u = max(1, int(math.ceil(t * substeps_per_unit)))
    ugrid = np.arange(1, n_u + 1) * (t / n_u)
    ugrid[-1] = t
    all_times = np.concatenate([np.broadcast_to(ugrid, (B, n_u)), T_ev], axis=1)
    S = n_u + K
    order = np.argsort(all_times, axis=1, kind="stable")
    sorted_t = np.take_along_axis(all_times, order, axis=1)
    # sorted position of event column j
    ev_mask = order >= n_u
    rows, cols = np.nonzero(ev_mask)
    pos_ev = np.empty((B, K), dtype=np.int64)
    pos_ev[rows, order[rows, cols] - n_u] = cols
    del all_times, order, ev_mask, rows, cols
    dt = np.diff(sorted_t, axis=1, prepend=0.0)
    np.maximum(dt, 0.0, out=dt)      # guard tie-rounding
    sqdt = np.sqrt(dt)

    # column-chunked path sweep with running state
    x = np.full(B, float(z0.x))
    logy = np.full(B, math.log(z0.y))
    x_ev = np.empty((B, K))
    y_ev = np.empty((B, K))
    for c0 in range(0, S, _SWEEP_CHUNK):
        c1 = min(c0 + _SWEEP_CHUNK, S)
        m = c1 - c0
        g1 = gen.standard_normal((B, m))
        g2 = gen.standard_normal((B, m))
        sq = sqdt[:, c0:c1]
        d = dt[:, c0:c1]
        logy_nodes = logy[:, None] + np.cumsum(-0.5 * d + sq * g2, axis=1)
        y_left = np.exp(np.concatenate([logy[:, None], logy_nodes[:, :-1]], axis=1))
        x_nodes = x[:, None] + np.cumsum(y_left * sq * g1, axis=1)
        in_chunk = (pos_ev >= c0) & (pos_ev < c1)
        if in_chunk.any():
            r_idx, j_idx = np.nonzero(in_chunk)
            p = pos_ev[r_idx, j_idx] - c0
            x_ev[r_idx, j_idx] = x_nodes[r_idx, p]
            y_ev[r_idx, j_idx] = np.exp(logy_nodes[r_idx, p])
        x = x_nodes[:, -1]
        logy = logy_nodes[:, -1]
    x_end = x
    y_end = np.exp(logy)

    # drift-weight product: one factor per event, over the leg that the
    # event starts (ending at the next event or at t).  Padded event columns
    # (j >= n_ev) were captured at time t, so x_ev[:, j+1] is the endpoint
    # whenever event j is the last one.
    if event_leg == "following":
        gaps = np.concatenate([T_ev[:, 1:], np.full((B, 1), t)], axis=1) - T_ev
        start_x, start_y = x_ev, y_ev
        end_x = np.concatenate([x_ev[:, 1:], x_end[:, None]], axis=1)
        end_y = np.concatenate([y_ev[:, 1:], y_end[:, None]], axis=1)
    else:
        gaps = np.diff(T_ev, axis=1, prepend=0.0)
        start_x = np.concatenate([np.full((B, 1), z0.x), x_ev[:, :-1]], axis=1)
        start_y = np.concatenate([np.full((B, 1), z0.y), y_ev[:, :-1]], axis=1)
        end_x, end_y = x_ev, y_ev
    active = np.arange(K) < n_ev[:, None]
    factors = np.ones((B, K))
    if active.any():
        px, py = start_x[active], start_y[active]
        cx, cy = end_x[active], end_y[active]
        g = np.maximum(gaps[active], 1e-300)
        r = hyperbolic_distance_arrays(px, py, cx, cy)
        rho = table.ratio(g, r)
        th = eval_mu_arrays(spec, px, py) * (px - cx) / (py * cy) * (-rho)
        factors[active] = th
        max_abs_theta = float(np.max(np.abs(th))) if th.size else 0.0
        n_over_bound = int(np.sum(np.abs(th) > theta_bound(spec.K0)))
    else:
        max_abs_theta = 0.0
        n_over_bound = 0
    weight = np.exp(rate * t) * rate ** (-n_ev.astype(float)) * np.prod(factors, axis=1)

    return {"weight": weight, "x": x_end, "y": y_end, "n_events": n_ev,
            "max_abs_theta": max_abs_theta, "n_theta_over_bound": n_over_bound}


def _blocks_for(n_paths: int, block_size: int) -> int:
    return (n_paths + block_size - 1) // block_size


def _block_payoff_partials(args):
    (spec_dict, t, z0xy, rate, seed, block_id, block_size, spu,
     payoffs, n_keep) = args
    spec = DriftSpec.from_config_dict(spec_dict)
    z0 = HyperbolicPoint(*z0xy)
    blk = simulate_weighted_block(spec, t, z0, rate, seed, block_id,
                                  block_size=block_size, substeps_per_unit=spu)
    w = blk["weight"][:n_keep]
    x, y = blk["x"][:n_keep], blk["y"][:n_keep]
    out = {}
    for pay in payoffs:
        f = pay(x, y)
        v = w * f
        n_capped = int(np.sum(np.abs(f) > pay.cap)) if pay.cap is not None else 0
        out[pay.spec_string()] = (float(np.sum(v)), float(np.sum(v * v)), n_capped)
    diag = (float(np.max(np.abs(w[:n_keep]))) if n_keep else 0.0,
            int(np.sum(blk["n_events"][:n_keep])),
            blk["max_abs_theta"], blk["n_theta_over_bound"])
    return out, diag


def estimate_many(spec: DriftSpec, payoffs: list[Payoff], t: float,
                  z0: HyperbolicPoint, n_paths: int, rate: float = 1.0,
                  seed: int = 0, substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT,
                  block_size: int = DEFAULT_BLOCK_SIZE,
                  workers: int = 1) -> dict[str, EstimateResult]:
    """Estimate several payoffs on one shared set of weighted paths.

    Deterministic for fixed (seed, n_paths, block_size, substeps) regardless
    of worker count: blocks are keyed streams, partials reduced in block
    order.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    n_blocks = _blocks_for(n_paths, block_size)
    tasks = []
    for b in range(n_blocks):
        n_keep = min(block_size, n_paths - b * block_size)
        tasks.append((spec.to_config_dict(), t, (z0.x, z0.y), rate, seed, b,
                      block_size, substeps_per_unit, tuple(payoffs), n_keep))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_block_payoff_partials, tasks))
    else:
        partials = [_block_payoff_partials(a) for a in tasks]

    results = {}
    max_w = max(d[0] for _, d in partials)
    total_events = sum(d[1] for _, d in partials)
    max_theta = max(d[2] for _, d in partials)
    n_over = sum(d[3] for _, d in partials)
    for pay in payoffs:
        key = pay.spec_string()
        s1 = math.fsum(p[key][0] for p, _ in partials)
        s2 = math.fsum(p[key][1] for p, _ in partials)
        n_capped = sum(p[key][2] for p, _ in partials)
        mean = s1 / n_paths
        var = max(s2 - n_paths * mean * mean, 0.0) / (n_paths - 1)
        se = math.sqrt(var / n_paths)
        diagnostics = {
            "max_abs_weight": max_w,
            "mean_events": total_events / n_paths,
            "max_abs_theta": max_theta,
            "n_theta_over_claimed_bound": n_over,
            "n_payoff_over_cap": n_capped,
            "clamp_count": 0,
        }
        results[key] = EstimateResult(mean=mean, std_error=se, n_paths=n_paths,
                                      seed=seed, diagnostics=diagnostics)
    return results


def estimate_expectation(spec: DriftSpec, f: Payoff, t: float,
                         z0: HyperbolicPoint, n_paths: int, rate: float = 1.0,
                         seed: int = 0, **kw) -> EstimateResult:
    """Monte Carlo mean and standard error of weight * f(endpoint)."""
    return estimate_many(spec, [f], t, z0, n_paths, rate=rate, seed=seed, **kw)[f.spec_string()]


@dataclass(frozen=True)
class DensityEstimate:
    """Per-cell weighted-histogram density estimate w.r.t. dx dy."""

    x_edges: np.ndarray
    y_edges: np.ndarray
    density: np.ndarray      # [nx, ny]
    std_error: np.ndarray
    counts: np.ndarray       # raw endpoint counts per cell
    n_paths: int
    seed: int

    def cell_areas(self) -> np.ndarray:
        dx = np.diff(self.x_edges)[:, None]
        dy = np.diff(self.y_edges)[None, :]
        return dx * dy


def _block_density_partials(args):
    (spec_dict, t, z0xy, rate, seed, block_id, block_size, spu,
     x_edges, y_edges, n_keep) = args
    spec = DriftSpec.from_config_dict(spec_dict)
    z0 = HyperbolicPoint(*z0xy)
    blk = simulate_weighted_block(spec, t, z0, rate, seed, block_id,
                                  block_size=block_size, substeps_per_unit=spu)
    w = blk["weight"][:n_keep]
    x, y = blk["x"][:n_keep], blk["y"][:n_keep]
    h_w, _, _ = np.histogram2d(x, y, bins=[x_edges, y_edges], weights=w)
    h_w2, _, _ = np.histogram2d(x, y, bins=[x_edges, y_edges], weights=w * w)
    h_n, _, _ = np.histogram2d(x, y, bins=[x_edges, y_edges])
    return h_w, h_w2, h_n


def estimate_density(spec: DriftSpec, t: float, z0: HyperbolicPoint,
                     grid: tuple, n_paths: int, rate: float = 1.0,
                     seed: int = 0, substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT,
                     block_size: int = DEFAULT_BLOCK_SIZE,
                     workers: int = 1) -> DensityEstimate:
    """Weighted-histogram estimate of the drifted transition density.

    grid = (x_edges, y_edges) with disjoint cells; density per cell is the
    weighted frequency divided by n_paths and cell area.
    """
    x_edges = np.asarray(grid[0], dtype=float)
    y_edges = np.asarray(grid[1], dtype=float)
    if np.any(np.diff(x_edges) <= 0) or np.any(np.diff(y_edges) <= 0):
        raise ValueError("grid edges must be strictly increasing")
    n_blocks = _blocks_for(n_paths, block_size)
    tasks = []
    for b in range(n_blocks):
        n_keep = min(block_size, n_paths - b * block_size)
        tasks.append((spec.to_config_dict(), t, (z0.x, z0.y), rate, seed, b,
                      block_size, substeps_per_unit, x_edges, y_edges, n_keep))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block_density_partials, tasks))
    else:
        parts = [_block_density_partials(a) for a in tasks]
    sw = np.sum([p[0] for p in parts], axis=0)
    sw2 = np.sum([p[1] for p in parts], axis=0)
    counts = np.sum([p[2] for p in parts], axis=0)
    area = np.diff(x_edges)[:, None] * np.diff(y_edges)[None, :]
    mean = sw / n_paths
    var = np.maximum(sw2 - n_paths * mean * mean, 0.0) / (n_paths - 1)
    se = np.sqrt(var / n_paths)
    return DensityEstimate(x_edges=x_edges, y_edges=y_edges,
                           density=mean / area, std_error=se / area,
                           counts=counts, n_paths=n_paths, seed=seed)
