"""Path sampling: driftless hyperbolic Brownian motion on time grids, and the
Euler-Maruyama oracle for the drifted process.

The vertical coordinate is always advanced by its exact geometric-Brownian
transition, so Y stays strictly positive; the only discretization is the
sub-stepped integration of dX = Y dW^1 (plus mu dt for the drifted oracle).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .drift import DriftSpec, eval_mu_arrays
from .geometry import HyperbolicPoint
from .rng import RngStream, as_generator

DEFAULT_SUBSTEPS_PER_UNIT = 512


@dataclass(frozen=True)
class PathGrid:
    """A driftless HBM path sampled at a strictly increasing time grid."""

    times: tuple
    points: tuple          # HyperbolicPoint per time
    origin: HyperbolicPoint
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        if any(t2 <= t1 for t1, t2 in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")


def sample_y_exact(y0: float, dt: float, rng) -> float:
    """Exact geometric-Brownian transition: y0 * exp(-dt/2 + sqrt(dt) G)."""
    if y0 <= 0.0:
        raise ValueError(f"y0 must be positive, got {y0}")
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    g = as_generator(rng).standard_normal()
    return y0 * math.exp(-0.5 * dt + math.sqrt(dt) * g)


def sample_hbm_grid(z0: HyperbolicPoint, times, rng,
                    substeps_per_unit: int = DEFAULT_SUBSTEPS_PER_UNIT) -> PathGrid:
    """Sample a driftless HBM path at the given times.

    Y is advanced by exact geometric-Brownian increments at the substeps; X
    accumulates sum(Y_left * dW^1) over the same substeps, the only
    discretization in this sampler.
    """
    times = [float(t) for t in times]
    if not times or any(t <= 0 for t in times) or any(
            b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be nonempty, positive, strictly increasing")
    if substeps_per_unit < 100:
        raise ValueError(f"substeps_per_unit must be >= 100, got {substeps_per_unit}")
    gen = as_generator(rng)
    x, y = z0.x, z0.y
    points = []
    t_prev = 0.0
    for t in times:
        span = t - t_prev
        n_sub = max(1, int(math.ceil(span * substeps_per_unit)))
        dt = span / n_sub
        sq = math.sqrt(dt)
        g = gen.standard_normal((n_sub, 2))
        for k in range(n_sub):
            x += y * sq * g[k, 0]
            y *= math.exp(-0.5 * dt + sq * g[k, 1])
        points.append(HyperbolicPoint(x, y))
        t_prev = t
    seed = rng.seed if isinstance(rng, RngStream) else -1
    stream = rng.stream_id if isinstance(rng, RngStream) else 0
    return PathGrid(times=tuple(times), points=tuple(points), origin=z0,
                    seed=seed, stream_id=stream)


def euler_drifted(spec: DriftSpec, z0: HyperbolicPoint, t: float,
                  n_steps: int, rng) -> HyperbolicPoint:
    """Euler-Maruyama endpoint of the drifted process (hybrid scheme):
    X <- X + Y dW^1 + mu(X, Y) dt, Y advanced exactly."""
    if t <= 0.0:
        raise ValueError(f"t must be positive, got {t}")
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    gen = as_generator(rng)
    dt = t / n_steps
    sq = math.sqrt(dt)
    x, y = z0.x, z0.y
    g = gen.standard_normal((n_steps, 2))
    for k in range(n_steps):
        mu = float(eval_mu_arrays(spec, x, y))
        x += y * sq * g[k, 0] + mu * dt
        y *= math.exp(-0.5 * dt + sq * g[k, 1])
    return HyperbolicPoint(x, y)


def _euler_block_partials(args):
    spec_dict, z0xy, t, n_steps, seed, block_id, block_size, payoffs, n_keep = args
    spec = DriftSpec.from_config_dict(spec_dict)
    x, y = euler_drifted_block(spec, HyperbolicPoint(*z0xy), t, n_steps,
                               seed, block_id, block_size)
    x, y = x[:n_keep], y[:n_keep]
    out = {}
    for pay in payoffs:
        v = pay(x, y)
        out[pay.spec_string()] = (float(np.sum(v)), float(np.sum(v * v)))
    return out


def euler_estimate_many(spec: DriftSpec, payoffs, t: float, z0: HyperbolicPoint,
                        n_paths: int, n_steps: int, seed: int,
                        block_size: int = 16384, workers: int = 1) -> dict:
    """Euler-Maruyama oracle means/SEs for several payoffs on shared paths.

    Same block/stream determinism contract as the weighted estimator:
    results are identical for any worker count at fixed seed and n_paths.
    Returns {payoff spec string: (mean, std_error)}.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    n_blocks = (n_paths + block_size - 1) // block_size
    tasks = []
    for b in range(n_blocks):
        n_keep = min(block_size, n_paths - b * block_size)
        tasks.append((spec.to_config_dict(), (z0.x, z0.y), t, n_steps, seed, b,
                      block_size, tuple(payoffs), n_keep))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(_euler_block_partials, tasks))
    else:
        partials = [_euler_block_partials(a) for a in tasks]
    out = {}
    for pay in payoffs:
        key = pay.spec_string()
        s1 = math.fsum(p[key][0] for p in partials)
        s2 = math.fsum(p[key][1] for p in partials)
        mean = s1 / n_paths
        var = max(s2 - n_paths * mean * mean, 0.0) / (n_paths - 1)
        out[key] = (mean, math.sqrt(var / n_paths))
    return out


def euler_drifted_block(spec: DriftSpec, z0: HyperbolicPoint, t: float,
                        n_steps: int, seed: int, block_id: int,
                        block_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized Euler-Maruyama endpoints for one block of paths.

    Each block owns the stream (seed, block_id); per step, one [B] column of
    normals is drawn for X and one for Y, so results are independent of how
    blocks are distributed over workers.
    """
    gen = RngStream(seed, block_id).generator
    dt = t / n_steps
    sq = math.sqrt(dt)
    x = np.full(block_size, float(z0.x))
    y = np.full(block_size, float(z0.y))
    for _ in range(n_steps):
        g1 = gen.standard_normal(block_size)
        g2 = gen.standard_normal(block_size)
        mu = eval_mu_arrays(spec, x, y)
        x += y * sq * g1 + mu * dt
        y *= np.exp(-0.5 * dt + sq * g2)
    return x, y
