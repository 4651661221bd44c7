"""Exact stochastic simulation of the driven isomerisation model.

Jumps are generated by thinning: with ``c1 = 1 + f`` and ``c2 = 1 - f``
the total propensity ``c1*n1 + c2*n2`` never exceeds ``2N`` (for
``|f| <= 1``), so proposing candidate times from a homogeneous rate-``2N``
exponential clock and accepting forward/backward moves with probabilities
``c1(t) n1 / 2N`` and ``c2(t) n2 / 2N`` reproduces the exact law of the
time-inhomogeneous chain; no time discretisation is involved.

Randomness comes from counter-based generators keyed on
``(seed, path_index)``, which makes every path reproducible on its own:
marginals are bit-identical no matter how paths are distributed over
workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom as _binom

from .errors import ProbabilityError, RateBoundError
from .generators import as_rate_function
from .magnus import DEFAULT_QUADRATURE, QuadratureSpec, _quad

__all__ = [
    "Trajectory",
    "EmpiricalMarginal",
    "ssa_path",
    "empirical_marginal",
    "empirical_from_trajectories",
    "rre_theta",
    "binomial_pmf",
    "tv_distance",
    "write_trajectory_csv",
    "write_histogram_csv",
]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Right-continuous path: ``states[k]`` holds on ``[times[k], times[k+1])``."""

    times: np.ndarray
    states: np.ndarray
    n: int
    t_end: float
    seed: int
    path_index: int

    @property
    def jump_times(self) -> np.ndarray:
        """Jump instants only (``times`` also carries the initial 0.0)."""
        return self.times[1:]

    def state_at(self, t: float) -> int:
        if t < 0 or t > self.t_end:
            raise ValueError(f"time {t} outside [0, {self.t_end}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.states[k])


@dataclass(frozen=True, eq=False)
class EmpiricalMarginal:
    """Histogram of final states over a batch of paths."""

    counts: np.ndarray
    n_paths: int
    n: int
    t: float
    seed: int

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.n_paths

    def mean_occupancy(self) -> float:
        return float(np.arange(self.n + 1) @ self.counts) / (self.n_paths * self.n)


def _rng_for_path(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, path_index]))


def _walk(rng, f, n: int, i0: int, t_end: float, record: bool):
    """Shared thinning loop; returns (final_state, times, states)."""
    two_n = 2.0 * n
    state = i0
    t = 0.0
    times = [0.0] if record else None
    states = [i0] if record else None
    while True:
        # block of proposals covering the expected remaining activity
        remaining = t_end - t
        block = max(16, int(two_n * remaining * 1.25) + 8)
        dts = rng.exponential(1.0 / two_n, size=block)
        us = rng.random(size=block)
        done = False
        for k in range(block):
            t += dts[k]
            if t > t_end:
                done = True
                break
            ft = f(t)
            if abs(ft) > 1.0 + 1e-12:
                raise RateBoundError(
                    f"|f({t})| = {abs(ft)} exceeds 1; thinning bound invalid"
                )
            u = us[k]
            p_fwd = (1.0 + ft) * state / two_n
            if u < p_fwd:
                state -= 1
            elif u < p_fwd + (1.0 - ft) * (n - state) / two_n:
                state += 1
            else:
                continue
            if record:
                times.append(t)
                states.append(state)
        if done:
            return state, times, states


def ssa_path(f, n: int, i0: int, t_end: float, seed: int,
             path_index: int = 0) -> Trajectory:
    """Sample one exact path of the driven chain on ``[0, t_end]``."""
    if not 0 <= i0 <= n:
        raise ValueError(f"initial state {i0} outside 0..{n}")
    if t_end < 0:
        raise ValueError(f"needs t_end >= 0, got {t_end}")
    if seed < 0 or path_index < 0:
        raise ValueError("seed and path index must be nonnegative")
    rf = as_rate_function(f)
    rng = _rng_for_path(seed, path_index)
    _, times, states = _walk(rng, rf, n, i0, t_end, record=True)
    return Trajectory(times=np.asarray(times), states=np.asarray(states, dtype=np.int64),
                      n=n, t_end=t_end, seed=seed, path_index=path_index)


def _count_chunk(args) -> np.ndarray:
    f_label_or_fn, n, i0, t, seed, start, stop = args
    f = f_label_or_fn
    counts = np.zeros(n + 1, dtype=np.int64)
    for idx in range(start, stop):
        rng = _rng_for_path(seed, idx)
        final, _, _ = _walk(rng, f, n, i0, t, record=False)
        counts[final] += 1
    return counts


def empirical_marginal(f, n: int, i0: int, t: float, n_paths: int, seed: int,
                       threads: int | None = None) -> EmpiricalMarginal:
    """Final-state histogram over ``n_paths`` independent paths.

    Each path gets its own counter-based stream keyed by its index, so the
    result is bit-identical for any ``threads`` value (workers just split
    the index range).
    """
    if n_paths < 1:
        raise ValueError(f"needs n_paths >= 1, got {n_paths}")
    rf = as_rate_function(f)
    if threads is None or threads <= 1 or n_paths < 256:
        counts = _count_chunk((rf, n, i0, t, seed, 0, n_paths))
    else:
        workers = min(threads, n_paths)
        bounds = np.linspace(0, n_paths, workers + 1).astype(int)
        jobs = [(rf, n, i0, t, seed, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:]) if a < b]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = sum(pool.map(_count_chunk, jobs))
    return EmpiricalMarginal(counts=counts, n_paths=n_paths, n=n, t=t, seed=seed)


def empirical_from_trajectories(paths, t: float) -> EmpiricalMarginal:
    """Histogram of ``state_at(t)`` over an existing trajectory set."""
    paths = list(paths)
    if not paths:
        raise ValueError("needs at least one trajectory")
    n = paths[0].n
    counts = np.zeros(n + 1, dtype=np.int64)
    for p in paths:
        if p.n != n:
            raise ValueError("trajectories disagree on n")
        counts[p.state_at(t)] += 1
    return EmpiricalMarginal(counts=counts, n_paths=len(paths), n=n, t=t,
                             seed=paths[0].seed)


# ---------------------------------------------------------------------------
# deterministic comparisons


def rre_theta(f, theta0: float, t: float,
              quad: QuadratureSpec = DEFAULT_QUADRATURE) -> float:
    """Mean-fraction rate equation ``theta' = (1 - f) - 2 theta`` solved
    by its integrating factor."""
    if not 0.0 <= theta0 <= 1.0:
        raise ProbabilityError(f"theta0 must lie in [0, 1], got {theta0}")
    if t < 0:
        raise ValueError(f"needs t >= 0, got {t}")
    if t == 0.0:
        return float(theta0)
    rf = as_rate_function(f)
    integral, _ = _quad(lambda s: math.exp(-2.0 * (t - s)) * (1.0 - rf(s)), 0.0, t, quad)
    return math.exp(-2.0 * t) * theta0 + integral


def binomial_pmf(n: int, theta: float) -> np.ndarray:
    """Binomial(n, theta) mass function on 0..n, evaluated stably."""
    if not 0.0 <= theta <= 1.0:
        raise ProbabilityError(f"theta must lie in [0, 1], got {theta}")
    return _binom.pmf(np.arange(n + 1), n, theta)


def tv_distance(p, q) -> float:
    """Total-variation distance between two distributions on the same states."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


# ---------------------------------------------------------------------------
# CSV exports


def write_trajectory_csv(path, traj: Trajectory) -> None:
    with open(path, "w") as fh:
        fh.write("time,state\n")
        for t, s in zip(traj.times, traj.states):
            fh.write(f"{float(t)!r},{int(s)}\n")


def write_histogram_csv(path, marginal: EmpiricalMarginal) -> None:
    with open(path, "w") as fh:
        fh.write("state,count,frequency\n")
        freq = marginal.frequencies
        for s in range(marginal.n + 1):
            fh.write(f"{s},{int(marginal.counts[s])},{float(freq[s])!r}\n")
