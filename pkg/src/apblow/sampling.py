"""Deterministic sample streams for Monte Carlo and quasi-Monte Carlo.

Every stream is addressed by ``(seed, stream id)`` and by the index of the
sample inside the stream, so any contiguous block of samples can be drawn
on its own and the concatenation of blocks is bit-identical to drawing the
whole stream at once. Two schemes are available:

``low-discrepancy``
    Owen-scrambled Sobol points (``scipy.stats.qmc.Sobol``); blocks are
    reached with ``fast_forward``.
``pseudo-random``
    Counter-based Philox4x64 (``numpy.random.Philox``); sample ``i`` uses
    the counter blocks reserved for it, reached with ``advance``.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .errors import DomainError

SCHEMES = ("low-discrepancy", "pseudo-random")
CHUNK = 1 << 14


@dataclass(frozen=True)
class QuadratureSpec:
    """Sampling plan: scheme, number of samples and 64-bit seed."""

    scheme: str = "low-discrepancy"
    n_samples: int = 1 << 14
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise DomainError(f"unknown sampling scheme {self.scheme!r}")
        if self.n_samples < 1:
            raise DomainError("n_samples must be positive")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in 64 unsigned bits")

    @property
    def generator(self) -> str:
        return "sobol-owen" if self.scheme == "low-discrepancy" else "philox4x64"

    def with_samples(self, n_samples: int) -> "QuadratureSpec":
        return QuadratureSpec(self.scheme, int(n_samples), self.seed)


def _seed_sequence(seed, stream):
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int(seed) >> 32, *map(int, stream)])


def uniform_cube(spec: QuadratureSpec, dim: int, stream=(), start=0, stop=None):
    """Samples ``start..stop-1`` of the ``dim``-dimensional stream, in (0, 1)."""
    stop = spec.n_samples if stop is None else stop
    m = stop - start
    if m <= 0:
        return np.empty((0, dim))
    ss = _seed_sequence(spec.seed, stream)
    if spec.scheme == "low-discrepancy":
        engine = qmc.Sobol(dim, scramble=True, seed=np.random.default_rng(ss))
        if start:
            engine.fast_forward(start)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            u = engine.random(m)
    else:
        blocks = -(-dim // 4)
        bitgen = np.random.Philox(key=ss.generate_state(2, np.uint64))
        if start:
            bitgen.advance(start * blocks)
        raw = np.random.Generator(bitgen).random(m * blocks * 4)
        u = raw.reshape(m, blocks * 4)[:, :dim]
    # keep strictly inside (0, 1) for the inverse normal CDF
    return np.clip(u, 2.0**-60, 1.0 - 2.0**-53)


def cube_to_ball(u):
    """Map ``(m, n+1)`` uniforms to ``(m, n)`` points uniform in the unit ball."""
    n = u.shape[1] - 1
    if n == 2:
        theta = 2.0 * np.pi * u[:, 1]
        rad = np.sqrt(u[:, 0])
        return np.column_stack([rad * np.cos(theta), rad * np.sin(theta)])
    g = ndtri(u[:, 1:])
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * u[:, :1] ** (1.0 / n)


def uniform_ball(spec: QuadratureSpec, dim: int, stream=(), start=0, stop=None):
    """Points uniform in the open unit ball of R^dim (rows of the stream)."""
    return cube_to_ball(uniform_cube(spec, dim + 1, stream, start, stop))


def chunks(n, size=CHUNK):
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def worker_count() -> int:
    env = os.environ.get("APBLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def parallel_map(fn, items):
    """Ordered map; uses a thread pool capped by ``APBLOW_THREADS``."""
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def mean_and_se(values):
    """Sample mean and its iid standard error."""
    values = np.asarray(values, dtype=np.float64)
    m = values.size
    mean = float(np.mean(values))
    if m < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / np.sqrt(m))


def fraction_and_se(mask):
    """Hit fraction and its binomial standard error."""
    mask = np.asarray(mask, dtype=bool)
    m = mask.size
    f = float(np.count_nonzero(mask)) / m
    return f, float(np.sqrt(max(f * (1.0 - f), 0.0) / m))
