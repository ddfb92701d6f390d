"""Timing of column inference against the number of unique values."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from . import _settings
from .inference import Column, TypeSystem, annotate
from .machines import build_catalog

DEFAULT_GRID = (1_000, 10_000, 100_000)
DEFAULT_LENGTH = 8


def synthetic_column(n_unique: int, length: int = DEFAULT_LENGTH, seed: int = 0) -> Column:
    """``n_unique`` distinct digit strings of exactly ``length`` characters."""
    rng = np.random.default_rng(seed)
    space = 10 ** length
    if n_unique > space:
        raise ValueError(f"cannot draw {n_unique} distinct strings of length {length}")
    picks = rng.choice(space, size=n_unique, replace=False) if n_unique < space // 4 \
        else rng.permutation(space)[:n_unique]
    return Column([f"{v:0{length}d}" for v in picks.tolist()], name=f"U={n_unique}")


@dataclass
class BenchRow:
    backend: str
    n_unique: int
    seconds: float

    @property
    def per_second(self):
        return self.n_unique / self.seconds if self.seconds > 0 else float("inf")


@dataclass
class LinearFit:
    c0: float
    c1: float
    r2: float


def fit_linear(xs: Sequence[float], ys: Sequence[float]):
    """Least-squares ``y = c0 + c1 x``; ``None`` with fewer than two distinct x."""
    if len(set(xs)) < 2:
        return None
    res = stats.linregress(np.asarray(xs, float), np.asarray(ys, float))
    return LinearFit(float(res.intercept), float(res.slope), float(res.rvalue ** 2))


def run(grid: Sequence[int] = DEFAULT_GRID, length: int = DEFAULT_LENGTH,
        backends: Sequence[str] = ("numba",), repeats: int = 3, system: TypeSystem = None,
        seed: int = 0):
    """Time ``annotate`` per grid point; the best of ``repeats`` runs is kept.

    Returns the rows and a per-backend linear fit of seconds against U.
    """
    system = system or TypeSystem(build_catalog())
    columns = [synthetic_column(u, length, seed) for u in grid]
    rows, fits = [], {}
    for backend in backends:
        previous = _settings.set_backend(backend)
        try:
            annotate(synthetic_column(min(grid, default=10), length, seed + 1), system)  # warm-up
            for col in columns:
                best = float("inf")
                for _ in range(max(1, repeats)):
                    t0 = time.perf_counter()
                    annotate(col, system)
                    best = min(best, time.perf_counter() - t0)
                rows.append(BenchRow(backend, len(col.uniques), best))
        finally:
            _settings.set_backend(previous)
        mine = [r for r in rows if r.backend == backend]
        fits[backend] = fit_linear([r.n_unique for r in mine], [r.seconds for r in mine])
    return rows, fits


def format_table(rows, fits) -> str:
    lines = [f"{'backend':<8} {'U':>9} {'seconds':>10} {'U/s':>12}"]
    for r in rows:
        lines.append(f"{r.backend:<8} {r.n_unique:>9d} {r.seconds:>10.4f} {r.per_second:>12.0f}")
    for backend, fit in fits.items():
        if fit is None:
            lines.append(f"{backend}: linear fit needs at least two grid points")
        else:
            lines.append(f"{backend}: seconds = {fit.c0:.4g} + {fit.c1:.4g} * U   (R^2 = {fit.r2:.4f})")
    return "\n".join(lines)
