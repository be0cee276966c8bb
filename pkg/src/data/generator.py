import math
from typing import Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.data.grid import config_from_positions
from src.data.models import INF, EnsembleSpec, ScattererConfig
from src.utils.errors import DomainError

METHODS = ("exponential", "order_statistics")


def rng_for(seed: int, stream: Optional[int] = None) -> np.random.Generator:
    """Counter-based stream keyed by (seed, stream); independent of scheduling order."""
    key = () if stream is None else (stream,)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


def _chunk(mean: float) -> int:
    return int(mean + 10.0 * math.sqrt(mean) + 20)


def cumulative_points(rng: np.random.Generator, density: float, length: float) -> np.ndarray:
    """Points of a Poisson process on [0, length) from cumulative exponential spacings."""
    points = np.empty(0)
    start = 0.0
    while True:
        steps = rng.exponential(scale=1.0 / density, size=_chunk(density * length))
        chunk = start + np.cumsum(steps)
        inside = chunk[chunk < length]
        points = np.concatenate((points, inside))
        if inside.size < chunk.size:
            return points
        start = chunk[-1]


def order_statistic_points(rng: np.random.Generator, density: float, length: float) -> np.ndarray:
    """Poisson(density·length) count followed by sorted uniform positions."""
    count = rng.poisson(density * length)
    return np.sort(rng.uniform(0.0, length, size=count))


class ScattererGenerator:
    """Poisson scatterer configurations on the unit interval and longer windows for statistics."""

    def __init__(self, method: str = "exponential"):
        if method not in METHODS:
            raise DomainError(f"unknown sampling method '{method}', expected one of {METHODS}")
        self.method = method

    def points(self, rng: np.random.Generator, density: float, length: float, method: Optional[str] = None) -> np.ndarray:
        method = method or self.method
        if density <= 0:
            raise DomainError(f"density must be positive, got {density}")
        if method == "exponential":
            return cumulative_points(rng, density, length)
        if method == "order_statistics":
            return order_statistic_points(rng, density, length)
        raise DomainError(f"unknown sampling method '{method}'")

    def sample_config(self, nu: float, seed: int, sigma: float = INF, method: Optional[str] = None) -> ScattererConfig:
        z = self.points(rng_for(seed), nu, 1.0, method)
        return config_from_positions(z[z > 0.0], sigma)

    def ensemble(self, spec: EnsembleSpec, sigma: float = INF):
        """Yield (index, seed, config) for every member of the ensemble."""
        for i in range(spec.samples):
            seed = spec.seed_for(i)
            yield i, seed, self.sample_config(spec.nu, seed, sigma)

    def counts(self, nu: float, K: int, seed: int) -> np.ndarray:
        """Number of points in [0, 1] for K independent realizations, drawn in one batch."""
        rng = rng_for(seed, 0)
        if self.method == "order_statistics":
            return rng.poisson(nu, size=K)
        width = _chunk(nu)
        steps = rng.exponential(scale=1.0 / nu, size=(K, width))
        counts = np.sum(np.cumsum(steps, axis=1) < 1.0, axis=1)
        if np.any(counts == width):
            raise DomainError(f"count chunk of {width} exhausted at nu={nu}")
        return counts

    def spacings(self, nu: float, K: int, seed: int, method: Optional[str] = None) -> np.ndarray:
        """About K interior spacings from a single window of length (K + 1)/ν."""
        z = self.points(rng_for(seed, 1), nu, (K + 1) / nu, method)
        return np.diff(z)

    def max_gaps(self, density: float, length: float, trials: int, seed: int) -> np.ndarray:
        """Largest spacing between consecutive points in a window of the given length, per trial."""
        out = np.empty(trials)
        for t in range(trials):
            z = self.points(rng_for(seed, 2 + t), density, length)
            out[t] = np.max(np.diff(z)) if z.size > 1 else length
        return out

    def generate_dataset(self, spec: EnsembleSpec) -> pd.DataFrame:
        """One row per realization with its seed, count and extreme gaps."""
        rows = []
        for i, seed, config in self.ensemble(spec):
            gaps = config.gaps
            rows.append(
                {"index": i, "seed": seed, "m": config.m, "min_gap": float(gaps.min()), "max_gap": float(gaps.max())}
            )
        logger.debug(f"Sampled {spec.samples} configurations at nu={spec.nu}")
        return pd.DataFrame(rows)
