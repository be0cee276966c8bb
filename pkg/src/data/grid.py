from typing import Iterable, NamedTuple

import numpy as np

from src.data.models import MIN_GRID_POINTS, GridFunction, ScattererConfig
from src.utils.errors import DomainError, ResolutionError

MERGE_DISTANCE = 1e-12


class Grid(NamedTuple):
    M: int
    h: float
    nodes: np.ndarray


def build_grid(M: int) -> Grid:
    """Uniform grid with M interior nodes on [0, 1]."""
    if M < MIN_GRID_POINTS:
        raise ResolutionError(f"grid needs at least {MIN_GRID_POINTS} interior nodes, got {M}")
    h = 1.0 / (M + 1)
    return Grid(M=M, h=h, nodes=np.arange(1, M + 1) * h)


def config_from_positions(positions: Iterable[float], sigma: float) -> ScattererConfig:
    """Sort positions, merge points closer than 1e-12 and add their strengths."""
    z = np.sort(np.asarray(list(positions), dtype=float))
    if z.size and (z[0] <= 0.0 or z[-1] >= 1.0):
        raise DomainError(f"scatterer positions must lie in (0, 1), got range [{z[0]}, {z[-1]}]")
    if z.size == 0:
        return ScattererConfig(positions=(), strength=sigma)

    merged, weights = [z[0]], [1.0]
    for x in z[1:]:
        if x - merged[-1] <= MERGE_DISTANCE:
            weights[-1] += 1.0
        else:
            merged.append(x)
            weights.append(1.0)
    if all(w == 1.0 for w in weights):
        return ScattererConfig(positions=tuple(merged), strength=sigma)
    return ScattererConfig(positions=tuple(merged), strength=sigma, weights=tuple(weights))


def trapezoid_weights(M: int, free_boundary: bool = False) -> np.ndarray:
    """Mass weights of the trapezoid rule; endpoints carry h/2 when they are unknowns."""
    h = 1.0 / (M + 1)
    if not free_boundary:
        return np.full(M, h)
    b = np.full(M + 2, h)
    b[0] = b[-1] = 0.5 * h
    return b


def normalize(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return values / np.sqrt(np.dot(weights, values ** 2))


def sine_mode(M: int) -> GridFunction:
    """√2 sin(πz), normalized in the discrete trapezoid norm."""
    grid = build_grid(M)
    v = np.sqrt(2.0) * np.sin(np.pi * grid.nodes)
    return GridFunction(values=normalize(v, trapezoid_weights(M)))


def resample(psi: GridFunction, M: int) -> np.ndarray:
    """Linear interpolation of psi (including endpoint values) onto a grid with M interior nodes."""
    nodes = np.arange(1, M + 1) / (M + 1)
    return np.interp(nodes, psi.full_nodes, psi.full_values)


def cell_integrals(psi: GridFunction, edges: np.ndarray) -> dict:
    """Integrate mass, quartic and kinetic densities of psi between consecutive edges.

    Each cell's trapezoid contribution is spread uniformly over the cell, so the
    pieces add up exactly to the whole-grid sums for any choice of edges.
    """
    full, h = psi.full_values, psi.h
    nodes = psi.full_nodes
    densities = {
        "mass": 0.5 * (full[:-1] ** 2 + full[1:] ** 2),
        "quartic": 0.5 * (full[:-1] ** 4 + full[1:] ** 4),
        "kinetic": (np.diff(full) / h) ** 2,
    }
    out = {}
    for name, rho in densities.items():
        cumulative = np.concatenate(([0.0], np.cumsum(rho * h)))
        out[name] = np.diff(np.interp(edges, nodes, cumulative))
    out["values_at_edges"] = np.interp(edges, nodes, full)
    return out
