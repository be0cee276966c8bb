"""Discrete energy functionals shared by the auxiliary and the full GP problems.

Both are of the form

    E(v) = vᵀ A v + (g/2) Σ b_i v_i⁴,    Σ b_i v_i² = 1,

with A symmetric tridiagonal (kinetic term plus boundary or delta terms), b the
trapezoid mass weights and g the quartic coupling (κ or γ).
"""
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from src.data.grid import build_grid, trapezoid_weights
from src.data.models import ScattererConfig


@dataclass(frozen=True)
class QuadraticProblem:
    diag: np.ndarray
    off: np.ndarray
    mass: np.ndarray
    coupling: float
    pinned: np.ndarray = field(default=None)
    free_boundary: bool = False

    def __post_init__(self):
        if self.pinned is None:
            object.__setattr__(self, "pinned", np.zeros(self.diag.size, dtype=bool))

    @property
    def size(self) -> int:
        return self.diag.size

    @property
    def M(self) -> int:
        return self.size - 2 if self.free_boundary else self.size

    @property
    def h(self) -> float:
        return 1.0 / (self.M + 1)

    def apply(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out

    def energy(self, v: np.ndarray) -> float:
        return float(np.dot(v, self.apply(v)) + 0.5 * self.coupling * np.dot(self.mass, v ** 4))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return 2.0 * self.apply(v) + 2.0 * self.coupling * self.mass * v ** 3

    def mean_field_diag(self, v: np.ndarray) -> np.ndarray:
        """Diagonal of H(v) = A + g·diag(b v²); the off-diagonal is that of A."""
        return self.diag + self.coupling * self.mass * v ** 2

    def norm2(self, v: np.ndarray) -> float:
        return float(np.dot(self.mass, v ** 2))

    def normalize(self, v: np.ndarray) -> np.ndarray:
        v = np.where(self.pinned, 0.0, v)
        return v / math.sqrt(self.norm2(v))

    def free_tridiagonal(self, diag: np.ndarray = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Mass-scaled tridiagonal B^{-1/2}(·)B^{-1/2} restricted to unpinned nodes.

        Returns (indices, diagonal, off-diagonal) of the symmetric standard
        eigenproblem equivalent to (·)v = λBv.
        """
        d = self.diag if diag is None else diag
        idx = np.flatnonzero(~self.pinned)
        s = 1.0 / np.sqrt(self.mass[idx])
        dd = d[idx] * s ** 2
        adjacent = np.diff(idx) == 1
        ee = np.where(adjacent, self.off[np.minimum(idx[:-1], self.off.size - 1)], 0.0) * s[:-1] * s[1:]
        return idx, dd, ee


def kinetic_bands(M: int, free_boundary: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Bands of Σ (v_{i+1} − v_i)²/h with zero walls, or with free endpoint unknowns."""
    h = 1.0 / (M + 1)
    n = M + 2 if free_boundary else M
    diag = np.full(n, 2.0 / h)
    if free_boundary:
        diag[0] = diag[-1] = 1.0 / h
    return diag, np.full(n - 1, -1.0 / h)


def aux_problem(kappa: float, alpha: float, M: int) -> QuadraticProblem:
    """Single-interval functional ∫φ'² + (κ/2)∫φ⁴ + (α/2)(φ(0)² + φ(1)²)."""
    build_grid(M)
    if math.isinf(alpha):
        diag, off = kinetic_bands(M, free_boundary=False)
        return QuadraticProblem(diag=diag, off=off, mass=trapezoid_weights(M), coupling=kappa)
    diag, off = kinetic_bands(M, free_boundary=True)
    diag[0] += 0.5 * alpha
    diag[-1] += 0.5 * alpha
    return QuadraticProblem(
        diag=diag, off=off, mass=trapezoid_weights(M, free_boundary=True), coupling=kappa, free_boundary=True
    )


def gp_problem(config: ScattererConfig, gamma: float, M: int) -> Tuple[QuadraticProblem, float]:
    """Full functional on [0, 1] with Dirichlet walls.

    Finite deltas act on the linear interpolant at the exact position, which keeps
    A tridiagonal. Infinite deltas pin the nearest node; the largest snap distance
    is returned alongside the problem.
    """
    h = build_grid(M).h
    diag, off = kinetic_bands(M, free_boundary=False)
    mass = trapezoid_weights(M)
    pinned = np.zeros(M, dtype=bool)
    snap = 0.0

    for z, s in zip(config.positions, config.strengths):
        t = z / h
        if math.isinf(s):
            p = int(round(t))
            snap = max(snap, abs(t - p) * h)
            if 1 <= p <= M:
                pinned[p - 1] = True
            continue
        a = int(math.floor(t))
        wb = t - a
        wa = 1.0 - wb
        # full-grid nodes a, a+1 map to interior indices a-1, a
        ia, ib = a - 1, a
        if 0 <= ia < M:
            diag[ia] += s * wa * wa
        if 0 <= ib < M:
            diag[ib] += s * wb * wb
        if 0 <= ia and ib < M:
            off[ia] += s * wa * wb

    if pinned.any():
        idx = np.flatnonzero(pinned)
        diag[idx] = 1.0
        mass = mass.copy()
        mass[idx] = 0.0
        off[idx[idx < M - 1]] = 0.0
        off[idx[idx > 0] - 1] = 0.0
    return QuadraticProblem(diag=diag, off=off, mass=mass, coupling=gamma, pinned=pinned), snap
