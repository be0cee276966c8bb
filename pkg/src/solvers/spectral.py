"""Low spectrum of −∂² + W on [0, 1] with Dirichlet walls.

Two independent routes are provided: Sturm bisection on the finite-difference
tridiagonal matrix, and shooting on the Prüfer angle. The gap estimates and the
up-to-constant depletion bounds built from the spectrum also live here.
"""
import math
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import eigh_tridiagonal

from src.data.grid import build_grid
from src.data.models import INF, GridFunction, PotentialSpec, ScattererConfig, SpectrumResult
from src.solvers.aux_interval import richardson
from src.solvers.functional import gp_problem
from src.utils.errors import BracketError, ConsistencyError, DimensionError, DomainError, ResolutionError

MIN_SPECTRAL_GRID = 64
MAX_EIGENVALUES = 16
MAX_DOUBLINGS = 60


class MeanField(NamedTuple):
    potential: PotentialSpec
    shift: float
    energy: float
    cosine: float


def gap_lower_bound(integral_W: float, has_deltas: bool = False) -> Tuple[float, float]:
    """η = √(π² + 3∫W) and the guaranteed gap η·ln(1 + c·e^{−2η}), c = π without deltas, 1 with."""
    if integral_W < 0:
        raise DomainError(f"integral of W must be nonnegative, got {integral_W}")
    if math.isinf(integral_W):
        return INF, 0.0
    eta = math.sqrt(math.pi ** 2 + 3.0 * integral_W)
    c = 1.0 if has_deltas else math.pi
    return eta, eta * math.log1p(c * math.exp(-2.0 * eta))


def trial_energy_bound(integral_W: float) -> float:
    """e₀ ≤ π² + 2∫W from the trial function √2 sin(πz)."""
    return math.pi ** 2 + 2.0 * integral_W


def depletion_bound(e0: float, ek: float, gamma: float, N: float, constant: float = 1.0) -> float:
    """Up-to-constant bound on the depleted fraction 1 − N_{≤k}/N."""
    if ek <= e0:
        raise DomainError(f"need e_k > e_0, got e_0={e0}, e_k={ek}")
    if N < 1:
        raise DomainError(f"particle number must be at least 1, got {N}")
    return constant * e0 / (ek - e0) * N ** (-1.0 / 3.0) * min(math.sqrt(gamma), gamma)


def energy_bounds(e0: float, gamma: float, N: float, constant: float = 1.0) -> Tuple[float, float]:
    """Many-body energy per particle window [e0(1 − c N^{−1/3} min(√γ, γ)), e0]."""
    if N < 1:
        raise DomainError(f"particle number must be at least 1, got {N}")
    return e0 * (1.0 - constant * N ** (-1.0 / 3.0) * min(math.sqrt(gamma), gamma)), e0


def depletion_table(
    spectrum: SpectrumResult, gamma: float, N: float, constant: float = 1.0
) -> List[Tuple[int, float]]:
    e = spectrum.eigenvalues
    return [(k, depletion_bound(e[0], e[k], gamma, N, constant)) for k in range(1, len(e))]


def _finite_integral(potential: PotentialSpec) -> float:
    deltas = potential.delta_part
    if deltas.m and math.isinf(deltas.strength):
        return potential.integral_smooth
    return potential.integral_W


class SpectralSolver:
    def __init__(self, grid_points: int = 4096, tol: float = 1e-10, shooting_tol: float = 1e-8, steps: int = 2048):
        self.grid_points = grid_points
        self.tol = tol
        self.shooting_tol = shooting_tol
        self.steps = steps

    # ---- finite differences -------------------------------------------

    def tridiagonal(self, potential: PotentialSpec, M: int) -> Tuple[np.ndarray, np.ndarray, float]:
        """Diagonal and off-diagonal of the FD operator; deltas lumped as σ/h on the nearest node.

        Hard scatterers remove their node and cut the chain there.
        """
        if M < MIN_SPECTRAL_GRID:
            raise ResolutionError(f"spectral grid needs at least {MIN_SPECTRAL_GRID} nodes, got {M}")
        grid = build_grid(M)
        h = grid.h
        d = 2.0 / h ** 2 + potential.smooth_on(grid.nodes)
        e = np.full(M - 1, -1.0 / h ** 2)
        keep = np.ones(M, dtype=bool)
        snap = 0.0
        deltas = potential.delta_part
        for z, s in zip(deltas.positions, deltas.strengths):
            p = int(round(z / h))
            snap = max(snap, abs(z - p * h))
            if not 1 <= p <= M:
                continue
            if math.isinf(s):
                keep[p - 1] = False
            else:
                d[p - 1] += s / h
        if not keep.all():
            idx = np.flatnonzero(keep)
            e = np.where(np.diff(idx) == 1, e[np.minimum(idx[:-1], M - 2)], 0.0)
            d = d[idx]
        return d, e, snap

    def _lowest(self, potential: PotentialSpec, k: int, M: int) -> Tuple[np.ndarray, float]:
        d, e, snap = self.tridiagonal(potential, M)
        if k > d.size:
            raise DimensionError(f"asked for {k} eigenvalues of a {d.size}x{d.size} matrix")
        w = eigh_tridiagonal(
            d, e, eigvals_only=True, select="i", select_range=(0, k - 1), lapack_driver="stebz", tol=self.tol
        )
        return np.sort(w), snap

    def eigs(
        self, potential: PotentialSpec, k: int = 2, M: Optional[int] = None, richardson_extrapolate: bool = False
    ) -> SpectrumResult:
        M = M or self.grid_points
        if k < 2:
            raise DomainError(f"need at least two eigenvalues for a gap, got k={k}")
        if k > MAX_EIGENVALUES:
            raise DimensionError(f"at most {MAX_EIGENVALUES} eigenvalues are supported, got k={k}")
        if k > M:
            raise DimensionError(f"k={k} exceeds the grid size {M}")
        values, snap = self._lowest(potential, k, M)
        if richardson_extrapolate:
            fine, _ = self._lowest(potential, k, 2 * M + 1)
            values = richardson(values, fine)
        return self._result(potential, values, snap, "tridiagonal")

    @staticmethod
    def _result(potential: PotentialSpec, values: np.ndarray, snap: float, method: str) -> SpectrumResult:
        eta, bound = gap_lower_bound(potential.integral_W, potential.has_deltas)
        gap = float(values[1] - values[0])
        logger.debug(f"{method} spectrum: e0={values[0]:.8g} gap={gap:.6g} bound={bound:.3g}")
        return SpectrumResult(
            eigenvalues=tuple(float(v) for v in values),
            gap=gap,
            eta=eta,
            gap_bound=bound,
            snap_distance=snap,
            method=method,
        )

    # ---- Prüfer shooting ----------------------------------------------

    def prufer_theta(self, potential: PotentialSpec, E, eta: Optional[float] = None) -> np.ndarray:
        """θ(1, E) for θ' = η⁻¹(E − W)cos²θ + η sin²θ, θ(0) = −π/2, vectorized over E.

        A delta of strength σ at z shifts tan θ by −σ/η on the same branch; a hard
        one sends θ to the zero of u on that branch.
        """
        E = np.atleast_1d(np.asarray(E, dtype=float))
        if np.any(E <= 0):
            raise DomainError("Prüfer energies must be positive")
        if eta is None:
            eta = math.sqrt(math.pi ** 2 + 3.0 * _finite_integral(potential))
        rate = max(float(np.max(np.abs(E))) / eta, eta)
        per_unit = max(self.steps, int(math.ceil(64.0 * rate)))

        deltas = potential.delta_part
        edges = np.concatenate(([0.0], np.asarray(deltas.positions, dtype=float), [1.0]))
        strengths = deltas.strengths
        theta = np.full(E.shape, -0.5 * math.pi)

        def rhs(W: float, th: np.ndarray) -> np.ndarray:
            c, s = np.cos(th), np.sin(th)
            return (E - W) * c * c / eta + eta * s * s

        for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            n = max(1, int(math.ceil((b - a) * per_unit)))
            dt = (b - a) / n
            z = a + dt * np.arange(n)
            W0, Wm, W1 = potential.smooth_on(z), potential.smooth_on(z + 0.5 * dt), potential.smooth_on(z + dt)
            for j in range(n):
                k1 = rhs(W0[j], theta)
                k2 = rhs(Wm[j], theta + 0.5 * dt * k1)
                k3 = rhs(Wm[j], theta + 0.5 * dt * k2)
                k4 = rhs(W1[j], theta + dt * k3)
                theta = theta + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            if i < strengths.size:
                theta = self._delta_jump(theta, float(strengths[i]), eta)
        return theta

    @staticmethod
    def _delta_jump(theta: np.ndarray, sigma: float, eta: float) -> np.ndarray:
        base = math.pi * np.floor((theta + 0.5 * math.pi) / math.pi)
        if math.isinf(sigma):
            return base - 0.5 * math.pi
        return base + np.arctan(np.tan(theta - base) - sigma / eta)

    def eigs_by_shooting(self, potential: PotentialSpec, k: int = 2) -> SpectrumResult:
        """j-th eigenvalue from θ(1, E) = π/2 + jπ; θ is increasing in E."""
        if k < 1:
            raise DomainError(f"k must be positive, got {k}")
        if k > MAX_EIGENVALUES:
            raise DimensionError(f"at most {MAX_EIGENVALUES} eigenvalues are supported, got k={k}")
        eta = math.sqrt(math.pi ** 2 + 3.0 * _finite_integral(potential))
        targets = 0.5 * math.pi + math.pi * np.arange(k)

        lo_edge = 0.5 * math.pi ** 2
        if self.prufer_theta(potential, lo_edge, eta)[0] >= targets[0]:
            raise BracketError("lowest Prüfer angle already past π/2 at E = π²/2")
        hi_edge = max((k * math.pi) ** 2 + 2.0 * _finite_integral(potential), 2.0 * lo_edge)
        for _ in range(MAX_DOUBLINGS):
            if self.prufer_theta(potential, hi_edge, eta)[0] > targets[-1]:
                break
            hi_edge *= 2.0
        else:
            raise BracketError(f"no upper shooting bracket for k={k}")

        lo, hi = np.full(k, lo_edge), np.full(k, hi_edge)
        while np.max((hi - lo) / hi) > self.shooting_tol:
            mid = 0.5 * (lo + hi)
            above = self.prufer_theta(potential, mid, eta) > targets
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        values = 0.5 * (lo + hi)
        if k == 1:
            eta_b, bound = gap_lower_bound(potential.integral_W, potential.has_deltas)
            return SpectrumResult(eigenvalues=(float(values[0]),), gap=0.0, eta=eta_b, gap_bound=bound, method="shooting")
        return self._result(potential, values, 0.0, "shooting")

    # ---- mean-field Hamiltonian ---------------------------------------

    def mean_field_hamiltonian(
        self, psi0: GridFunction, config: ScattererConfig, gamma: float, tolerance: float = 1e-6
    ) -> MeanField:
        """h = −∂² + σΣδ + γψ₀² − (γ/2)∫ψ₀⁴, checked against ψ₀ on the GP discretization."""
        problem, _ = gp_problem(config, gamma, psi0.M)
        v = psi0.values
        hdiag = problem.mean_field_diag(v)
        lam = float(np.dot(v, hdiag * v) + 2.0 * np.dot(problem.off * v[:-1], v[1:]))
        shift = -0.5 * gamma * float(np.dot(problem.mass, v ** 4))

        idx, d, e = problem.free_tridiagonal(hdiag)
        w, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
        ground = np.zeros(problem.size)
        ground[idx] = vec[:, 0] / np.sqrt(problem.mass[idx])
        b = problem.mass
        cosine = abs(float(np.dot(b * ground, v))) / math.sqrt(float(np.dot(b * ground, ground) * np.dot(b * v, v)))

        mismatch = abs(float(w[0]) - lam) / abs(lam)
        if mismatch > tolerance or cosine < 1.0 - tolerance:
            logger.error(f"Mean-field check failed: eigenvalue mismatch {mismatch:.2e}, cosine {cosine:.10f}")
            raise ConsistencyError(f"psi0 is not the ground state of its mean-field Hamiltonian (mismatch {mismatch:.2e})")

        potential = PotentialSpec(smooth_part=gamma * v ** 2, delta_part=config)
        return MeanField(potential=potential, shift=shift, energy=float(w[0]) + shift, cosine=cosine)
