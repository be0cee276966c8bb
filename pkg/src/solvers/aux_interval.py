import math
from typing import Dict, Iterable, Optional

import numpy as np
from loguru import logger
from scipy.optimize import brentq, minimize_scalar

from src.data.grid import resample
from src.data.models import INF, AuxResult, AuxTable, GridFunction
from src.solvers.functional import aux_problem
from src.solvers.minimizer import ProjectedGradientMinimizer
from src.utils.errors import DomainError, RangeError, TableError

KAPPA_MIN = 1e-2
TABLE_SLACK = 1e-6
BASE_KAPPA_MAX = 100.0


def kappa0_energy(alpha: float) -> float:
    """e(0, α) = b², with b ∈ [0, π] solving b·tan(b/2) = α/2."""
    if alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha}")
    if math.isinf(alpha):
        return math.pi ** 2
    if alpha == 0:
        return 0.0
    b = brentq(lambda b: b * math.sin(0.5 * b) - 0.5 * alpha * math.cos(0.5 * b), 0.0, math.pi, xtol=1e-15)
    return b * b


def richardson(coarse: float, fine: float) -> float:
    """Second-order extrapolation for values on grids M and 2M+1 (h halves exactly)."""
    return (4.0 * fine - coarse) / 3.0


def trial_upper_bound(kappa: float) -> float:
    """Energy of the best piecewise-linear trial function: ramps of width ε, flat in between."""

    def trial(eps: float) -> float:
        c2 = 1.0 / (1.0 - 4.0 * eps / 3.0)
        return 2.0 * c2 / eps + 0.5 * kappa * c2 * c2 * (1.0 - 1.6 * eps)

    res = minimize_scalar(trial, bounds=(1e-9, 0.5), method="bounded", options={"xatol": 1e-12})
    return float(min(res.fun, trial(0.5)))


def _start_shape(alpha: float, M: int) -> np.ndarray:
    if math.isinf(alpha):
        x = np.arange(1, M + 1) / (M + 1)
        return np.sin(np.pi * x)
    b = math.sqrt(kappa0_energy(alpha))
    x = np.arange(M + 2) / (M + 1)
    return np.cos(b * (x - 0.5))


class AuxIntervalSolver:
    """Solves the single-interval problem e(κ, α) and keeps memoized κ-tables per α."""

    def __init__(
        self,
        grid_points: int = 1024,
        table_knots: int = 96,
        tol_energy: float = 1e-10,
        tol_root: float = 1e-8,
        max_iter: int = 5000,
        max_extensions: int = 8,
        cache=None,
    ):
        self.grid_points = grid_points
        self.table_knots = table_knots
        self.max_extensions = max_extensions
        self.kappa_cap = BASE_KAPPA_MAX * 4.0 ** max_extensions
        self.minimizer = ProjectedGradientMinimizer(tol_energy=tol_energy, tol_root=tol_root, max_iter=max_iter)
        self.cache = cache
        self._tables: Dict[float, AuxTable] = {}

    def solve_aux(
        self,
        kappa: float,
        alpha: float = INF,
        M: Optional[int] = None,
        start: Optional[np.ndarray] = None,
        richardson_extrapolate: bool = False,
    ) -> AuxResult:
        if kappa < 0 or alpha < 0:
            raise DomainError(f"kappa and alpha must be nonnegative, got kappa={kappa}, alpha={alpha}")
        M = M or self.grid_points
        problem = aux_problem(kappa, alpha, M)
        v0 = _start_shape(alpha, M) if start is None else start
        result = self.minimizer.minimize(problem, v0)

        v = result.values if np.sum(result.values) >= 0 else -result.values
        if problem.free_boundary:
            psi = GridFunction(values=v[1:-1], boundary=(float(v[0]), float(v[-1])))
        else:
            psi = GridFunction(values=v)
        energy = result.energy
        if richardson_extrapolate:
            fine = self.solve_aux(kappa, alpha, M=2 * M + 1, start=self._resample(psi, 2 * M + 1, problem.free_boundary))
            energy = richardson(energy, fine.energy)

        return AuxResult(
            kappa=kappa,
            alpha=alpha,
            energy=energy,
            minimizer=psi,
            quartic_integral=float(np.dot(problem.mass, v ** 4)),
            iterations=result.iterations,
            residual=result.residual,
        )

    @staticmethod
    def _resample(psi: GridFunction, M: int, free_boundary: bool) -> np.ndarray:
        interior = resample(psi, M)
        if free_boundary:
            return np.concatenate(([psi.boundary[0]], interior, [psi.boundary[1]]))
        return interior

    def table_grid(self, kappa_max: float) -> int:
        """Grid size resolving the healing length √(2/κ) with at least eight nodes."""
        return max(self.grid_points, int(math.ceil(8.0 * math.sqrt(0.5 * kappa_max))))

    def build_aux_table(self, alpha: float, kappa_max: float, knots: Optional[int] = None) -> AuxTable:
        knots = knots or self.table_knots
        if knots < 32:
            raise DomainError(f"an auxiliary table needs at least 32 knots, got {knots}")
        if kappa_max <= 0:
            raise DomainError(f"kappa_max must be positive, got {kappa_max}")
        M = self.table_grid(kappa_max)
        kappas = np.concatenate(([0.0], np.geomspace(min(KAPPA_MIN, kappa_max / 1e3), kappa_max, knots - 1)))

        energies = np.empty(knots)
        quartic = np.empty(knots)
        start = None
        for i, kappa in enumerate(kappas):
            res = self.solve_aux(float(kappa), alpha, M=M, start=start)
            energies[i] = res.energy
            quartic[i] = res.quartic_integral
            start = self._resample(res.minimizer, M, not math.isinf(alpha))

        derivatives = 0.5 * quartic
        self._check_table(alpha, kappas, energies, derivatives)
        centered = np.gradient(energies, kappas)
        logger.debug(f"alpha={alpha}: max |HF - centered| derivative gap {np.max(np.abs(centered - derivatives)):.2e}")
        derivatives = np.clip(derivatives, 0.5, 0.75)

        coarse = self.solve_aux(float(kappas[-1]), alpha, M=(M - 1) // 2)
        rel_error = abs(coarse.energy - energies[-1]) / abs(energies[-1])

        logger.info(f"Built aux table alpha={alpha} kappa_max={kappa_max:.3g} knots={knots} M={M}")
        return AuxTable(
            alpha=alpha,
            kappa_knots=tuple(kappas),
            energy_knots=tuple(energies),
            derivative_knots=tuple(derivatives),
            grid_points=M,
            rel_error=rel_error,
        )

    @staticmethod
    def _check_table(alpha: float, kappas: np.ndarray, energies: np.ndarray, derivatives: np.ndarray) -> None:
        slopes = np.diff(energies) / np.diff(kappas)
        scale = np.maximum(1.0, np.abs(slopes))
        if np.any(np.diff(slopes) > TABLE_SLACK * scale[1:]):
            raise TableError(f"e(kappa, {alpha}) is not concave on the knots")
        if np.any(slopes < -TABLE_SLACK):
            raise TableError(f"e(kappa, {alpha}) is not nondecreasing on the knots")
        if np.any(np.diff(np.diff(kappas * energies) / np.diff(kappas)) <= 0):
            raise TableError(f"kappa*e(kappa, {alpha}) is not strictly convex on the knots")
        if np.any(derivatives < 0.5 - TABLE_SLACK) or np.any(derivatives > 0.75 + TABLE_SLACK):
            raise TableError(f"derivative of e(kappa, {alpha}) leaves [1/2, 3/4]")
        secant = (energies[1:] - energies[0]) / kappas[1:]
        if np.any(secant < 0.5 - TABLE_SLACK) or np.any(secant > 0.75 + TABLE_SLACK):
            raise TableError(f"(e(kappa) - e(0))/kappa leaves [1/2, 3/4] for alpha={alpha}")
        # Fritsch-Carlson condition for a monotone Hermite interpolant
        a, b = derivatives[:-1] / slopes, derivatives[1:] / slopes
        if np.any(a ** 2 + b ** 2 > 9.0):
            raise TableError(f"Hermite interpolant of e(kappa, {alpha}) would not be monotone")

    def ensure_table(self, table: Optional[AuxTable], alpha: float, kappa_needed: float) -> AuxTable:
        """Return a table for alpha covering kappa_needed, growing κ_max by 4× per extension."""
        if table is not None and table.kappa_max >= kappa_needed:
            return table
        kappa_max = table.kappa_max if table is not None else BASE_KAPPA_MAX
        while kappa_max < kappa_needed and kappa_max < self.kappa_cap:
            kappa_max *= 4.0
        if kappa_max < kappa_needed:
            raise RangeError(f"kappa={kappa_needed:.3g} beyond table cap for alpha={alpha}")
        return self._load_or_build(alpha, kappa_max)

    def table_for(self, alpha: float, kappa_needed: float = 100.0) -> AuxTable:
        table = self._tables.get(alpha)
        if table is None and self.cache is not None:
            table = self.cache.load(alpha)
            if table is not None and not self.resolves(table):
                logger.info(
                    f"Rebuilding cached table alpha={alpha}: M={table.grid_points}, {len(table.kappa_knots)} knots "
                    f"below M={self.table_grid(table.kappa_max)}, {self.table_knots} knots"
                )
                table = None
            if table is not None:
                self._tables[alpha] = table
        table = self.ensure_table(table, alpha, kappa_needed)
        self._tables[alpha] = table
        return table

    def resolves(self, table: AuxTable) -> bool:
        """True when table is at least as fine as the one this solver would build."""
        return table.grid_points >= self.table_grid(table.kappa_max) and len(table.kappa_knots) >= self.table_knots

    def table_error(self) -> float:
        """Largest relative discretization error among the tables built so far."""
        return max((t.rel_error for t in self._tables.values()), default=0.0)

    def _load_or_build(self, alpha: float, kappa_max: float) -> AuxTable:
        table = self.build_aux_table(alpha, kappa_max)
        self._tables[alpha] = table
        if self.cache is not None:
            self.cache.save(table)
        return table

    def fit_deficit_constant(self, kappas: Iterable[float], alphas: Iterable[float], M: Optional[int] = None) -> float:
        """Largest (1 − e(κ,α)/e(κ,∞))·√α over the grid; the hard-wall comparison constant."""
        worst = 0.0
        alphas = list(alphas)
        for kappa in kappas:
            hard = self.solve_aux(kappa, INF, M=M).energy
            for alpha in alphas:
                soft = self.solve_aux(kappa, alpha, M=M).energy
                worst = max(worst, (1.0 - soft / hard) * math.sqrt(alpha))
        logger.info(f"Fitted hard-wall deficit constant C={worst:.4f}")
        return worst

    @staticmethod
    def fit_kappa0_constant(alphas: Iterable[float]) -> float:
        """Smallest e(0,α)(1+α)/α over the sample; must stay positive."""
        c = min(kappa0_energy(a) * (1.0 + a) / a for a in alphas if a > 0)
        logger.info(f"Fitted e(0, alpha) constant C={c:.4f}")
        return c

