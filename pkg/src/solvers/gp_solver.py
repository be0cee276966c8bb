import math
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from src.data.grid import cell_integrals, resample
from src.data.models import INF, MIN_GRID_POINTS, AuxTable, GPResult, GridFunction, IntervalOccupation, ModelParams, ScattererConfig
from src.solvers.aux_interval import kappa0_energy
from src.solvers.functional import QuadraticProblem, gp_problem
from src.solvers.minimizer import MinimizationResult, ProjectedGradientMinimizer
from src.solvers.thermo import ThermoSolver, legendre_on_table, nbar_on_table
from src.utils.errors import ConvergenceError, DegenerateConfigurationError

ALPHA_STEP = 0.25  # log2 spacing of the soft-wall table grid
ALPHA_FLOOR = 1e-2
MU_GRID = 256


def quantize_alpha(alpha: float) -> float:
    """Round α down onto the grid 2^(k/4); e and g are nondecreasing in α, so bounds stay valid."""
    if math.isinf(alpha):
        return INF
    if alpha < ALPHA_FLOOR:
        return 0.0
    return 2.0 ** (math.floor(math.log2(alpha) / ALPHA_STEP) * ALPHA_STEP)


def _edges(config: ScattererConfig, M: int) -> np.ndarray:
    """Interval edges; hard scatterers sit on the node they were snapped to."""
    edges = config.edges.copy()
    if math.isinf(config.strength) and config.m:
        h = 1.0 / (M + 1)
        edges[1:-1] = np.round(edges[1:-1] / h) * h
    return edges


def assemble_energy(psi: GridFunction, config: ScattererConfig, params: ModelParams) -> float:
    problem, _ = gp_problem(config, params.gamma, psi.M)
    if np.any(psi.values[problem.pinned] != 0.0):
        return INF
    return problem.energy(psi.values)


def energy_gradient(psi: GridFunction, config: ScattererConfig, params: ModelParams) -> np.ndarray:
    problem, _ = gp_problem(config, params.gamma, psi.M)
    return problem.gradient(psi.values)


def localization_metrics(psi: GridFunction, config: ScattererConfig) -> Tuple[IntervalOccupation, float]:
    edges = _edges(config, psi.M)
    masses = np.maximum(cell_integrals(psi, edges)["mass"], 0.0)
    lengths = np.diff(edges)
    pr = 1.0 / (masses.size * float(np.sum(masses ** 2)))
    return IntervalOccupation(lengths=tuple(lengths), masses=tuple(masses)), pr


def interval_energies(psi: GridFunction, config: ScattererConfig, params: ModelParams) -> IntervalOccupation:
    """Per-interval energies of the rescaled restrictions ψ_j at κ_j = n_jℓ_jγ, α_j = ℓ_jσ.

    Σ_j (n_j/ℓ_j²)·E_j reproduces the full discrete energy.
    """
    edges = _edges(config, psi.M)
    parts = cell_integrals(psi, edges)
    local = parts["kinetic"] + 0.5 * params.gamma * parts["quartic"]
    if config.m and not math.isinf(config.strength):
        delta = config.strengths * parts["values_at_edges"][1:-1] ** 2
        local[:-1] += 0.5 * delta
        local[1:] += 0.5 * delta
    lengths = np.diff(edges)
    masses = np.maximum(parts["mass"], 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.where(masses > 0, lengths ** 2 * local / masses, 0.0)
    return IntervalOccupation(lengths=tuple(lengths), masses=tuple(masses), per_interval_energy=tuple(per))


class GPSolver:
    """Minimizes the random GP functional and brackets it by interval decompositions."""

    def __init__(self, thermo: Optional[ThermoSolver] = None, random_starts: int = 3, seed: int = 0):
        self.thermo = thermo or ThermoSolver()
        self.random_starts = random_starts
        self.seed = seed

    @property
    def aux(self):
        return self.thermo.aux

    def _hard_table(self, kappa_needed: float) -> AuxTable:
        return self.aux.table_for(INF, max(kappa_needed, 1.0))

    # ---- upper bounds -------------------------------------------------

    def decomposition_upper(
        self, config: ScattererConfig, params: ModelParams, table: Optional[AuxTable], mu: float
    ) -> float:
        """Trial state built from the thermodynamic occupations of the interior intervals.

        Without interaction the trial state is the sine mode of the widest interval.
        """
        gamma = params.gamma
        if gamma <= 0:
            return math.pi ** 2 / float(config.gaps.max()) ** 2
        if config.m == 0:
            table = self.thermo.covering_table(table, INF, gamma)
            return float(table.energy(gamma))
        ell = config.gaps[1:-1]
        if ell.size == 0:
            raise DegenerateConfigurationError("no interior interval to occupy")
        table = self.thermo.covering_table(table, INF, float(mu * ell.max() ** 2))
        n = nbar_on_table(mu * ell ** 2, table) / (ell * gamma)
        N = float(n.sum())
        if N <= 0:
            raise DegenerateConfigurationError(f"no interior interval exceeds the threshold at mu={mu:.4g}")
        kappa = n * ell * gamma / N
        return float(np.sum(n / (N * ell ** 2) * table.energy(kappa)))

    def normalization_statistic(self, config: ScattererConfig, gamma: float, mu: float) -> float:
        """N = Σ_{interior} n̄(μℓ_j²)/(ℓ_jγ)."""
        ell = config.gaps[1:-1]
        if ell.size == 0:
            return 0.0
        table = self._hard_table(float(mu * ell.max() ** 2))
        return float(np.sum(nbar_on_table(mu * ell ** 2, table) / (ell * gamma)))

    def optimal_occupations(self, config: ScattererConfig, params: ModelParams) -> np.ndarray:
        """Minimizer {n_j} of Σ (n_j/ℓ_j²) e(n_jℓ_jγ, ∞) over the simplex, via its multiplier."""
        ell, gamma = config.gaps, params.gamma
        if gamma <= 0:
            n = np.zeros_like(ell)
            n[int(np.argmax(ell))] = 1.0
            return n
        lmax = float(ell.max())
        lo = math.pi ** 2 / lmax ** 2
        hi = (math.pi ** 2 + 1.5 * lmax * gamma) / lmax ** 2
        table = self._hard_table(hi * lmax ** 2)

        def excess(mu: float) -> float:
            return float(np.sum(nbar_on_table(mu * ell ** 2, table) / (ell * gamma))) - 1.0

        while excess(lo) > 0:
            lo *= 0.5
        mu = brentq(excess, lo, hi, xtol=1e-14 * hi, rtol=1e-13)
        n = nbar_on_table(mu * ell ** 2, table) / (ell * gamma)
        return n / n.sum()

    def optimized_upper(self, config: ScattererConfig, params: ModelParams) -> float:
        ell, gamma = config.gaps, params.gamma
        if gamma <= 0:
            return math.pi ** 2 / float(ell.max()) ** 2
        n = self.optimal_occupations(config, params)
        kappa = n * ell * gamma
        table = self._hard_table(float(kappa.max()))
        return float(np.sum(n / ell ** 2 * table.energy(kappa)))

    # ---- lower bound --------------------------------------------------

    def _soft_walls(self, config: ScattererConfig) -> np.ndarray:
        ell = config.gaps
        if config.m == 0 or math.isinf(config.strength):
            return np.full(ell.size, INF)
        strengths = config.strengths
        # an interval feels the weaker of its two scatterers; walls at 0 and 1 are hard
        left = np.concatenate(([INF], strengths))
        right = np.concatenate((strengths, [INF]))
        return np.array([quantize_alpha(a) for a in np.minimum(left, right) * ell])

    def decomposition_lower(
        self, config: ScattererConfig, params: ModelParams, mu_hint: Optional[float] = None
    ) -> float:
        """Dual lower bound sup_μ [μ + Σ_j (γℓ_j³)^{-1} g(μℓ_j², ℓ_jσ)]."""
        ell, gamma = config.gaps, params.gamma
        alphas = self._soft_walls(config)
        floors = np.array([kappa0_energy(a) for a in alphas])
        if gamma <= 0:
            return float(np.min(floors / ell ** 2))

        lmax_idx = int(np.argmax(ell))
        mu_lo = float(np.min(floors / ell ** 2))
        mu_hi = (floors[lmax_idx] + 1.5 * ell[lmax_idx] * gamma) / ell[lmax_idx] ** 2
        mu_ref = mu_hint if mu_hint is not None else mu_hi
        mu_max = max(4.0 * mu_ref, mu_hi)

        groups: Dict[float, np.ndarray] = {}
        for alpha in np.unique(alphas):
            idx = np.flatnonzero(alphas == alpha)
            if mu_max * ell[idx].max() ** 2 > kappa0_energy(alpha) * (1.0 - 1e-3):
                groups[alpha] = idx
        tables = {
            alpha: self.aux.table_for(alpha, max(float(mu_max * ell[idx].max() ** 2), 1.0))
            for alpha, idx in groups.items()
        }

        def dual(mu: float) -> float:
            total = mu
            for alpha, idx in groups.items():
                g = legendre_on_table(mu * ell[idx] ** 2, tables[alpha])
                total += float(np.sum(g / (gamma * ell[idx] ** 3)))
            return total

        def excess(mu: float) -> float:
            total = -1.0
            for alpha, idx in groups.items():
                total += float(np.sum(nbar_on_table(mu * ell[idx] ** 2, tables[alpha]) / (ell[idx] * gamma)))
            return total

        candidates: List[float] = list(np.geomspace(max(mu_ref / 8.0, mu_lo * 0.5), mu_max, MU_GRID))
        if groups and excess(mu_lo * 0.999) < 0 < excess(mu_hi):
            candidates.append(brentq(excess, mu_lo * 0.999, mu_hi, xtol=1e-14 * mu_hi, rtol=1e-13))
        return max(dual(mu) for mu in candidates)

    # ---- minimization -------------------------------------------------

    def _starts(self, config: ScattererConfig, params: ModelParams, problem: QuadraticProblem) -> List[np.ndarray]:
        M = problem.size
        x = np.arange(1, M + 1) / (M + 1)
        starts = [self._linear_ground_state(problem)]

        n = self.optimal_occupations(config, params)
        edges = config.edges
        shaped = np.zeros(M)
        for j, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
            inside = (x > a) & (x < b)
            shaped[inside] = math.sqrt(2.0 * n[j] / (b - a)) * np.sin(np.pi * (x[inside] - a) / (b - a))
        if np.any(shaped[~problem.pinned] != 0):
            starts.append(shaped)

        for k in range(self.random_starts):
            rng = np.random.default_rng([self.seed, k])
            starts.append(np.sin(np.pi * x) * (0.5 + rng.random(M)))
        return starts

    @staticmethod
    def _linear_ground_state(problem: QuadraticProblem) -> np.ndarray:
        idx, d, e = problem.free_tridiagonal()
        _, vec = eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
        v = np.zeros(problem.size)
        v[idx] = np.abs(vec[:, 0]) / np.sqrt(problem.mass[idx])
        return v

    def _minimize(self, problem: QuadraticProblem, starts: List[np.ndarray], params: ModelParams) -> MinimizationResult:
        engine = ProjectedGradientMinimizer(tol_energy=params.tol_energy, tol_root=params.tol_root, max_iter=params.max_iter)
        best: Optional[MinimizationResult] = None
        failure: Optional[ConvergenceError] = None
        for i, start in enumerate(starts):
            try:
                result = engine.minimize(problem, start)
            except ConvergenceError as e:
                logger.warning(f"GP start {i} failed: {str(e)}")
                failure = e
                continue
            if best is None or result.energy < best.energy - 1e-14 * abs(best.energy):
                best = result
        if best is None:
            raise failure
        return best

    def minimize_gp(self, config: ScattererConfig, params: ModelParams, with_bounds: bool = True) -> GPResult:
        M = params.grid_points
        problem, snap = gp_problem(config, params.gamma, M)
        starts = self._starts(config, params, problem)
        best = self._minimize(problem, starts, params)
        values = np.abs(best.values)
        energy = problem.energy(values)
        psi = GridFunction(values=values)

        coarse_M = max(MIN_GRID_POINTS, (M - 1) // 2)
        coarse_problem, _ = gp_problem(config, params.gamma, coarse_M)
        coarse = self._minimize(coarse_problem, [resample(psi, coarse_M)], params)
        eps = abs(energy - coarse.energy) + 1e-8 * abs(energy)

        upper = thermo_upper = lower = None
        if with_bounds:
            upper = self.optimized_upper(config, params)
            mu = None
            if params.gamma > 0:
                mu = self.thermo.solve_mu(params.gamma, params.nu)
                try:
                    thermo_upper = self.decomposition_upper(config, params, None, mu)
                except DegenerateConfigurationError as e:
                    logger.debug(f"Thermodynamic trial state unavailable: {str(e)}")
            lower = self.decomposition_lower(config, params, mu)
            eps += self.aux.table_error() * max(abs(upper), abs(lower))

        occupations = interval_energies(psi, config, params)
        _, pr = localization_metrics(psi, config)
        logger.info(f"GP minimum {energy:.8g} (m={config.m}, gamma={params.gamma:g}, PR={pr:.3f})")
        return GPResult(
            energy=energy,
            minimizer=psi,
            occupations=occupations,
            participation_ratio=pr,
            upper_bound=upper,
            thermo_upper_bound=thermo_upper,
            lower_bound=lower,
            discretization_error=eps,
            snap_distance=snap,
            iterations=best.iterations,
            starts=len(starts),
        )
