import math
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from typing import List, NamedTuple, Optional

from loguru import logger

from src.data.generator import ScattererGenerator
from src.data.models import INF, EnsembleReport, ExperimentConfig, ModelParams, Phase, SampleRecord
from src.solvers.aux_interval import AuxIntervalSolver
from src.solvers.gp_solver import GPSolver
from src.solvers.thermo import ThermoSolver
from src.utils.errors import DegenerateConfigurationError, DisbecError, DomainError
from src.utils.table_cache import AuxTableCache


class SampleTask(NamedTuple):
    index: int
    seed: int
    params: ModelParams
    mu: Optional[float]
    e0: float
    phase: Optional[Phase]
    method: str
    cache_dir: Optional[str]


def default_sigma(gamma: float, nu: float) -> float:
    """Ten times the smallest σ of the convergence regime."""
    if gamma <= 0:
        return INF
    return 10.0 * nu / (1.0 + math.log1p(nu ** 2 / gamma))


def check_regime(gamma: float, sigma: float, nu: float) -> List[str]:
    """Human-readable violations of γ ≥ 5ν/(ln ν)² and σ ≥ 5ν/(1 + ln(1 + ν²/γ))."""
    warnings = []
    if nu <= math.e:
        warnings.append(f"nu={nu:g} is too small for the asymptotic regime (ln nu <= 1)")
    elif gamma < 5.0 * nu / math.log(nu) ** 2:
        warnings.append(f"gamma={gamma:g} below 5 nu/(ln nu)^2 = {5.0 * nu / math.log(nu) ** 2:.4g}")
    if gamma > 0:
        floor = 5.0 * nu / (1.0 + math.log1p(nu ** 2 / gamma))
        if sigma < floor:
            warnings.append(f"sigma={sigma:g} below 5 nu/(1 + ln(1 + nu^2/gamma)) = {floor:.4g}")
    return warnings


def control_scale(nu: float) -> float:
    """Reference energy ν²/(ln ν)² of the non-interacting gas, set by the widest interval."""
    if nu <= math.e:
        raise DomainError(f"nu={nu:g} too small for the control scale (ln nu <= 1)")
    return nu ** 2 / math.log(nu) ** 2


def resolve_params(config: ExperimentConfig, nu: float) -> ModelParams:
    """Apply the γ and σ sweep rules at density ν."""
    base = config.params
    gamma = nu ** 2 if config.gamma_rule == "nu_squared" else base.gamma
    sigma = default_sigma(gamma, nu) if config.sigma_rule == "default" else base.sigma
    return base.model_copy(update={"gamma": gamma, "sigma": sigma, "nu": nu})


@lru_cache(maxsize=4)
def solver_for(cache_dir: Optional[str]) -> GPSolver:
    cache = AuxTableCache(cache_dir) if cache_dir else None
    return GPSolver(ThermoSolver(AuxIntervalSolver(cache=cache)))


def run_sample(task: SampleTask) -> SampleRecord:
    """One realization: GP minimum, ratio to e₀, and the normalization and trial statistics."""
    params = task.params
    try:
        config = ScattererGenerator(task.method).sample_config(params.nu, task.seed, params.sigma)
        solver = solver_for(task.cache_dir)
        result = solver.minimize_gp(config, params, with_bounds=False)
        N = E = None
        if task.mu is not None:
            N = solver.normalization_statistic(config, params.gamma, task.mu)
            try:
                E = solver.decomposition_upper(config, params, None, task.mu)
            except DegenerateConfigurationError as e:
                logger.debug(f"Sample {task.index}: {str(e)}")
        ratio = result.energy / task.e0 if math.isfinite(task.e0) else None
        return SampleRecord(
            index=task.index,
            seed=task.seed,
            m=config.m,
            energy=result.energy,
            e0=task.e0,
            ratio=ratio,
            N=N,
            E=E,
            participation_ratio=result.participation_ratio,
            phase=task.phase,
        )
    except DisbecError as e:
        logger.error(f"Sample {task.index} (seed {task.seed}) failed: {str(e)}")
        return SampleRecord(index=task.index, seed=task.seed, e0=task.e0, error=str(e))


def run_ensemble(
    config: ExperimentConfig, nu: Optional[float] = None, threads: int = 1, cache_dir: Optional[str] = None
) -> EnsembleReport:
    """Seeded ensemble at density ν; without interaction the ratios are taken against control_scale(ν)."""
    nu = nu if nu is not None else config.ensemble.nu
    params = resolve_params(config, nu)
    for warning in check_regime(params.gamma, params.sigma, nu):
        logger.warning(warning)

    mu, e0, phase = None, float("nan"), None
    if params.gamma > 0:
        thermo = solver_for(cache_dir).thermo
        solution = thermo.classify_phase(params.gamma, nu)
        mu, e0, phase = solution.mu, solution.e0, solution.phase
    elif nu > math.e:
        e0 = control_scale(nu)

    spec = config.ensemble.model_copy(update={"nu": nu})
    tasks = [
        SampleTask(i, spec.seed_for(i), params, mu, e0, phase, "exponential", cache_dir)
        for i in range(spec.samples)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(run_sample, tasks))
    else:
        records = [run_sample(t) for t in tasks]
    records.sort(key=lambda r: r.seed)

    aggregates = EnsembleReport.aggregate(records)
    logger.info(
        f"Ensemble nu={nu:g} gamma={params.gamma:g}: ratio {aggregates['ratio_mean']:.5g} "
        f"± {aggregates['ratio_std']:.3g} over {len(records)} samples ({int(aggregates['failures'])} failed)"
    )
    return EnsembleReport(gamma=params.gamma, sigma=params.sigma, nu=nu, e0=e0, records=records, aggregates=aggregates)


def run_ensemble_sweep(
    config: ExperimentConfig, nu_values: List[float], threads: int = 1, cache_dir: Optional[str] = None
) -> List[EnsembleReport]:
    return [run_ensemble(config, nu, threads, cache_dir) for nu in nu_values]
