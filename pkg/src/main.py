"""Command-line entry point: `python -m src.main <mode> [flags] --config file.json --out dir`."""
import argparse
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd
from loguru import logger
from pydantic import ValidationError

from src.analysis.poisson_stats import poisson_report
from src.data.generator import ScattererGenerator
from src.data.models import ExperimentConfig, Mode, OutputFormat, PotentialSpec, ScattererConfig, SpectrumResult
from src.experiments.ensemble import run_ensemble_sweep, solver_for
from src.experiments.phase_diagram import phase_diagram
from src.solvers.spectral import SpectralSolver, depletion_table, energy_bounds
from src.utils.errors import DisbecError, OutputError
from src.utils.output_manager import OutputManager, file_stem
from src.utils.settings import Settings, load_settings

EXIT_OK, EXIT_FATAL, EXIT_FAILURES = 0, 1, 2

# flag -> (section of ExperimentConfig or None for top level, field)
OVERRIDES = {
    "gamma": ("params", "gamma"),
    "sigma": ("params", "sigma"),
    "nu": ("params", "nu"),
    "grid_points": ("params", "grid_points"),
    "samples": ("ensemble", "samples"),
    "seed": ("ensemble", "base_seed"),
    "kappa": (None, "kappa"),
    "alpha": (None, "alpha"),
    "nu_values": (None, "nu_values"),
    "gamma_rule": (None, "gamma_rule"),
    "sigma_rule": (None, "sigma_rule"),
    "gamma_grid": (None, "gamma_grid"),
    "nu_grid": (None, "nu_grid"),
    "k": (None, "k"),
    "particles": (None, "particles"),
    "max_gap_lengths": (None, "max_gap_lengths"),
    "trials": (None, "trials"),
    "failure_threshold": (None, "failure_threshold"),
    "config_json": (None, "config_json"),
    "out": (None, "output_dir"),
    "format": (None, "format"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="ExperimentConfig JSON file; flags override its fields")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--json-out", type=Path, dest="json_out", help="path for the JSON result file")
    common.add_argument("--format", choices=["json", "csv"])
    common.add_argument("--seed", type=int, help="base seed")
    common.add_argument("--grid-points", "--grid", type=int, dest="grid_points")
    common.add_argument("--gamma", type=float)
    common.add_argument("--sigma", type=str, help="scatterer strength, or 'inf'")
    common.add_argument("--nu", type=float)
    common.add_argument("--config-json", type=Path, dest="config_json", help="ScattererConfig JSON file")
    common.add_argument("--failure-threshold", type=float, dest="failure_threshold")

    parser = argparse.ArgumentParser(prog="disbec", description="Disordered 1D Bose gas numerics")
    sub = parser.add_subparsers(dest="mode", required=True)

    aux = sub.add_parser("aux", parents=[common], help="single-interval energy e(kappa, alpha)")
    aux.add_argument("--kappa", type=float)
    aux.add_argument("--alpha", type=str)

    sub.add_parser("thermo", parents=[common], help="mu, e0 and phase label for (gamma, nu)")
    sub.add_parser("gp", parents=[common], help="GP minimizer of one realization with bounds")

    ens = sub.add_parser("ensemble", parents=[common], help="seeded ensemble of GP minima")
    ens.add_argument("--samples", type=int)
    ens.add_argument("--nu-values", type=float, nargs="+", dest="nu_values")
    ens.add_argument("--gamma-rule", choices=["fixed", "nu_squared"], dest="gamma_rule")
    ens.add_argument("--sigma-rule", choices=["fixed", "default"], dest="sigma_rule")

    gap = sub.add_parser("gap", parents=[common], help="low spectrum of the mean-field Hamiltonian")
    gap.add_argument("--k", type=int)

    dep = sub.add_parser("depletion", parents=[common], help="up-to-constant depletion bounds")
    dep.add_argument("--k", type=int)
    dep.add_argument("--N", type=float, dest="particles")

    stats = sub.add_parser("poisson-stats", parents=[common], help="statistical checks of the scatterer law")
    stats.add_argument("--samples", type=int)
    stats.add_argument("--max-gap-lengths", type=float, nargs="+", dest="max_gap_lengths")
    stats.add_argument("--trials", type=int)

    phase = sub.add_parser("phase-diagram", parents=[common], help="phase labels over a (gamma, nu) grid")
    phase.add_argument("--gamma-grid", type=float, nargs="+", dest="gamma_grid")
    phase.add_argument("--nu-grid", type=float, nargs="+", dest="nu_grid")
    phase.add_argument("--sigma-rule", choices=["fixed", "default"], dest="sigma_rule")
    return parser


def build_config(args: argparse.Namespace, settings: Optional[Settings] = None) -> ExperimentConfig:
    """Load --config if given, then apply every flag that was set."""
    data = {}
    if args.config is not None:
        data = ExperimentConfig.model_validate_json(args.config.read_text()).model_dump()
    elif settings is not None:
        data["output_dir"] = settings.output_dir
    data["mode"] = args.mode
    for flag, (section, field) in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if section is None:
            data[field] = value
        else:
            data.setdefault(section, {})[field] = value
    json_out = getattr(args, "json_out", None)
    if json_out is not None:
        data["format"] = OutputFormat.JSON
        if args.out is None:
            data["output_dir"] = json_out.parent
    return ExperimentConfig.model_validate(data)


def _scatterers(config: ExperimentConfig) -> ScattererConfig:
    if config.config_json is not None:
        return ScattererConfig.from_json(config.config_json.read_text())
    p = config.params
    return ScattererGenerator().sample_config(p.nu, config.ensemble.base_seed, p.sigma)


def _stem(config: ExperimentConfig) -> str:
    p = config.params
    return file_stem(config.mode.value, p.gamma, p.sigma, p.nu, config.ensemble.base_seed)


def _spectrum(config: ExperimentConfig, cache_dir: str) -> Tuple[SpectrumResult, float]:
    """Spectrum of h for the chosen realization, and the constant shift −(γ/2)∫ψ₀⁴."""
    scatterers = _scatterers(config)
    gamma = config.params.gamma
    if gamma > 0:
        gp = solver_for(cache_dir).minimize_gp(scatterers, config.params, with_bounds=False)
        mean_field = SpectralSolver().mean_field_hamiltonian(gp.minimizer, scatterers, gamma)
        potential, shift = mean_field.potential, mean_field.shift
    else:
        potential, shift = PotentialSpec(delta_part=scatterers), 0.0
    return SpectralSolver().eigs(potential, max(config.k, 2)), shift


def run_aux(config: ExperimentConfig, settings: Settings, out: OutputManager) -> Tuple[List[Path], float]:
    result = solver_for(str(settings.cache_dir)).aux.solve_aux(config.kappa, config.alpha, M=config.params.grid_points)
    stem = f"aux_k{config.kappa:g}_a{config.alpha:g}"
    psi = result.minimizer
    return [out.write_json(stem, result), out.write_dat(f"{stem}_profile", ["x", "phi"], psi.full_nodes, psi.full_values)], 0.0


def run_thermo(config: ExperimentConfig, settings: Settings, out: OutputManager) -> Tuple[List[Path], float]:
    p = config.params
    solution = solver_for(str(settings.cache_dir)).thermo.classify_phase(p.gamma, p.nu)
    if config.format == OutputFormat.CSV:
        row = solution.model_dump(mode="json", exclude={"window_checks"})
        return [out.write_csv(_stem(config), pd.DataFrame([row]))], 0.0
    return [out.write_json(_stem(config), solution)], 0.0


def run_gp(config: ExperimentConfig, settings: Settings, out: OutputManager) -> Tuple[List[Path], float]:
    result = solver_for(str(settings.cache_dir)).minimize_gp(_scatterers(config), config.params)
    if not result.sandwich_holds():
        logger.warning(f"Energy {result.energy:.8g} escapes its decomposition bounds")
    return out.emit_gp(result, _stem(config)), 0.0


def run_ensemble_mode(config: ExperimentConfig, settings: Settings, out: OutputManager) -> Tuple[List[Path], float]:
    nu_values = config.nu_values or [config.ensemble.nu]
    reports = run_ensemble_sweep(config, nu_values, settings.threads, str(settings.cache_dir))
    total = sum(len(r.records) for r in reports)
    failed = sum(r.failures for r in reports)
    return out.emit_ensemble(reports, config.mode.value, config.ensemble.base_seed), failed / total


def run_gap(config: ExperimentConfig, settings: Settings, out: OutputManager) -> Tuple[List[Path], float]:
    spectrum, shift = _spectrum(config, str(settings.cache_dir))
    payload = {"spectrum": spectrum.model_dump(mode="json"), "shift": shift, "holds": spectrum.gap >= spectrum.gap_bound}
    return [out.write_json(_stem(config), payload)], 0.0


def run_depletion(config: ExperimentConfig, settings: Settings, out: OutputManager) -> Tuple[List[Path], float]:
    spectrum, shift = _spectrum(config, str(settings.cache_dir))
    gamma, N = config.params.gamma, config.particles
    rows = depletion_table(spectrum, gamma, N)
    df = pd.DataFrame(rows, columns=["k", "depletion_bound"])
    lower, upper = energy_bounds(spectrum.eigenvalues[0] + shift, gamma, N)
    payload = {
        "N": N,
        "gamma": gamma,
        "eigenvalues": list(spectrum.eigenvalues),
        "energy_window": [lower, upper],
        "depletion": [{"k": k, "bound": b} for k, b in rows],
        "up_to_constant": True,
    }
    stem = _stem(config)
    return [out.write_json(stem, payload), out.write_csv(stem, df)], 0.0


def run_poisson(config: ExperimentConfig, settings: Settings, out: OutputManager) -> Tuple[List[Path], float]:
    stats, verdicts = poisson_report(
        config.params.nu,
        config.ensemble.samples,
        config.ensemble.base_seed,
        config.max_gap_lengths,
        config.trials,
        config.statistics,
    )
    payload = {"stats": stats.model_dump(mode="json"), "verdicts": verdicts}
    failed = sum(1 for ok in verdicts.values() if not ok) / len(verdicts)
    return [out.write_json(_stem(config), payload)], failed


def run_phase(config: ExperimentConfig, settings: Settings, out: OutputManager) -> Tuple[List[Path], float]:
    df = phase_diagram(
        config.gamma_grid,
        config.nu_grid,
        config.sigma_rule,
        config.params.sigma,
        config.ensemble.base_seed,
        solver_for(str(settings.cache_dir)),
        config.params.grid_points,
    )
    return [out.write_csv(f"phase_diagram_seed{config.ensemble.base_seed}", df)], 0.0


HANDLERS: Dict[Mode, Callable[[ExperimentConfig, Settings, OutputManager], Tuple[List[Path], float]]] = {
    Mode.AUX: run_aux,
    Mode.THERMO: run_thermo,
    Mode.GP: run_gp,
    Mode.ENSEMBLE: run_ensemble_mode,
    Mode.GAP: run_gap,
    Mode.DEPLETION: run_depletion,
    Mode.POISSON_STATS: run_poisson,
    Mode.PHASE_DIAGRAM: run_phase,
}


def run(config: ExperimentConfig, settings: Settings, json_out: Optional[Path] = None) -> int:
    out = OutputManager(str(config.output_dir))
    paths, failed = HANDLERS[config.mode](config, settings, out)
    if json_out is not None:
        results = [p for p in paths if p.suffix == ".json"]
        if not results:
            raise OutputError(f"{config.mode.value} writes no JSON result", str(json_out))
        paths[paths.index(results[0])] = out.relocate(results[0], json_out)
    logger.info(f"{config.mode.value}: wrote {len(paths)} files to {config.output_dir}")
    if failed > config.failure_threshold:
        logger.warning(f"Failure fraction {failed:.3f} above threshold {config.failure_threshold:.3f}")
        return EXIT_FAILURES
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    settings = load_settings()
    logger.remove()
    logger.add(sys.stderr, level=settings.log_level)
    args = build_parser().parse_args(argv)
    try:
        config = build_config(args, settings)
        return run(config, settings, args.json_out)
    except (DisbecError, ValidationError, OSError) as e:
        logger.error(f"Fatal: {str(e)}")
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
