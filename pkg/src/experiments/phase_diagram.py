import math
from typing import Iterable, Optional

import numpy as np
import pandas as pd
from loguru import logger

from src.data.generator import ScattererGenerator
from src.data.models import ModelParams
from src.experiments.ensemble import default_sigma
from src.solvers.gp_solver import GPSolver
from src.utils.errors import DisbecError

PHASE_COLUMNS = ["gamma", "nu", "mu", "lambda", "e0", "phase", "lambda_nu", "participation_ratio"]
NODES_PER_SCATTERER = 8


def phase_diagram(
    gamma_grid: Iterable[float],
    nu_grid: Iterable[float],
    sigma_rule: str = "default",
    sigma: float = math.inf,
    seed: int = 1,
    solver: Optional[GPSolver] = None,
    grid_points: int = 2047,
) -> pd.DataFrame:
    """Thermodynamic phase per (γ, ν) cell plus the participation ratio of one GP sample.

    The GP sample is skipped (NaN) when the grid cannot give every interval a few nodes.
    """
    solver = solver or GPSolver()
    generator = ScattererGenerator()
    rows = []
    for nu in nu_grid:
        for gamma in gamma_grid:
            solution = solver.thermo.classify_phase(gamma, nu)
            pr = float("nan")
            if nu * NODES_PER_SCATTERER <= grid_points:
                s = default_sigma(gamma, nu) if sigma_rule == "default" else sigma
                params = ModelParams(gamma=gamma, sigma=s, nu=nu, grid_points=grid_points)
                try:
                    config = generator.sample_config(nu, seed, s)
                    pr = solver.minimize_gp(config, params, with_bounds=False).participation_ratio
                except DisbecError as e:
                    logger.warning(f"GP sample failed at gamma={gamma:g}, nu={nu:g}: {str(e)}")
            rows.append(
                {
                    "gamma": gamma,
                    "nu": nu,
                    "mu": solution.mu,
                    "lambda": solution.lambda_frac,
                    "e0": solution.e0,
                    "phase": solution.phase.value,
                    "lambda_nu": solution.lambda_nu,
                    "participation_ratio": pr,
                }
            )
    df = pd.DataFrame(rows, columns=PHASE_COLUMNS)
    logger.info(f"Phase diagram: {len(df)} cells, phases {sorted(df['phase'].unique())}")
    return df


def lambda_monotone(df: pd.DataFrame) -> bool:
    """λ nondecreasing in γ along every fixed-ν row."""
    for _, row in df.groupby("nu"):
        lam = row.sort_values("gamma")["lambda"].to_numpy()
        if np.any(np.diff(lam) < 0):
            return False
    return True
