import math
from dataclasses import dataclass

import numpy as np
from loguru import logger
from scipy.linalg import solveh_banded

from src.solvers.functional import QuadraticProblem
from src.utils.errors import ConvergenceError

ARMIJO = 1e-4
MAX_HALVINGS = 40
EPS = float(np.finfo(float).eps)


@dataclass(frozen=True)
class MinimizationResult:
    values: np.ndarray
    energy: float
    residual: float
    iterations: int
    chemical_potential: float


class ProjectedGradientMinimizer:
    """Preconditioned projected gradient descent on the sphere Σ b v² = 1.

    The search direction is −P⁻¹r with r = H(v)v − λBv the residual of the
    nonlinear eigenvalue equation and P = H(v) + cB a banded positive definite
    preconditioner, projected onto the tangent space. Steps are retracted by
    renormalization and accepted by Armijo backtracking, so the energy
    decreases monotonically.

    Armijo can only see a decrease larger than the rounding error of the energy
    sum, which grows like eps·Σ|terms| ~ eps·(M+1)² for the kinetic part. The
    residual aims for tol_root; when the floor (floor² = floor_factor·eps·Σ|terms|)
    lies above it, a residual below the floor that has not improved for
    stall_window iterations counts as converged.
    """

    def __init__(
        self,
        tol_energy: float = 1e-10,
        tol_root: float = 1e-8,
        max_iter: int = 5000,
        shift: float = 1.0,
        patience: int = 10,
        floor_factor: float = 1.0,
        stall_window: int = 50,
    ):
        self.tol_energy = tol_energy
        self.tol_root = tol_root
        self.max_iter = max_iter
        self.shift = shift
        self.patience = patience
        self.floor_factor = floor_factor
        self.stall_window = stall_window

    def residual_floor(self, problem: QuadraticProblem, v: np.ndarray) -> float:
        """Smallest residual the energy comparison can resolve at v."""
        a = np.abs(v)
        terms = np.dot(np.abs(problem.diag), a * a) + 2.0 * np.dot(np.abs(problem.off), a[:-1] * a[1:])
        terms += 0.5 * abs(problem.coupling) * np.dot(problem.mass, a ** 4)
        return math.sqrt(self.floor_factor * EPS * float(terms))

    def _precondition(self, problem: QuadraticProblem, hdiag: np.ndarray, r: np.ndarray) -> np.ndarray:
        diag = hdiag + self.shift * problem.mass
        diag = np.where(problem.pinned, 1.0, diag)
        bands = np.empty((2, problem.size))
        bands[0, 0] = 0.0
        bands[0, 1:] = problem.off
        bands[1] = diag
        return solveh_banded(bands, r)

    def minimize(self, problem: QuadraticProblem, start: np.ndarray) -> MinimizationResult:
        v = problem.normalize(np.asarray(start, dtype=float))
        energy = problem.energy(v)
        quiet_steps = 0
        residual = math.inf
        lam = float("nan")
        slack = 8.0 * EPS
        best, stalled = math.inf, 0

        for it in range(1, self.max_iter + 1):
            hdiag = problem.mean_field_diag(v)
            hv = hdiag * v
            hv[:-1] += problem.off * v[1:]
            hv[1:] += problem.off * v[:-1]
            lam = float(np.dot(v, hv))
            r = hv - lam * problem.mass * v
            z = self._precondition(problem, hdiag, r)
            residual = math.sqrt(max(float(np.dot(r, z)), 0.0))
            if residual < 0.9 * best:
                best, stalled = residual, 0
            else:
                stalled += 1
            target = max(self.tol_root, self.residual_floor(problem, v))
            at_floor = residual < target and stalled >= self.stall_window

            if quiet_steps >= self.patience and (residual < self.tol_root or at_floor):
                logger.debug(f"Minimizer converged after {it} iterations, residual {residual:.2e}")
                return MinimizationResult(v, energy, residual, it, lam)

            d = -z
            d -= np.dot(problem.mass * v, d) * v
            slope = -2.0 * residual ** 2

            step, accepted = 1.0, False
            for _ in range(MAX_HALVINGS):
                trial = problem.normalize(v + step * d)
                trial_energy = problem.energy(trial)
                if trial_energy <= energy + ARMIJO * step * slope + slack * abs(energy):
                    accepted = True
                    break
                step *= 0.5

            if not accepted:
                if residual < target:
                    return MinimizationResult(v, energy, residual, it, lam)
                raise ConvergenceError("line search stagnated", residual=residual, iterations=it)

            decrease = (energy - trial_energy) / max(abs(energy), 1e-300)
            quiet_steps = quiet_steps + 1 if decrease < self.tol_energy else 0
            v, energy = trial, trial_energy

        raise ConvergenceError("maximum iterations reached", residual=residual, iterations=self.max_iter)
