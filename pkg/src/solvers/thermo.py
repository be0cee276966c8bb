import math
from typing import NamedTuple, Optional

import numpy as np
from loguru import logger
from scipy.integrate import trapezoid
from scipy.optimize import brentq
from scipy.special import roots_laguerre

from src.data.models import INF, AuxTable, Phase, ThermoSolution
from src.solvers.aux_interval import AuxIntervalSolver
from src.utils.errors import BracketError, ConsistencyError, DomainError
from src.utils.settings import OrderWindows, PhaseThresholds

BISECTION_STEPS = 64
MAX_EXPANSIONS = 60
DUALITY_TOLERANCE = 1e-4


class ThermoEnergy(NamedTuple):
    mu: float
    e0: float
    e0_primal: float
    normalization: float
    mean_interval: float


def f_scaling(x: float) -> float:
    """1 below the knee, x/(1 + ln x)² above it."""
    if x < 0:
        raise DomainError(f"f is defined for x >= 0, got {x}")
    if x <= 1.0:
        return 1.0
    return x / (1.0 + math.log(x)) ** 2


def occupied_fraction(mu: float, nu: float) -> float:
    if mu <= 0:
        raise DomainError(f"chemical potential must be positive, got {mu}")
    return math.exp(-math.pi * nu / math.sqrt(mu))


def nbar_on_table(mu, table: AuxTable) -> np.ndarray:
    """Vectorized bisection for F'(n) = e(n) + n·e'(n) = μ; zero where μ ≤ e(0)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    e0 = table.e0
    hi = np.maximum(mu - e0, 0.0)
    lo = np.zeros_like(hi)
    active = hi > 0
    if not active.any():
        return np.zeros_like(mu)
    a, b, target = lo[active], hi[active], mu[active]
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (a + b)
        above = table.energy(mid) + mid * table.derivative(mid) >= target
        b = np.where(above, mid, b)
        a = np.where(above, a, mid)
    out = np.zeros_like(mu)
    out[active] = 0.5 * (a + b)
    return out


def legendre_on_table(mu, table: AuxTable) -> np.ndarray:
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n = nbar_on_table(mu, table)
    g = n * table.energy(n) - mu * n
    return np.minimum(np.where(n > 0, g, 0.0), 0.0)


class ThermoSolver:
    """Thermodynamic layer: occupation law, Legendre transform, μ(γ, ν), e₀(γ, ν) and the phase label.

    Integrals against the exponential spacing law are computed in t = νℓ with a
    Gauss-Laguerre rule shifted to the occupation threshold t₀ = πν/√μ, so that
    the kink of n̄ sits on the lower limit. Nodes beyond `t_cut` carry weights
    below e^{-t_cut} and are dropped, which keeps the table range finite.
    """

    def __init__(
        self,
        aux: Optional[AuxIntervalSolver] = None,
        thresholds: Optional[PhaseThresholds] = None,
        windows: Optional[OrderWindows] = None,
        quadrature_nodes: int = 64,
        t_cut: float = 40.0,
        tol_root: float = 1e-8,
        method: str = "laguerre",
        trapezoid_points: int = 20001,
    ):
        self.aux = aux or AuxIntervalSolver()
        self.thresholds = thresholds or PhaseThresholds()
        self.windows = windows or OrderWindows()
        self.tol_root = tol_root
        self.method = method
        self.trapezoid_points = trapezoid_points
        nodes, weights = roots_laguerre(quadrature_nodes)
        keep = nodes <= t_cut
        self._nodes, self._weights = nodes[keep], weights[keep]
        self._trap_nodes = np.linspace(0.0, t_cut, trapezoid_points)
        self.t_cut = t_cut

    def covering_table(self, table: Optional[AuxTable], alpha: float, kappa_needed: float) -> AuxTable:
        if table is not None and table.alpha == alpha and table.kappa_max >= kappa_needed:
            return table
        return self.aux.table_for(alpha, kappa_needed)

    def nbar(self, mu: float, alpha: float = INF, table: Optional[AuxTable] = None) -> float:
        table = self.covering_table(table, alpha, max(mu, 1.0))
        return float(nbar_on_table(mu, table)[0])

    def g_legendre(self, mu: float, alpha: float = INF, table: Optional[AuxTable] = None) -> float:
        table = self.covering_table(table, alpha, max(mu, 1.0))
        return float(legendre_on_table(mu, table)[0])

    def _shifted_nodes(self, mu: float, nu: float):
        t0 = math.pi * nu / math.sqrt(mu)
        if self.method == "trapezoid":
            return t0, self._trap_nodes, None
        return t0, self._nodes, self._weights

    def _integrate(self, values: np.ndarray, weights: Optional[np.ndarray], s: np.ndarray) -> float:
        if weights is None:
            return float(trapezoid(np.exp(-s) * values, s))
        return float(np.dot(weights, values))

    def moments(self, mu: float, gamma: float, nu: float, table: Optional[AuxTable] = None) -> ThermoEnergy:
        """N(μ), ℓ̄, primal and dual energies at a given μ."""
        t0, s, w = self._shifted_nodes(mu, nu)
        t = t0 + s
        kappa = mu * t ** 2 / nu ** 2
        table = self.covering_table(table, INF, float(kappa.max()))
        n = nbar_on_table(kappa, table)
        g = np.minimum(np.where(n > 0, n * table.energy(n) - kappa * n, 0.0), 0.0)
        lam = math.exp(-t0)

        N = (nu ** 2 / gamma) * lam * self._integrate(n / t, w, s)
        mean_interval = (nu / gamma) * lam * self._integrate(n, w, s)
        primal = (nu ** 4 / gamma) * lam * self._integrate(n * table.energy(n) / t ** 3, w, s)
        dual = mu + (nu ** 4 / gamma) * lam * self._integrate(g / t ** 3, w, s)
        return ThermoEnergy(mu=mu, e0=dual, e0_primal=primal, normalization=N, mean_interval=mean_interval)

    def normalization(self, mu: float, gamma: float, nu: float, table: Optional[AuxTable] = None) -> float:
        return self.moments(mu, gamma, nu, table).normalization

    def solve_mu(self, gamma: float, nu: float, table: Optional[AuxTable] = None) -> float:
        if gamma <= 0 or nu <= 0:
            raise DomainError(f"solve_mu needs gamma > 0 and nu > 0, got gamma={gamma}, nu={nu}")

        def excess(mu: float) -> float:
            return self.normalization(mu, gamma, nu, table) - 1.0

        lo = math.pi ** 2
        for _ in range(MAX_EXPANSIONS):
            if excess(lo) < 0:
                break
            lo *= 0.5
        else:
            raise BracketError(f"no lower bracket for mu at gamma={gamma}, nu={nu}")
        hi = max(gamma + nu ** 2, 2.0 * lo)
        for _ in range(MAX_EXPANSIONS):
            if excess(hi) >= 0:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise BracketError(f"no upper bracket for mu at gamma={gamma}, nu={nu}")

        mu = brentq(excess, lo, hi, xtol=1e-14 * lo, rtol=1e-13, maxiter=200)
        residual = abs(excess(mu))
        if residual > self.tol_root:
            logger.warning(f"N(mu) - 1 = {residual:.2e} at gamma={gamma}, nu={nu}")
        logger.debug(f"Solved mu={mu:.6g} for gamma={gamma}, nu={nu}")
        return mu

    def e0_deterministic(self, gamma: float, nu: float, table: Optional[AuxTable] = None) -> ThermoEnergy:
        mu = self.solve_mu(gamma, nu, table)
        energy = self.moments(mu, gamma, nu, table)
        mismatch = abs(energy.e0 - energy.e0_primal) / abs(energy.e0)
        if mismatch > DUALITY_TOLERANCE:
            raise ConsistencyError(
                f"primal {energy.e0_primal:.8g} and dual {energy.e0:.8g} energies differ by {mismatch:.2e}"
            )
        return energy

    def classify_phase(self, gamma: float, nu: float, table: Optional[AuxTable] = None) -> ThermoSolution:
        energy = self.e0_deterministic(gamma, nu, table)
        lam = occupied_fraction(energy.mu, nu)
        lam_nu = lam * nu
        t = self.thresholds
        if lam_nu < t.few_intervals_max_lambda_nu:
            phase = Phase.FEW_INTERVALS
        elif lam >= t.extended_min_lambda:
            phase = Phase.EXTENDED
        elif lam < t.localized_max_lambda:
            phase = Phase.FRAGMENTED_LOCALIZED
        else:
            phase = Phase.TRANSITION

        checks = self.window_checks(gamma, nu, energy, lam)
        for name, ok in checks.items():
            if not ok:
                logger.warning(f"Order window '{name}' missed at gamma={gamma}, nu={nu}")
        logger.info(f"gamma={gamma:g} nu={nu:g}: mu={energy.mu:.6g} lambda={lam:.4g} phase={phase.value}")
        return ThermoSolution(
            gamma=gamma,
            nu=nu,
            mu=energy.mu,
            lambda_frac=lam,
            lambda_nu=lam_nu,
            e0=energy.e0,
            e0_primal=energy.e0_primal,
            phase=phase,
            mean_interval=energy.mean_interval,
            normalization=energy.normalization,
            window_checks=checks,
        )

    def window_checks(self, gamma: float, nu: float, energy: ThermoEnergy, lam: float) -> dict:
        w = self.windows
        y = nu ** 2 / gamma
        checks = {
            "energy_to_mu": w.contains(w.energy_to_mu, energy.e0 / energy.mu),
            "energy_order": w.contains(w.order, energy.e0 / (gamma * f_scaling(y))),
            "mean_interval": w.contains(w.order, energy.mean_interval * nu / (1.0 + math.log1p(y))),
        }
        if 0.0 < lam < 1.0:
            checks["scaling_relation"] = w.contains(w.order, gamma * math.log(1.0 / lam) ** 2 / (lam * nu ** 2))
        if y > math.e and lam < self.thresholds.localized_max_lambda:
            localized_mu = math.pi ** 2 * (nu / math.log(y)) ** 2
            checks["localized_mu"] = w.contains(w.order, energy.mu / localized_mu)
        return checks
