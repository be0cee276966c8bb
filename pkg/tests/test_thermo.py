import math

import numpy as np
import pytest

from src.data.models import INF, Phase
from src.solvers.aux_interval import kappa0_energy
from src.solvers.thermo import ThermoSolver, f_scaling, occupied_fraction
from src.utils.errors import DomainError


def test_f_scaling():
    assert f_scaling(0.5) == 1.0
    assert f_scaling(1.0) == 1.0
    assert f_scaling(math.e) == pytest.approx(math.e / 4)
    with pytest.raises(DomainError):
        f_scaling(-1.0)


def test_occupied_fraction():
    assert occupied_fraction(1e12, 1.0) == pytest.approx(1.0, abs=1e-5)
    assert occupied_fraction(49.0, 7.0) == pytest.approx(math.exp(-math.pi))
    with pytest.raises(DomainError):
        occupied_fraction(0.0, 1.0)


def test_nbar_threshold_and_bounds(thermo):
    assert thermo.nbar(0.5 * math.pi ** 2) == 0.0
    for alpha in (1.0, 10.0, INF):
        e0 = kappa0_energy(alpha)
        for mu in (0.5 * e0 + 0.1, 2.0 * math.pi ** 2, 50.0, 500.0):
            excess = max(mu - e0, 0.0)
            n = thermo.nbar(mu, alpha)
            slack = 1e-4 * max(1.0, mu)
            assert (2.0 / 3.0) * excess - slack <= n <= excess + slack


def test_nbar_solves_the_stationarity_condition(thermo):
    mu = 2.0 * math.pi ** 2
    n = thermo.nbar(mu)
    table = thermo.aux.table_for(INF, mu)
    assert float(table.energy(n) + n * table.derivative(n)) == pytest.approx(mu, rel=1e-8)
    assert (2.0 / 3.0) * math.pi ** 2 <= n <= math.pi ** 2


def test_legendre_transform(thermo):
    assert thermo.g_legendre(0.9 * math.pi ** 2) == 0.0
    mu = 2.0 * math.pi ** 2
    g = thermo.g_legendre(mu)
    assert -0.5 * math.pi ** 4 <= g < 0.0

    grid = np.linspace(12.0, 200.0, 60)
    values = np.array([thermo.g_legendre(m) for m in grid])
    assert np.all(np.diff(values) <= 1e-9)
    assert np.all(np.diff(values, 2) <= 1e-6)


def test_normalization_is_solved(thermo):
    gamma, nu = 100.0, 50.0
    mu = thermo.solve_mu(gamma, nu)
    assert thermo.normalization(mu, gamma, nu) == pytest.approx(1.0, abs=1e-8)


def test_mu_of_order_gamma_on_the_diagonal(thermo):
    nu = 50.0
    mu = thermo.solve_mu(nu ** 2, nu)
    assert 0.05 <= mu / nu ** 2 <= 20.0


def test_solve_mu_rejects_bad_parameters(thermo):
    with pytest.raises(DomainError):
        thermo.solve_mu(0.0, 10.0)


@pytest.mark.parametrize("gamma,nu", [(100.0, 10.0), (400.0, 40.0)])
def test_energy_scaling(thermo, gamma, nu):
    """e₀(γ, ν) = γ·e₀(1, ν/√γ)"""
    full = thermo.e0_deterministic(gamma, nu).e0
    scaled = thermo.e0_deterministic(1.0, nu / math.sqrt(gamma)).e0
    assert full == pytest.approx(gamma * scaled, rel=1e-4)


@pytest.mark.parametrize("gamma", [10.0, 100.0, 1000.0])
@pytest.mark.parametrize("nu", [5.0, 20.0, 80.0])
def test_primal_and_dual_energies_agree(thermo, gamma, nu):
    energy = thermo.e0_deterministic(gamma, nu)
    assert energy.e0_primal == pytest.approx(energy.e0, rel=1e-4)
    assert 1 / 25 <= energy.e0 / (gamma * f_scaling(nu ** 2 / gamma)) <= 25.0
    assert 0.25 <= energy.e0 / energy.mu <= 4.0


def test_extended_phase(thermo):
    nu = 50.0
    solution = thermo.classify_phase(100.0 * nu ** 2, nu)
    assert solution.phase == Phase.EXTENDED
    assert solution.lambda_frac > 0.6


@pytest.mark.parametrize("nu", [25.0, 50.0, 100.0])
def test_diagonal_is_transition(thermo, nu):
    solution = thermo.classify_phase(nu ** 2, nu)
    assert solution.phase == Phase.TRANSITION


def test_few_intervals_phase(thermo):
    nu = 1e4
    solution = thermo.classify_phase(nu / math.log(nu) ** 2, nu)
    assert solution.phase == Phase.FEW_INTERVALS
    assert solution.lambda_nu < 1.0


def test_localized_chemical_potential(thermo):
    nu = 100.0
    gamma = nu ** 2 / 100.0
    solution = thermo.classify_phase(gamma, nu)
    assert solution.lambda_frac < 0.6
    expected = math.pi ** 2 * (nu / math.log(nu ** 2 / gamma)) ** 2
    assert 0.1 <= solution.mu / expected <= 10.0


def test_labels_follow_thresholds(thermo):
    t = thermo.thresholds
    for gamma, nu in [(2500.0, 50.0), (250.0, 50.0), (25.0, 50.0)]:
        s = thermo.classify_phase(gamma, nu)
        assert s.lambda_frac == pytest.approx(math.exp(-math.pi * nu / math.sqrt(s.mu)), rel=1e-12)
        assert math.pi ** 2 * nu ** 2 / math.log(1.0 / s.lambda_frac) ** 2 == pytest.approx(s.mu, rel=1e-12)
        if s.lambda_nu < t.few_intervals_max_lambda_nu:
            assert s.phase == Phase.FEW_INTERVALS
        elif s.lambda_frac >= t.extended_min_lambda:
            assert s.phase == Phase.EXTENDED
        elif s.lambda_frac < t.localized_max_lambda:
            assert s.phase == Phase.FRAGMENTED_LOCALIZED
        else:
            assert s.phase == Phase.TRANSITION


def test_lambda_increases_with_gamma(thermo):
    nu = 30.0
    lam = [thermo.classify_phase(g, nu).lambda_frac for g in (10.0, 100.0, 1000.0, 10000.0)]
    assert lam == sorted(lam)


def test_mean_interval_window(thermo):
    gamma, nu = 400.0, 40.0
    s = thermo.classify_phase(gamma, nu)
    assert 1 / 25 <= s.mean_interval * nu / (1.0 + math.log1p(nu ** 2 / gamma)) <= 25.0


def test_quadrature_rules_agree(aux_solver, thermo):
    trapezoid = ThermoSolver(aux_solver, method="trapezoid")
    gamma, nu = 100.0, 20.0
    mu = thermo.solve_mu(gamma, nu)
    assert trapezoid.normalization(mu, gamma, nu) == pytest.approx(1.0, rel=1e-3)
    assert trapezoid.moments(mu, gamma, nu).e0 == pytest.approx(thermo.moments(mu, gamma, nu).e0, rel=1e-3)


def test_occupied_fraction_matches_samples(thermo):
    """Fraction of exponential spacings with μℓ² > π² estimates λ"""
    nu, mu = 20.0, 900.0
    rng = np.random.default_rng(3)
    ell = rng.exponential(1.0 / nu, size=100000)
    lam = occupied_fraction(mu, nu)
    frac = float(np.mean(mu * ell ** 2 > math.pi ** 2))
    assert abs(frac - lam) <= 4.0 * math.sqrt(lam * (1 - lam) / ell.size)
