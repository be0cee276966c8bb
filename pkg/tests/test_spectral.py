import math

import numpy as np
import pytest

from src.data.generator import ScattererGenerator
from src.data.grid import config_from_positions
from src.data.models import GridFunction, ModelParams, PotentialSpec, ScattererConfig
from src.solvers.spectral import (
    SpectralSolver,
    depletion_bound,
    depletion_table,
    energy_bounds,
    gap_lower_bound,
    trial_energy_bound,
)
from src.utils.errors import ConsistencyError, DimensionError, DomainError, ResolutionError

FREE = PotentialSpec()


def _snapped(config: ScattererConfig, M: int) -> ScattererConfig:
    """Move every scatterer onto a node of the M-point grid so both solvers see the same positions"""
    h = 1.0 / (M + 1)
    z = np.unique(np.round(np.asarray(config.positions) / h).astype(int))
    z = z[(z >= 1) & (z <= M)]
    return ScattererConfig(positions=tuple(float(k * h) for k in z), strength=config.strength)


def test_free_laplacian(spectral):
    result = spectral.eigs(FREE, 2)
    assert result.eigenvalues[0] == pytest.approx(math.pi ** 2, rel=1e-4)
    assert result.eigenvalues[1] == pytest.approx(4 * math.pi ** 2, rel=1e-4)
    assert result.gap == pytest.approx(3 * math.pi ** 2, rel=1e-4)


def test_free_gap_bound(spectral):
    result = spectral.eigs(FREE, 2)
    assert result.eta == pytest.approx(math.pi)
    assert result.gap_bound == pytest.approx(0.01845, rel=1e-2)
    assert result.gap >= result.gap_bound


def test_richardson_sharpens_free_spectrum():
    solver = SpectralSolver(grid_points=256)
    plain = solver.eigs(FREE, 3).eigenvalues
    sharp = solver.eigs(FREE, 3, richardson_extrapolate=True).eigenvalues
    exact = [(k * math.pi) ** 2 for k in (1, 2, 3)]
    assert all(abs(s - e) < abs(p - e) for s, p, e in zip(sharp, plain, exact))


def test_eigs_argument_checks(spectral):
    with pytest.raises(DomainError):
        spectral.eigs(FREE, 1)
    with pytest.raises(DimensionError):
        spectral.eigs(FREE, 17)
    with pytest.raises(ResolutionError):
        spectral.eigs(FREE, 2, M=32)


def test_strong_central_delta_closes_gap():
    """Gap ≈ 32π²/σ for one strong scatterer in the middle"""
    sigma = 1e4
    potential = PotentialSpec(delta_part=ScattererConfig(positions=(0.5,), strength=sigma))
    result = SpectralSolver(grid_points=4095).eigs(potential, 2)
    assert 0.9 <= result.gap * sigma / (32 * math.pi ** 2) <= 1.1
    assert result.gap >= result.gap_bound


def test_gap_closes_as_total_strength_grows():
    """Ten coincident scatterers of strength σ act as one of strength 10σ"""
    solver = SpectralSolver(grid_points=4095)
    gaps = []
    for sigma in (10.0, 100.0, 1000.0):
        potential = PotentialSpec(delta_part=config_from_positions([0.5] * 10, sigma))
        result = solver.eigs(potential, 2)
        assert result.gap >= result.gap_bound
        gaps.append(result.gap)
    assert gaps[0] > gaps[1] > gaps[2]
    assert 0.9 <= gaps[2] * 1e4 / (32 * math.pi ** 2) <= 1.1


def test_hard_central_delta():
    potential = PotentialSpec(delta_part=ScattererConfig(positions=(0.5,)))
    result = SpectralSolver(grid_points=4095).eigs(potential, 2)
    assert result.eigenvalues[0] == pytest.approx(4 * math.pi ** 2, rel=1e-4)
    assert result.eigenvalues[1] == pytest.approx(4 * math.pi ** 2, rel=1e-4)


def test_prufer_angle_at_eigenvalues(spectral):
    theta = spectral.prufer_theta(FREE, [math.pi ** 2, 4 * math.pi ** 2])
    assert theta[0] == pytest.approx(0.5 * math.pi, abs=1e-6)
    assert theta[1] == pytest.approx(1.5 * math.pi, abs=1e-6)

    energies = np.linspace(1.0, 200.0, 50)
    assert np.all(np.diff(spectral.prufer_theta(FREE, energies)) > 0)


def test_shooting_free_spectrum(spectral):
    result = spectral.eigs_by_shooting(FREE, 3)
    exact = [(k * math.pi) ** 2 for k in (1, 2, 3)]
    assert result.eigenvalues == pytest.approx(exact, rel=1e-6)
    assert result.method == "shooting"


def test_shooting_matches_finite_differences():
    M = 4095
    config = _snapped(ScattererGenerator().sample_config(20.0, 3, 100.0), M)
    potential = PotentialSpec(delta_part=config)
    solver = SpectralSolver(grid_points=M)
    fd = solver.eigs(potential, 2)
    shot = solver.eigs_by_shooting(potential, 2)
    assert shot.eigenvalues == pytest.approx(fd.eigenvalues, rel=1e-4)


def test_shooting_with_smooth_potential():
    M = 2047
    x = np.arange(1, M + 1) / (M + 1)
    potential = PotentialSpec(smooth_part=30.0 * np.sin(np.pi * x) ** 2)
    solver = SpectralSolver(grid_points=M)
    fd = solver.eigs(potential, 2)
    shot = solver.eigs_by_shooting(potential, 2)
    assert shot.eigenvalues == pytest.approx(fd.eigenvalues, rel=1e-4)


def test_gap_bound_on_random_potentials():
    solver = SpectralSolver(grid_points=1023)
    generator = ScattererGenerator()
    rng = np.random.default_rng(17)
    x = np.arange(1, 1024) / 1024
    for seed in range(100):
        nu, sigma, gamma = rng.uniform(1.0, 30.0), rng.uniform(0.0, 200.0), rng.uniform(0.0, 100.0)
        config = generator.sample_config(nu, seed, sigma)
        potential = PotentialSpec(smooth_part=2.0 * gamma * np.sin(np.pi * x) ** 2, delta_part=config)
        result = solver.eigs(potential, 2)
        assert result.gap >= result.gap_bound
        assert 0 < result.eigenvalues[0] <= trial_energy_bound(potential.integral_W) + 1e-6


def test_gap_lower_bound_formula():
    eta, bound = gap_lower_bound(0.0)
    assert eta == pytest.approx(math.pi)
    assert bound == pytest.approx(math.pi * math.log1p(math.pi * math.exp(-2 * math.pi)))
    eta, bound = gap_lower_bound(10.0, has_deltas=True)
    assert bound == pytest.approx(eta * math.log1p(math.exp(-2 * eta)))
    assert gap_lower_bound(math.inf) == (math.inf, 0.0)
    with pytest.raises(DomainError):
        gap_lower_bound(-1.0)


def test_mean_field_hamiltonian_reproduces_ground_state(gp_solver):
    gamma = 10.0
    config = ScattererConfig()
    gp = gp_solver.minimize_gp(config, ModelParams(gamma=gamma, grid_points=511), with_bounds=False)
    mean_field = SpectralSolver().mean_field_hamiltonian(gp.minimizer, config, gamma)
    assert mean_field.cosine >= 1.0 - 1e-6
    assert mean_field.energy == pytest.approx(gp.energy, rel=1e-6)
    assert mean_field.shift < 0
    assert mean_field.potential.integral_smooth == pytest.approx(gamma, rel=1e-3)


def test_mean_field_rejects_wrong_state():
    x = np.arange(1, 512) / 512
    wrong = GridFunction(values=np.sqrt(2) * np.sin(2 * np.pi * x) ** 2 * 1.2)
    with pytest.raises(ConsistencyError):
        SpectralSolver().mean_field_hamiltonian(wrong, ScattererConfig(), 10.0)


def test_depletion_bounds():
    e0, e1 = math.pi ** 2, 4 * math.pi ** 2
    assert depletion_bound(e0, e1, 1.0, 1e6) == pytest.approx(1 / 300)
    assert depletion_bound(e0, e1, 1.0, 8e6) == pytest.approx(0.5 * depletion_bound(e0, e1, 1.0, 1e6))
    assert depletion_bound(e0, e1, 0.0, 1e6) == 0.0
    assert depletion_bound(e0, e1, 100.0, 1e6) == pytest.approx(depletion_bound(e0, e1, 1.0, 1e6) * 10)
    with pytest.raises(DomainError):
        depletion_bound(e1, e0, 1.0, 1e6)
    with pytest.raises(DomainError):
        depletion_bound(e0, e1, 1.0, 0.5)


def test_energy_window():
    lower, upper = energy_bounds(10.0, 1.0, 1e6)
    assert upper == 10.0
    assert lower == pytest.approx(10.0 * (1 - 0.01))


def test_depletion_table(spectral):
    spectrum = spectral.eigs(FREE, 4)
    rows = depletion_table(spectrum, 1.0, 1e6)
    assert [k for k, _ in rows] == [1, 2, 3]
    bounds = [b for _, b in rows]
    assert bounds == sorted(bounds, reverse=True)
