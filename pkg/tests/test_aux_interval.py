import math

import numpy as np
import pytest

from src.data.grid import sine_mode
from src.data.models import INF
from src.solvers.aux_interval import AuxIntervalSolver, kappa0_energy, trial_upper_bound
from src.solvers.functional import aux_problem
from src.solvers.minimizer import ProjectedGradientMinimizer
from src.utils.errors import DomainError, RangeError, TableError
from src.utils.table_cache import AuxTableCache


@pytest.fixture
def solver():
    """Uncached solver on a modest grid"""
    return AuxIntervalSolver(grid_points=512)


def test_hard_wall_ground_energy(solver):
    result = solver.solve_aux(0.0, INF, M=1024, richardson_extrapolate=True)
    assert result.energy == pytest.approx(math.pi ** 2, rel=1e-5)


def test_free_wall_ground_energy(solver):
    result = solver.solve_aux(0.0, 0.0)
    assert abs(result.energy) < 1e-12
    assert np.allclose(result.minimizer.full_values, 1.0, atol=1e-8)


def test_sine_quartic_integral(solver):
    result = solver.solve_aux(0.0, INF)
    assert result.quartic_integral == pytest.approx(1.5, rel=1e-5)


def test_minimizer_is_symmetric_and_nonnegative(solver):
    for alpha in (3.0, INF):
        psi = solver.solve_aux(10.0, alpha).minimizer
        full = psi.full_values
        assert np.all(full >= -1e-12)
        assert np.max(np.abs(full - full[::-1])) < 1e-6


def test_kappa0_energy():
    assert kappa0_energy(0.0) == 0.0
    assert kappa0_energy(INF) == pytest.approx(math.pi ** 2)
    values = [kappa0_energy(a) for a in (0.1, 1.0, 10.0, 100.0, 1e4)]
    assert all(0 < v < math.pi ** 2 for v in values)
    assert values == sorted(values)
    with pytest.raises(DomainError):
        kappa0_energy(-1.0)


def test_kappa0_energy_matches_grid(solver):
    direct = solver.solve_aux(0.0, 10.0, M=1024).energy
    assert direct == pytest.approx(kappa0_energy(10.0), rel=1e-5)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 10.0, INF])
def test_energy_sandwich(solver, alpha):
    """κ/2 ≤ e(κ, α) − e(0, α) ≤ 3κ/4 holds on the grid as well"""
    base = solver.solve_aux(0.0, alpha).energy
    for kappa in (0.1, 1.0, 10.0, 100.0):
        energy = solver.solve_aux(kappa, alpha).energy
        slack = 1e-6 * max(1.0, kappa)
        assert energy >= base + 0.5 * kappa - slack
        assert energy <= base + 0.75 * kappa + slack
        assert energy >= 0.5 * kappa - slack


def test_free_walls_give_flat_state(solver):
    assert solver.solve_aux(8.0, 0.0).energy == pytest.approx(4.0, rel=1e-10)


def test_soft_walls_below_hard_walls(solver):
    hard = solver.solve_aux(10.0, INF).energy
    energies = [solver.solve_aux(10.0, a).energy for a in (1.0, 10.0, 100.0)]
    assert energies == sorted(energies)
    assert energies[-1] <= hard + 1e-8


def test_trial_function_bounds_energy(solver):
    for kappa in (10.0, 100.0):
        assert solver.solve_aux(kappa, INF).energy <= trial_upper_bound(kappa)
    assert trial_upper_bound(1e4) <= 0.5 * 1e4 * (1.0 + 10.0 / math.sqrt(1e4))


def test_independent_starts_agree(solver):
    rng = np.random.default_rng(5)
    first = solver.solve_aux(20.0, INF, start=0.5 + rng.random(512))
    second = solver.solve_aux(20.0, INF, start=0.5 + rng.random(512))
    assert first.energy == pytest.approx(second.energy, rel=1e-9)
    assert np.sqrt(first.minimizer.h * np.sum((first.minimizer.values - second.minimizer.values) ** 2)) < 1e-5


@pytest.mark.parametrize("alpha", [2.0, INF])
def test_gradient_matches_finite_differences(alpha):
    problem = aux_problem(7.0, alpha, 64)
    rng = np.random.default_rng(11)
    v = problem.normalize(rng.random(problem.size) + 0.1)
    d = rng.standard_normal(problem.size)
    eps = 1e-6
    numeric = (problem.energy(v + eps * d) - problem.energy(v - eps * d)) / (2 * eps)
    assert float(np.dot(problem.gradient(v), d)) == pytest.approx(numeric, rel=1e-6)


def test_rejects_negative_parameters(solver):
    with pytest.raises(DomainError):
        solver.solve_aux(-1.0, INF)


def test_hard_wall_table(aux_solver):
    table = aux_solver.table_for(INF, 100.0)
    kappas = np.asarray(table.kappa_knots)
    energies = np.asarray(table.energy_knots)
    assert table.kappa_max >= 100.0
    assert energies[0] == pytest.approx(math.pi ** 2, rel=1e-5)
    assert np.all(np.diff(energies) > 0)
    assert np.all((np.asarray(table.derivative_knots) >= 0.5) & (np.asarray(table.derivative_knots) <= 0.75))
    assert np.all((energies[1:] - energies[0]) / kappas[1:] >= 0.5 - 1e-6)
    assert table.rel_error < 1e-3


def test_table_interpolates_between_knots(aux_solver):
    table = aux_solver.table_for(INF, 100.0)
    for kappa in (0.37, 4.2, 57.0):
        direct = aux_solver.solve_aux(kappa, INF, M=table.grid_points).energy
        assert float(table.energy(kappa)) == pytest.approx(direct, rel=1e-4)


def test_table_range_is_capped(aux_solver):
    with pytest.raises(RangeError):
        aux_solver.ensure_table(None, INF, 1e9)


def test_table_check_rejects_convex_energy():
    kappas = np.linspace(0.0, 10.0, 40)
    energies = 1.0 + 0.5 * kappas + 0.01 * kappas ** 2
    with pytest.raises(TableError):
        AuxIntervalSolver._check_table(INF, kappas, energies, np.full(40, 0.6))


def test_table_cache_round_trip(tmp_path):
    cache = AuxTableCache(str(tmp_path / "cache"))
    solver = AuxIntervalSolver(grid_points=128, table_knots=32, cache=cache)
    table = solver.build_aux_table(4.0, 10.0)
    cache.save(table)
    assert cache.load(4.0) == table
    assert cache.load(8.0) is None
    assert len(cache.list_tables()) == 1

    fresh = AuxIntervalSolver(grid_points=128, table_knots=32, cache=cache)
    assert fresh.table_for(4.0, 5.0) == table
    assert cache.delete(4.0)
    assert not cache.delete(4.0)


def test_unreadable_cache_is_ignored(tmp_path):
    cache = AuxTableCache(str(tmp_path))
    (tmp_path / "aux_alphainf.json").write_text("{not json")
    assert cache.load(INF) is None


def test_fitted_constants(solver):
    assert solver.fit_kappa0_constant([0.1, 1.0, 10.0, 100.0]) > 0
    deficit = solver.fit_deficit_constant([1.0, 10.0], [1.0, 10.0, 100.0], M=256)
    assert 0 < deficit < 10.0


def test_deficit_constant_over_wide_range(solver):
    deficit = solver.fit_deficit_constant([1.0, 10.0, 100.0], [1e2, 1e3, 1e4], M=256)
    assert 0.0 <= deficit <= 10.0


def test_minimizer_stops_at_rounding_floor():
    """A residual target below what the energy sum can resolve still converges"""
    problem = aux_problem(1e-3, INF, 1024)
    minimizer = ProjectedGradientMinimizer(tol_root=1e-300)
    result = minimizer.minimize(problem, sine_mode(1024).values)
    assert result.residual <= minimizer.residual_floor(problem, result.values)
    assert result.energy == pytest.approx(math.pi ** 2 + 0.75e-3, rel=1e-5)


def test_default_table_reaches_large_kappa():
    table = AuxIntervalSolver().build_aux_table(INF, 1e4)
    assert table.grid_points == 1024
    assert table.kappa_max == pytest.approx(1e4)
    assert table.rel_error < 1e-2
    assert np.all(np.diff(table.energy_knots) > 0)


def test_coarse_cached_table_is_rebuilt(tmp_path):
    cache = AuxTableCache(str(tmp_path))
    coarse = AuxIntervalSolver(grid_points=128, table_knots=32).build_aux_table(4.0, 10.0)
    cache.save(coarse)
    fine = AuxIntervalSolver(grid_points=256, table_knots=32, cache=cache)
    assert not fine.resolves(coarse)
    table = fine.table_for(4.0, 5.0)
    assert table.grid_points == 256
    assert cache.load(4.0).grid_points == 256
