import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.data.grid import build_grid, cell_integrals, config_from_positions, resample, sine_mode
from src.data.models import (
    INF,
    AuxTable,
    EnsembleReport,
    ExperimentConfig,
    GridFunction,
    ModelParams,
    SampleRecord,
    ScattererConfig,
)
from src.utils.errors import DomainError, ResolutionError
from src.utils.settings import OrderWindows, load_settings


def test_grid_resolution():
    """Grids below 16 interior nodes are rejected"""
    grid = build_grid(16)
    assert grid.h == pytest.approx(1 / 17)
    assert grid.nodes[0] == pytest.approx(grid.h)
    with pytest.raises(ResolutionError):
        build_grid(15)


def test_sine_mode_is_normalized():
    psi = sine_mode(255)
    assert psi.norm() == pytest.approx(1.0, rel=1e-12)


def test_config_validation():
    config = ScattererConfig(positions=(0.2, 0.5, 0.7), strength=10.0)
    assert config.m == 3
    assert config.gaps.sum() == pytest.approx(1.0)
    assert np.allclose(config.gaps, [0.2, 0.3, 0.2, 0.3])

    with pytest.raises(ValidationError):
        ScattererConfig(positions=(0.5, 0.2))
    with pytest.raises(ValidationError):
        ScattererConfig(positions=(0.0, 0.5))
    with pytest.raises(ValidationError):
        ScattererConfig(positions=(0.5,), strength=-1.0)


def test_empty_config_has_one_interval():
    config = ScattererConfig()
    assert config.m == 0
    assert list(config.gaps) == [1.0]


def test_coincident_points_merge():
    """Points closer than 1e-12 merge and their strengths add"""
    config = config_from_positions([0.3, 0.3 + 1e-14, 0.6], sigma=5.0)
    assert config.m == 2
    assert list(config.weights) == [2.0, 1.0]
    assert list(config.strengths) == [10.0, 5.0]
    with pytest.raises(DomainError):
        config_from_positions([0.3, 1.2], sigma=1.0)


def test_strength_accepts_inf_string():
    config = ScattererConfig.from_json('{"positions": [0.25, 0.75], "strength": "inf"}')
    assert math.isinf(config.strength)
    assert ScattererConfig.from_json(config.to_json()) == config
    assert ModelParams(sigma="inf").hard_walls


def test_grid_function_rejects_nan():
    with pytest.raises(ValidationError):
        GridFunction(values=[0.1, float("nan"), 0.2])


def test_cell_integrals_add_up():
    """Per-interval pieces sum to the whole-grid trapezoid sums for arbitrary edges"""
    psi = sine_mode(127)
    edges = np.array([0.0, 0.137, 0.5, 0.8123, 1.0])
    parts = cell_integrals(psi, edges)
    v, h = psi.values, psi.h
    assert parts["mass"].sum() == pytest.approx(1.0, rel=1e-12)
    assert parts["quartic"].sum() == pytest.approx(h * np.sum(v ** 4), rel=1e-12)
    assert parts["kinetic"].sum() == pytest.approx(np.sum(np.diff(psi.full_values) ** 2) / h, rel=1e-12)
    assert parts["values_at_edges"][0] == 0.0


def test_resample_keeps_shape():
    psi = sine_mode(255)
    fine = resample(psi, 511)
    x = np.arange(1, 512) / 512
    assert np.max(np.abs(fine - np.sqrt(2) * np.sin(np.pi * x))) < 1e-4


def test_aux_table_json(tmp_path):
    table = AuxTable(
        alpha=INF,
        kappa_knots=(0.0, 1.0, 2.0),
        energy_knots=(9.8696, 10.5, 11.1),
        derivative_knots=(0.75, 0.62, 0.58),
        grid_points=64,
        rel_error=1e-6,
    )
    again = AuxTable.from_json(table.to_json())
    assert again == table
    assert again.energy(1.0) == pytest.approx(10.5)
    assert again.derivative(0.0) == pytest.approx(0.75)


def test_aggregates_recompute():
    records = [
        SampleRecord(index=i, seed=10 + i, energy=1.0 + 0.1 * i, e0=1.0, ratio=1.0 + 0.1 * i, N=0.9 + 0.05 * i)
        for i in range(5)
    ]
    records.append(SampleRecord(index=5, seed=15, error="failed"))
    agg = EnsembleReport.aggregate(records)
    ratios = np.array([1.0, 1.1, 1.2, 1.3, 1.4])
    assert agg["samples"] == 6
    assert agg["failures"] == 1
    assert agg["ratio_mean"] == pytest.approx(ratios.mean(), abs=1e-12)
    assert agg["ratio_std"] == pytest.approx(ratios.std(ddof=1), abs=1e-12)
    assert agg["ratio_stderr"] == pytest.approx(ratios.std(ddof=1) / math.sqrt(5), abs=1e-12)


def test_experiment_config_defaults():
    config = ExperimentConfig.model_validate({"mode": "poisson-stats", "alpha": "inf"})
    assert math.isinf(config.alpha)
    assert config.params.grid_points == 2047
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"gamma_rule": "cubic"})
    with pytest.raises(ValidationError):
        ExperimentConfig.model_validate({"k": 17})


def test_order_window():
    assert OrderWindows.contains((0.25, 4.0), 1.0)
    assert not OrderWindows.contains((0.25, 4.0), 5.0)


def test_settings_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("DISBEC_THREADS", "3")
    monkeypatch.setenv("DISBEC_LOG_LEVEL", "debug")
    monkeypatch.setenv("DISBEC_OUTPUT_DIR", str(tmp_path))
    settings = load_settings(dotenv=False)
    assert settings.threads == 3
    assert settings.log_level == "DEBUG"
    assert settings.output_dir == tmp_path
