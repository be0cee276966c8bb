import pytest

from src.solvers.aux_interval import AuxIntervalSolver
from src.solvers.gp_solver import GPSolver
from src.solvers.spectral import SpectralSolver
from src.solvers.thermo import ThermoSolver
from src.utils.table_cache import AuxTableCache


@pytest.fixture(scope="session")
def table_cache(tmp_path_factory):
    """Tables shared by every test in the session"""
    return AuxTableCache(str(tmp_path_factory.mktemp("tables")))


@pytest.fixture(scope="session")
def aux_solver(table_cache):
    return AuxIntervalSolver(cache=table_cache)


@pytest.fixture(scope="session")
def thermo(aux_solver):
    return ThermoSolver(aux_solver)


@pytest.fixture(scope="session")
def gp_solver(thermo):
    return GPSolver(thermo)


@pytest.fixture(scope="session")
def spectral():
    return SpectralSolver()
