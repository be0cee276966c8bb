import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    field_serializer,
    field_validator,
    model_validator,
)
from scipy.interpolate import CubicHermiteSpline

from src.utils.settings import OrderWindows, PhaseThresholds, StatisticalThresholds

INF = math.inf
MIN_GRID_POINTS = 16


def _parse_strength(v: Any) -> float:
    if isinstance(v, str):
        if v.strip().lower() in ("inf", "+inf", "infinity"):
            return INF
        return float(v)
    return v


def _dump_strength(v: float) -> Any:
    return "inf" if math.isinf(v) else v


class Phase(str, Enum):
    EXTENDED = "Extended"
    TRANSITION = "Transition"
    FRAGMENTED_LOCALIZED = "FragmentedLocalized"
    FEW_INTERVALS = "FewIntervals"


class Mode(str, Enum):
    AUX = "aux"
    THERMO = "thermo"
    GP = "gp"
    ENSEMBLE = "ensemble"
    GAP = "gap"
    DEPLETION = "depletion"
    POISSON_STATS = "poisson-stats"
    PHASE_DIAGRAM = "phase-diagram"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class ModelParams(BaseModel):
    """Physical triple (γ, σ, ν) plus the numerical controls shared by every solver."""
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(default=0.0, ge=0)
    sigma: float = Field(default=INF, ge=0)
    nu: float = Field(default=1.0, gt=0)
    grid_points: int = Field(default=2047, ge=MIN_GRID_POINTS)
    tol_energy: float = Field(default=1e-10, gt=0)
    tol_root: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=5000, gt=0)

    @field_validator("sigma", mode="before")
    @classmethod
    def _parse_sigma(cls, v: Any) -> Any:
        return _parse_strength(v)

    @field_serializer("sigma")
    def _ser_sigma(self, v: float) -> Any:
        return _dump_strength(v)

    @property
    def hard_walls(self) -> bool:
        return math.isinf(self.sigma)


class ScattererConfig(BaseModel):
    """One disorder realization: sorted scatterer positions in (0, 1).

    `weights` holds multiplicities of merged coincident points; an empty tuple
    means every point carries weight one.
    """
    model_config = ConfigDict(frozen=True)

    positions: Tuple[float, ...] = ()
    strength: float = Field(default=INF, ge=0)
    weights: Tuple[float, ...] = ()

    @field_validator("strength", mode="before")
    @classmethod
    def _parse_strength_field(cls, v: Any) -> Any:
        return _parse_strength(v)

    @field_serializer("strength")
    def _ser_strength(self, v: float) -> Any:
        return _dump_strength(v)

    @model_validator(mode="after")
    def _check_positions(self) -> "ScattererConfig":
        z = np.asarray(self.positions, dtype=float)
        if z.size and (z[0] <= 0.0 or z[-1] >= 1.0):
            raise ValueError("scatterer positions must lie strictly inside (0, 1)")
        if z.size > 1 and np.any(np.diff(z) <= 0.0):
            raise ValueError("scatterer positions must be strictly increasing")
        if self.weights and len(self.weights) != z.size:
            raise ValueError("weights must match positions")
        return self

    @property
    def m(self) -> int:
        return len(self.positions)

    @property
    def strengths(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float) if self.weights else np.ones(self.m)
        return self.strength * w

    @property
    def gaps(self) -> np.ndarray:
        """ℓ_0 … ℓ_m; the last gap is the remainder so the gaps sum to one."""
        if self.m == 0:
            return np.array([1.0])
        z = np.asarray(self.positions, dtype=float)
        head = np.diff(np.concatenate(([0.0], z)))
        return np.append(head, 1.0 - head.sum())

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate(([0.0], np.asarray(self.positions, dtype=float), [1.0]))

    def to_json(self) -> str:
        data: Dict[str, Any] = {"positions": list(self.positions), "strength": _dump_strength(self.strength)}
        if self.weights:
            data["weights"] = list(self.weights)
        return json.dumps(data)

    @classmethod
    def from_json(cls, text: str) -> "ScattererConfig":
        return cls.model_validate(json.loads(text))


class GridFunction(BaseModel):
    """Wave function sampled on x_i = i·h, h = 1/(M+1), i = 1..M.

    `boundary` carries the two endpoint values; they are zero for Dirichlet
    functions and free unknowns for the soft-wall auxiliary problem.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray
    boundary: Tuple[float, float] = (0.0, 0.0)

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=float)
        if arr.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise ValueError("values must be finite")
        arr.setflags(write=False)
        return arr

    @field_serializer("values")
    def _ser_values(self, v: np.ndarray) -> List[float]:
        return v.tolist()

    @property
    def M(self) -> int:
        return self.values.size

    @property
    def h(self) -> float:
        return 1.0 / (self.M + 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(1, self.M + 1) * self.h

    @property
    def full_values(self) -> np.ndarray:
        return np.concatenate(([self.boundary[0]], self.values, [self.boundary[1]]))

    @property
    def full_nodes(self) -> np.ndarray:
        return np.arange(self.M + 2) * self.h

    def norm(self) -> float:
        """Trapezoid L² norm over [0, 1]."""
        full = self.full_values
        return float(np.sqrt(self.h * (np.sum(full ** 2) - 0.5 * (full[0] ** 2 + full[-1] ** 2))))

    def density_samples(self, max_points: int = 2048) -> Tuple[np.ndarray, np.ndarray]:
        """(z, |ψ|²) decimated to at most max_points samples."""
        z, v = self.full_nodes, self.full_values
        step = max(1, int(math.ceil(z.size / max_points)))
        return z[::step], v[::step] ** 2


class IntervalOccupation(BaseModel):
    model_config = ConfigDict(frozen=True)

    lengths: Tuple[float, ...]
    masses: Tuple[float, ...]
    per_interval_energy: Tuple[float, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> "IntervalOccupation":
        if len(self.lengths) != len(self.masses):
            raise ValueError("lengths and masses must have the same size")
        if any(n < 0 for n in self.masses):
            raise ValueError("masses must be nonnegative")
        return self

    @property
    def total_mass(self) -> float:
        return float(sum(self.masses))


class AuxResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa: float
    alpha: float
    energy: float
    minimizer: GridFunction
    quartic_integral: float
    iterations: int = 0
    residual: float = 0.0

    @field_serializer("alpha")
    def _ser_alpha(self, v: float) -> Any:
        return _dump_strength(v)


class AuxTable(BaseModel):
    """Knots of κ ↦ e(κ, α) with derivatives, interpolated by monotone cubic Hermite."""
    model_config = ConfigDict(frozen=True)

    alpha: float
    kappa_knots: Tuple[float, ...]
    energy_knots: Tuple[float, ...]
    derivative_knots: Tuple[float, ...]
    grid_points: int = 0
    rel_error: float = 0.0

    _spline: Optional[CubicHermiteSpline] = PrivateAttr(default=None)

    @field_validator("alpha", mode="before")
    @classmethod
    def _parse_alpha(cls, v: Any) -> Any:
        return _parse_strength(v)

    @model_validator(mode="after")
    def _check_shapes(self) -> "AuxTable":
        n = len(self.kappa_knots)
        if len(self.energy_knots) != n or len(self.derivative_knots) != n:
            raise ValueError("knot arrays must have equal length")
        if n < 2 or np.any(np.diff(self.kappa_knots) <= 0):
            raise ValueError("kappa knots must be strictly increasing")
        return self

    @property
    def kappa_max(self) -> float:
        return self.kappa_knots[-1]

    @property
    def e0(self) -> float:
        return self.energy_knots[0]

    def _interpolant(self) -> CubicHermiteSpline:
        if self._spline is None:
            self._spline = CubicHermiteSpline(
                np.asarray(self.kappa_knots), np.asarray(self.energy_knots), np.asarray(self.derivative_knots)
            )
        return self._spline

    def energy(self, kappa):
        return self._interpolant()(kappa)

    def derivative(self, kappa):
        return self._interpolant()(kappa, 1)

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": _dump_strength(self.alpha),
                "knots": [list(k) for k in zip(self.kappa_knots, self.energy_knots, self.derivative_knots)],
                "grid_points": self.grid_points,
                "rel_error": self.rel_error,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "AuxTable":
        data = json.loads(text)
        knots = np.asarray(data["knots"], dtype=float)
        return cls(
            alpha=data["alpha"],
            kappa_knots=tuple(knots[:, 0]),
            energy_knots=tuple(knots[:, 1]),
            derivative_knots=tuple(knots[:, 2]),
            grid_points=data.get("grid_points", 0),
            rel_error=data.get("rel_error", 0.0),
        )


class ThermoSolution(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float
    nu: float
    mu: float
    lambda_frac: float
    lambda_nu: float
    e0: float
    e0_primal: float
    phase: Phase
    mean_interval: float
    normalization: float
    window_checks: Dict[str, bool] = {}


class GPResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    energy: float
    minimizer: GridFunction
    occupations: IntervalOccupation
    participation_ratio: float
    upper_bound: Optional[float] = None
    thermo_upper_bound: Optional[float] = None
    lower_bound: Optional[float] = None
    discretization_error: float = 0.0
    snap_distance: float = 0.0
    iterations: int = 0
    starts: int = 1

    def sandwich_holds(self) -> bool:
        eps = self.discretization_error
        lower_ok = self.lower_bound is None or self.lower_bound - eps <= self.energy
        upper_ok = self.upper_bound is None or self.energy <= self.upper_bound + eps
        return lower_ok and upper_ok


class PotentialSpec(BaseModel):
    """W = smooth_part + Σ σ δ(z − z_i) on [0, 1]; smooth_part sampled on interior nodes."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    smooth_part: np.ndarray = Field(default_factory=lambda: np.zeros(0))
    delta_part: ScattererConfig = ScattererConfig()

    @field_validator("smooth_part", mode="before")
    @classmethod
    def _as_array(cls, v: Any) -> np.ndarray:
        arr = np.array(v, dtype=float)
        if arr.size and np.min(arr) < 0:
            raise ValueError("potential must be nonnegative")
        arr.setflags(write=False)
        return arr

    @property
    def has_deltas(self) -> bool:
        return self.delta_part.m > 0 and self.delta_part.strength > 0

    @property
    def integral_smooth(self) -> float:
        if self.smooth_part.size == 0:
            return 0.0
        return float(np.sum(self.smooth_part) / (self.smooth_part.size + 1))

    @property
    def integral_W(self) -> float:
        return self.integral_smooth + float(np.sum(self.delta_part.strengths))

    def smooth_on(self, z: np.ndarray) -> np.ndarray:
        """Linear interpolation of the smooth part (zero at the walls) at points z."""
        if self.smooth_part.size == 0:
            return np.zeros_like(z, dtype=float)
        M = self.smooth_part.size
        nodes = np.arange(M + 2) / (M + 1)
        return np.interp(z, nodes, np.concatenate(([0.0], self.smooth_part, [0.0])))


class SpectrumResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    eigenvalues: Tuple[float, ...]
    gap: float
    eta: float
    gap_bound: float
    snap_distance: float = 0.0
    method: str = "tridiagonal"


class EnsembleSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    nu: float = Field(default=50.0, gt=0)
    samples: int = Field(default=64, ge=1)
    base_seed: int = Field(default=1, ge=0, lt=2 ** 64)

    def seed_for(self, index: int) -> int:
        return self.base_seed + index


class MaxGapSummary(BaseModel):
    model_config = ConfigDict(frozen=True)

    length: float
    ratios: Tuple[float, ...]
    median: float
    iqr: float
    fraction_in_window: float
    fraction_below_2: float
    fraction_above_4: float


class GapStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    spacing_moments: Tuple[float, float]
    ks_distance: float
    ks_pvalue: float
    adjacent_correlation: float
    samples: int
    count_chi2: Optional[float] = None
    count_pvalue: Optional[float] = None
    max_gap_ratios: List[MaxGapSummary] = []


class SampleRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    seed: int
    m: int = 0
    energy: Optional[float] = None
    e0: float = float("nan")
    ratio: Optional[float] = None
    N: Optional[float] = None
    E: Optional[float] = None
    participation_ratio: Optional[float] = None
    phase: Optional[Phase] = None
    error: Optional[str] = None


class EnsembleReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float
    sigma: float
    nu: float
    e0: float
    records: List[SampleRecord]
    aggregates: Dict[str, float]

    @field_serializer("sigma")
    def _ser_sigma(self, v: float) -> Any:
        return _dump_strength(v)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.records if r.error is not None)

    @staticmethod
    def aggregate(records: List[SampleRecord]) -> Dict[str, float]:
        ok = [r for r in records if r.error is None]
        ratio = np.array([r.ratio for r in ok if r.ratio is not None], dtype=float)
        N = np.array([r.N for r in ok if r.N is not None], dtype=float)

        def _std(a: np.ndarray) -> float:
            return float(np.std(a, ddof=1)) if a.size > 1 else 0.0

        return {
            "samples": float(len(records)),
            "failures": float(len(records) - len(ok)),
            "ratio_mean": float(np.mean(ratio)) if ratio.size else float("nan"),
            "ratio_std": _std(ratio),
            "ratio_stderr": _std(ratio) / math.sqrt(ratio.size) if ratio.size else float("nan"),
            "N_mean": float(np.mean(N)) if N.size else float("nan"),
            "N_std": _std(N),
        }


class ExperimentConfig(BaseModel):
    """Everything one CLI run needs; output is a pure function of this object."""

    mode: Mode = Mode.GP
    params: ModelParams = ModelParams()
    ensemble: EnsembleSpec = EnsembleSpec()
    output_dir: Path = Path("results")
    format: OutputFormat = OutputFormat.JSON

    kappa: float = Field(default=0.0, ge=0)
    alpha: float = Field(default=INF, ge=0)
    nu_values: List[float] = []
    gamma_rule: str = "fixed"
    sigma_rule: str = "fixed"
    gamma_grid: List[float] = []
    nu_grid: List[float] = []
    k: int = Field(default=2, ge=1, le=16)
    particles: float = Field(default=1e6, ge=1)
    max_gap_lengths: List[float] = [1e3, 1e4, 1e5]
    trials: int = Field(default=200, ge=1)
    failure_threshold: float = Field(default=0.0, ge=0, le=1)
    config_json: Optional[Path] = None

    phase_thresholds: PhaseThresholds = PhaseThresholds()
    windows: OrderWindows = OrderWindows()
    statistics: StatisticalThresholds = StatisticalThresholds()

    @field_validator("alpha", mode="before")
    @classmethod
    def _parse_alpha(cls, v: Any) -> Any:
        return _parse_strength(v)

    @field_serializer("alpha")
    def _ser_alpha(self, v: float) -> Any:
        return _dump_strength(v)

    @field_validator("gamma_rule")
    @classmethod
    def _gamma_rule(cls, v: str) -> str:
        if v not in ("fixed", "nu_squared"):
            raise ValueError("gamma_rule must be 'fixed' or 'nu_squared'")
        return v

    @field_validator("sigma_rule")
    @classmethod
    def _sigma_rule(cls, v: str) -> str:
        if v not in ("fixed", "default"):
            raise ValueError("sigma_rule must be 'fixed' or 'default'")
        return v
