import json
import math
from pathlib import Path
from typing import Any, Iterable, List, Sequence

import pandas as pd
from loguru import logger
from pydantic import BaseModel

from src.data.models import EnsembleReport, GPResult
from src.utils.errors import OutputError

ENSEMBLE_COLUMNS = [
    "nu", "gamma", "sigma", "samples", "failures", "ratio_mean", "ratio_std", "ratio_stderr", "N_mean", "N_std", "e0",
]


def _num(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:g}"


def file_stem(mode: str, gamma: float, sigma: float, nu: float, seed: int) -> str:
    return f"{mode}_g{_num(gamma)}_s{_num(sigma)}_nu{_num(nu)}_seed{seed}"


class OutputManager:
    """Writes run artifacts as flat files: sorted-key JSON, pandas CSV and two-column plot data.

    Nothing time-dependent is written, so identical inputs give identical bytes.
    """

    def __init__(self, output_dir: str = "results"):
        self.output_dir = Path(output_dir)
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError("could not create output directory", str(self.output_dir)) from e

    def _write(self, name: str, text: str) -> Path:
        path = self.output_dir / name
        try:
            path.write_text(text)
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            raise OutputError("could not write output file", str(path)) from e
        logger.info(f"Wrote {path}")
        return path

    def write_json(self, name: str, payload: Any) -> Path:
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json")
        elif isinstance(payload, list):
            payload = [p.model_dump(mode="json") if isinstance(p, BaseModel) else p for p in payload]
        return self._write(f"{name}.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")

    def write_csv(self, name: str, df: pd.DataFrame) -> Path:
        return self._write(f"{name}.csv", df.to_csv(index=False, float_format="%.12g"))

    def write_dat(self, name: str, header: Sequence[str], x: Iterable[float], y: Iterable[float]) -> Path:
        lines = ["# " + " ".join(header)]
        lines += [f"{a:.12g} {b:.12g}" for a, b in zip(x, y)]
        return self._write(f"{name}.dat", "\n".join(lines) + "\n")

    def relocate(self, path: Path, target: Path) -> Path:
        """Move a written file to target, creating its directory."""
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            moved = path.replace(target)
        except OSError as e:
            raise OutputError("could not move output file", str(target)) from e
        logger.info(f"Moved {path} to {moved}")
        return moved

    def emit_ensemble(self, reports: List[EnsembleReport], mode: str, seed: int) -> List[Path]:
        """Full records as JSON, aggregates as CSV, ν against the ratio spread as plot data."""
        if not reports:
            raise OutputError("no ensemble reports to write")
        first = reports[0]
        stem = file_stem(mode, first.gamma, first.sigma, first.nu, seed)
        rows = [
            {"nu": r.nu, "gamma": r.gamma, "sigma": r.sigma, "e0": r.e0, **r.aggregates} for r in reports
        ]
        df = pd.DataFrame(rows, columns=ENSEMBLE_COLUMNS)
        return [
            self.write_json(stem, reports),
            self.write_csv(stem, df),
            self.write_dat("ratio_vs_nu", ["nu", "ratio_std"], df["nu"], df["ratio_std"]),
        ]

    def emit_gp(self, result: GPResult, stem: str) -> List[Path]:
        z, rho = result.minimizer.density_samples()
        return [
            self.write_json(stem, result),
            self.write_dat(f"{stem}_density", ["z", "density"], z, rho),
        ]
