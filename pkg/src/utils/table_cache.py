import math
from pathlib import Path
from typing import List, Optional

from loguru import logger

from src.data.models import AuxTable
from src.utils.errors import OutputError


class AuxTableCache:
    """On-disk store of auxiliary tables, one JSON file per wall strength α.

    Tables are expensive (one constrained minimization per knot) and depend only
    on α and the grid, so they are shared across runs.
    """

    def __init__(self, cache_dir: str = ".disbec_cache"):
        """Initialize the cache.

        Args:
            cache_dir: Directory holding the table files; created if missing
        """
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, alpha: float) -> Path:
        label = "inf" if math.isinf(alpha) else repr(float(alpha))
        return self.cache_dir / f"aux_alpha{label}.json"

    def load(self, alpha: float) -> Optional[AuxTable]:
        """Return the stored table for alpha, or None when absent or unreadable."""
        path = self._path(alpha)
        if not path.exists():
            return None
        try:
            table = AuxTable.from_json(path.read_text())
        except (ValueError, KeyError) as e:
            logger.warning(f"Ignoring unreadable table cache {path}: {str(e)}")
            return None
        logger.debug(f"Loaded aux table alpha={alpha} from {path}")
        return table

    def save(self, table: AuxTable) -> Path:
        path = self._path(table.alpha)
        try:
            path.write_text(table.to_json())
        except OSError as e:
            logger.error(f"Error writing table cache: {str(e)}")
            raise OutputError("could not write auxiliary table", str(path)) from e
        logger.info(f"Cached aux table alpha={table.alpha} (kappa_max={table.kappa_max:.3g})")
        return path

    def list_tables(self) -> List[Path]:
        return sorted(self.cache_dir.glob("aux_alpha*.json"))

    def delete(self, alpha: float) -> bool:
        """Remove the stored table for alpha; True if a file was deleted."""
        path = self._path(alpha)
        if not path.exists():
            return False
        path.unlink()
        logger.info(f"Deleted cached table {path}")
        return True
