# src/processors/pipeline/artifacts.py
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np

from src.config import Config
from src.utils import JsonHandler, Log, file_sha256
from src.utils.exceptions import MissingArtifactError


def derived_seed(seed: int, *tags: int) -> int:
    """Independent 32-bit seed for a sub-task of a seeded run."""
    return int(np.random.SeedSequence([int(seed), *map(int, tags)]).generate_state(1)[0])


class ArtifactStore:
    """
    Layout of one output directory. Stages read upstream artifacts through
    `require` and record what they consumed and produced in a manifest.
    """

    def __init__(self, output_dir: Path):
        self.root = Path(output_dir)

    @property
    def raw_dir(self) -> Path:
        return self.root / Config.RAW_DIR

    @property
    def models_dir(self) -> Path:
        return self.root / Config.MODELS_DIR

    @property
    def predictions_dir(self) -> Path:
        return self.root / Config.PREDICTIONS_DIR

    @property
    def reports_dir(self) -> Path:
        return self.root / Config.REPORTS_DIR

    def path(self, name: str) -> Path:
        return self.root / name

    def raw_files(self) -> Dict[str, str]:
        return {"loads": Config.LOADS_FILE, "weather": Config.WEATHER_FILE,
                "meta": Config.META_FILE, "holidays": Config.HOLIDAYS_FILE}

    def prediction_path(self, scenario: str) -> Path:
        return self.predictions_dir / f"{scenario}.csv"

    @staticmethod
    def require(path: Path, produced_by: Optional[str] = None) -> Path:
        if not Path(path).exists():
            hint = f" (run `{produced_by}` first)" if produced_by else ""
            raise MissingArtifactError(f"Missing artifact: {path}{hint}")
        return Path(path)

    def _relative(self, path: Path) -> str:
        try:
            return Path(path).resolve().relative_to(self.root.resolve()).as_posix()
        except ValueError:
            return Path(path).name

    def write_manifest(self, stage: str, seed: int, config_hash: str,
                       inputs: Iterable[Path], outputs: Iterable[Path]) -> Path:
        manifest = {
            "stage": stage,
            "seed": seed,
            "config_hash": config_hash,
            "inputs": {self._relative(p): file_sha256(Path(p)) for p in sorted(set(map(Path, inputs)))},
            "outputs": {self._relative(p): file_sha256(Path(p)) for p in sorted(set(map(Path, outputs)))},
        }
        path = self.root / f"manifest_{stage}.json"
        JsonHandler.save_json(path, manifest, quiet=True)
        Log.trace(f"Manifest written: {path.name}")
        return path
