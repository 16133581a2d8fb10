# src/utils/file_manager.py

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Dict, Any, Optional, Sequence

import numpy as np
import pandas as pd

from src.utils.logger import Log
from src.utils.exceptions import MissingArtifactError, DataValidationError

CSV_FLOAT_FORMAT = "%.12g"


def _atomic_write_text(filepath: Path, text: str, encoding: str = "utf-8") -> None:
    """Write to a temp file in the same directory, then rename over the target."""
    filepath.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{filepath.name}.", suffix=".tmp", dir=filepath.parent)
    try:
        with os.fdopen(fd, "w", encoding=encoding, newline="") as f:
            f.write(text)
        os.replace(tmp_name, filepath)
    except BaseException:
        if os.path.exists(tmp_name):
            os.remove(tmp_name)
        raise


def _to_builtin(obj: Any) -> Any:
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "isoformat"):
        return obj.isoformat()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def file_sha256(filepath: Path) -> str:
    h = hashlib.sha256()
    with open(filepath, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_hash(data: Any) -> str:
    """SHA-256 of the canonical (sorted-key) JSON dump of `data`."""
    text = json.dumps(data, sort_keys=True, default=_to_builtin, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class JsonHandler:
    @staticmethod
    def read_json(filepath: Path) -> Dict[str, Any]:
        if not filepath.exists():
            raise MissingArtifactError(f"Required file not found: {filepath}")
        try:
            with open(filepath, 'r', encoding='utf-8') as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"JSON parsing failed ({filepath.name}): {e}") from e

    @staticmethod
    def save_json(filepath: Path, data: Dict[str, Any], quiet: bool = False) -> None:
        text = json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, default=_to_builtin)
        _atomic_write_text(filepath, text + "\n")
        if not quiet:
            Log.success(f"Saved: {filepath.name}")


class CsvHandler:
    @staticmethod
    def read_csv(filepath: Path, required_columns: Optional[Sequence[str]] = None, **kwargs) -> pd.DataFrame:
        if not filepath.exists():
            raise MissingArtifactError(f"Required file not found: {filepath}")
        try:
            frame = pd.read_csv(filepath, **kwargs)
        except pd.errors.EmptyDataError:
            frame = pd.DataFrame(columns=list(required_columns or []))
        except (pd.errors.ParserError, ValueError) as e:
            raise DataValidationError(f"CSV parsing failed ({filepath.name}): {e}") from e

        if required_columns is not None:
            missing = [c for c in required_columns if c not in frame.columns]
            if missing:
                raise DataValidationError(f"Schema mismatch in {filepath.name}: missing columns {missing}")
        return frame

    @staticmethod
    def save_csv(filepath: Path, frame: pd.DataFrame, quiet: bool = False) -> None:
        text = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        _atomic_write_text(filepath, text)
        if not quiet:
            Log.success(f"Saved: {filepath.name} (rows: {len(frame)})")

    @staticmethod
    def save_lines(filepath: Path, lines: Sequence[str], quiet: bool = False) -> None:
        _atomic_write_text(filepath, "".join(f"{line}\n" for line in lines))
        if not quiet:
            Log.success(f"Saved: {filepath.name}")
