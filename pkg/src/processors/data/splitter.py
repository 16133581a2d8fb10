# src/processors/data/splitter.py
from datetime import date
from typing import Iterable, List, Tuple

import pandas as pd

from src.processors.data.records import SplitSpec
from src.utils import Log
from src.utils.exceptions import DataValidationError


def split_dates(dates: Iterable[date], spec: SplitSpec) -> Tuple[List[date], List[date]]:
    """Chronological split: the first `train_validation_days` days, then the next `holdout_days`."""
    ordered = sorted(set(dates))
    needed = spec.train_validation_days + spec.holdout_days
    if len(ordered) < needed:
        raise DataValidationError(
            f"Insufficient days for split: {len(ordered)} available, {needed} required"
        )
    if len(ordered) > needed:
        Log.warning(f"{len(ordered) - needed} trailing day(s) fall outside the split and are ignored")
    train = ordered[:spec.train_validation_days]
    holdout = ordered[spec.train_validation_days:needed]
    return train, holdout


def split(table: pd.DataFrame, spec: SplitSpec, date_column: str = "date") -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Split any per-day table by its date column; holdout rows are strictly after training rows."""
    days = pd.to_datetime(table[date_column]).dt.date
    train_days, holdout_days = split_dates(days, spec)
    train = table[days.isin(set(train_days))].reset_index(drop=True)
    holdout = table[days.isin(set(holdout_days))].reset_index(drop=True)
    return train, holdout
