# src/processors/evaluation/reports.py
"""CSV tables and the JSON summary written by the evaluate stage."""
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np
import pandas as pd

from src.processors.evaluation.metrics import EvaluationReport, coverage_cdf, coverage_traces
from src.utils import CsvHandler, JsonHandler, Log

HISTOGRAM_BINS = np.arange(0.0, 110.0, 10.0)


def _cdf_by_setting(outcomes: pd.DataFrame, column: str) -> pd.DataFrame:
    parts = []
    for setting, group in outcomes.groupby("setting", sort=False):
        values = np.sort(group[column].to_numpy(dtype=float))
        parts.append(pd.DataFrame({
            "setting": setting,
            column: values,
            "cumulative_fraction": np.arange(1, len(values) + 1) / len(values),
        }))
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(columns=["setting", column, "cumulative_fraction"])


def coverage_histogram(reports: Mapping[str, EvaluationReport]) -> pd.DataFrame:
    """Transformer counts per 10-point coverage bin, one column per scenario."""
    table = pd.DataFrame({"bin_low": HISTOGRAM_BINS[:-1], "bin_high": HISTOGRAM_BINS[1:]})
    for name, report in reports.items():
        counts, _ = np.histogram(report.per_transformer_coverage.to_numpy(dtype=float), bins=HISTOGRAM_BINS)
        table[name] = counts
    return table


def write_reports(directory: Path, reports: Mapping[str, EvaluationReport], primary: str,
                  sensitivity: Optional[pd.DataFrame] = None,
                  pipeline_scores: Optional[pd.DataFrame] = None) -> List[Path]:
    """Every table of the evaluation plus report.json; returns the written paths."""
    directory = Path(directory)
    written: List[Path] = []

    def save(name: str, frame: pd.DataFrame) -> None:
        path = directory / name
        CsvHandler.save_csv(path, frame, quiet=True)
        written.append(path)

    for name, report in reports.items():
        save(f"coverage_cdf_{name}.csv", coverage_cdf(report.per_transformer_coverage))
    save("coverage_histogram.csv", coverage_histogram(reports))

    main = reports[primary]
    if main.risk is not None:
        save("risk_table.csv", main.risk)
        save("capacity_cdf.csv", _cdf_by_setting(main.outcomes, "capacity_pu"))
        save("hotspot_cdf.csv", _cdf_by_setting(main.outcomes, "hotspot"))
    for which, trace in coverage_traces(main.intervals, main.per_transformer_coverage).items():
        save(f"trace_{which}.csv", trace[["transformer_id", "date", "k_opt", "lower", "upper"]])
    if sensitivity is not None:
        save("sensitivity.csv", sensitivity)
    if pipeline_scores is not None:
        save("pipeline_scores.csv", pipeline_scores)

    summary = {
        "primary_scenario": primary,
        "scenarios": {name: report.to_dict() for name, report in reports.items()},
        "mean_coverage": {name: report.mean_coverage for name, report in reports.items()},
    }
    if main.sensitivity:
        summary["sensitivity"] = main.sensitivity
    path = directory / "report.json"
    JsonHandler.save_json(path, summary, quiet=True)
    written.append(path)

    Log.success(f"Saved {len(written)} report file(s) to {directory}")
    return written
