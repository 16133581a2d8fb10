# src/processors/evaluation/__init__.py
"""
Evaluation Sub-package
======================
예측된 스케일 팩터의 커버리지, 용량, 핫스팟 위험, 외기온도 민감도를 계산하고
이를 리포트 표로 저장하는 패키지입니다.

Modules:
--------
- metrics.py: coverage, capacity_pu, risk_table, noisy_temperature_run, temperature_sensitivity, EvaluationReport
- reports.py: CSV tables (coverage CDF/histogram, capacity and hotspot CDFs, risk table, traces) and report.json
"""

from .metrics import (
    EvaluationReport,
    capacity_pu,
    coverage,
    evaluate_predictions,
    noisy_temperature_run,
    risk_table,
    sensitivity_summary,
    temperature_sensitivity,
)
from .reports import write_reports

__all__ = [
    "EvaluationReport",
    "capacity_pu",
    "coverage",
    "evaluate_predictions",
    "noisy_temperature_run",
    "risk_table",
    "sensitivity_summary",
    "temperature_sensitivity",
    "write_reports",
]
