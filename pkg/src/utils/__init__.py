# src/utils/__init__.py
"""
Utilities Package
=================
모든 스테이지가 공유하는 공통 보조 기능(Cross-cutting Concerns) 패키지입니다.
열모델 및 예측 로직과는 독립적으로 동작합니다.

포함된 모듈 (Modules):
----------------------
1. file_manager.py
   - JsonHandler / CsvHandler: 임시 파일 후 이름 변경 방식의 원자적 JSON/CSV 입출력.
   - file_sha256 / canonical_hash: 매니페스트용 산출물 및 설정 해시.

2. logger.py
   - Log: ANSI-coloured console logging (Info, Success, Error, Warning, Trace, Perf).

3. decorators.py
   - measure_time: 함수 실행 시간 측정 및 성능 로깅.
   - log_lifecycle: 함수 호출의 시작과 끝을 추적(Trace)하여 로깅.

4. exceptions.py
   - DtrError 예외 계층 (CLI 종료 코드 포함).
"""

# 패키지 레벨에서 바로 접근 가능하도록 주요 클래스/함수 노출
from .logger import Log
from .file_manager import JsonHandler, CsvHandler, file_sha256, canonical_hash
from .decorators import measure_time, log_lifecycle
from .exceptions import (
    DtrError,
    ConfigError,
    MissingArtifactError,
    DataValidationError,
    GapError,
    InsufficientHistoryError,
    ParameterError,
    AlreadyTrippingError,
    InvariantViolation,
)

__all__ = [
    "JsonHandler",
    "CsvHandler",
    "file_sha256",
    "canonical_hash",
    "Log",
    "measure_time",
    "log_lifecycle",
    "DtrError",
    "ConfigError",
    "MissingArtifactError",
    "DataValidationError",
    "GapError",
    "InsufficientHistoryError",
    "ParameterError",
    "AlreadyTrippingError",
    "InvariantViolation",
]
