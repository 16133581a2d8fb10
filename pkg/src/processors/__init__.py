# src/processors/__init__.py
"""
Processors Package
==================
열모델·릴레이·라벨러(physics), 데이터(data), 학습(learning), 평가(evaluation)와
이들을 묶는 스테이지 파이프라인(pipeline)을 통합 관리하는 패키지입니다.
진입 모듈(main.py)에서 바로 쓸 수 있도록 파이프라인 실행기를 노출합니다.
"""

from .pipeline import BatchPipeline

__all__ = [
    "BatchPipeline",
]
