# src/processors/pipeline/__init__.py
"""
Pipeline Sub-package
====================
명령줄 뒤에서 스테이지를 순서대로 실행하는 패키지입니다.
각 스테이지는 하나의 출력 디렉토리에서 상위 산출물을 읽고,
읽고 쓴 파일을 매니페스트로 남깁니다.

Modules:
--------
- artifacts.py: ArtifactStore (layout, required inputs, manifests), derived_seed
- batch_pipeline.py: BatchPipeline (synth, label, cluster, train, predict, evaluate, reproduce)
"""

from .artifacts import ArtifactStore, derived_seed
from .batch_pipeline import PRIMARY_SCENARIO, BatchPipeline

__all__ = [
    "ArtifactStore",
    "BatchPipeline",
    "PRIMARY_SCENARIO",
    "derived_seed",
]
