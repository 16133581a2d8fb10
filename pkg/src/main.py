# src/main.py
import argparse
import sys
import traceback
from pathlib import Path
from typing import List, Optional

# 스크립트로 실행할 때 프로젝트 루트를 경로에 추가
sys.path.append(str(Path(__file__).resolve().parent.parent))

from src.config import Config, load_config
from src.processors import BatchPipeline
from src.utils import Log
from src.utils.exceptions import DtrError

# ==========================================
# 1. 글로벌 예외 핸들러 정의
# ==========================================
def global_exception_handler(exc_type, exc_value, exc_traceback):
    """
    `main`에서 잡히지 않은(Uncaught) 예외를 마지막으로 처리합니다.
    DtrError 계열은 자신의 종료 코드로 끝납니다.
    """
    if issubclass(exc_type, KeyboardInterrupt):
        Log.warning("Interrupted by user (KeyboardInterrupt)")
        sys.exit(0)

    error_msg = f"{exc_type.__name__}: {exc_value}"
    Log.error(f"Unexpected error, exiting.\n{'-'*60}")

    traceback_details = "".join(traceback.format_tb(exc_traceback))
    print(f"{Log.FAIL}{traceback_details}{error_msg}{Log.RESET}")
    print(f"{'-'*60}")
    sys.exit(getattr(exc_value, "exit_code", 1))

# 예외 훅 등록
sys.excepthook = global_exception_handler

# ==========================================
# 2. 인자 파싱
# ==========================================
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help=f"Experiment YAML (default: {Config.DEFAULT_CONFIG.name} if present)")
    common.add_argument("--seed", type=int, default=None, help="Override the configured seed")
    common.add_argument("--output-dir", type=Path, default=None, help="Artifact directory")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="Warnings and errors only")
    verbosity.add_argument("--verbose", action="store_true", help="Trace output")

    parser = argparse.ArgumentParser(prog="dtr", description="Risk-based dynamic thermal rating pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="Generate the seeded synthetic fleet")
    synth.add_argument("--n-transformers", type=int, default=None)
    synth.add_argument("--n-days", type=int, default=None)

    sub.add_parser("label", parents=[common], help="Optimal scale-factor labels and the feature table")
    sub.add_parser("cluster", parents=[common], help="Prune features, cluster with all pipelines, pick one")

    train = sub.add_parser("train", parents=[common], help="Train the per-cluster quantile models")
    train.add_argument("--multi-temp", action="store_true", help="Augment training with perturbed temperatures")
    train.add_argument("--multistage", action=argparse.BooleanOptionalAction, default=None,
                       help="Also train the load-first models")

    predict = sub.add_parser("predict", parents=[common], help="Replay the holdout with incremental updates")
    predict.add_argument("--multi-temp", action="store_true", help="Use the multi-temperature models")
    temperature = predict.add_mutually_exclusive_group()
    temperature.add_argument("--noisy-temp", action="store_true", help="Gaussian noise on prediction temperatures")
    temperature.add_argument("--forecast-temp", action="store_true", help="Use the weather forecast column")
    predict.add_argument("--multistage", action=argparse.BooleanOptionalAction, default=None,
                         help="Also run the load-first comparison")

    sub.add_parser("evaluate", parents=[common], help="Coverage, risk, sensitivity and reports")
    sub.add_parser("reproduce", parents=[common], help="Every stage end to end")
    return parser


def _run(args: argparse.Namespace) -> None:
    if args.quiet:
        Log.set_level("warning")
    elif args.verbose:
        Log.set_level("trace")
    else:
        Log.set_level("info")

    config_path = args.config
    if config_path is None and Config.DEFAULT_CONFIG.exists():
        config_path = Config.DEFAULT_CONFIG
    config = load_config(config_path)
    if args.seed is not None:
        config = config.with_overrides(seed=args.seed)

    pipeline = BatchPipeline(config, args.output_dir)
    command = args.command
    if command == "synth":
        pipeline.synth(args.n_transformers, args.n_days)
    elif command == "label":
        pipeline.label()
    elif command == "cluster":
        pipeline.cluster()
    elif command == "train":
        pipeline.train(multi_temp=args.multi_temp, multistage=args.multistage)
    elif command == "predict":
        pipeline.predict(noisy_temp=args.noisy_temp, forecast_temp=args.forecast_temp,
                         multi_temp=args.multi_temp, multistage=args.multistage)
    elif command == "evaluate":
        pipeline.evaluate()
    elif command == "reproduce":
        pipeline.reproduce()

# ==========================================
# 3. Main 실행
# ==========================================
def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _run(args)
    except DtrError as e:
        Log.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    Log.success(f"`{args.command}` finished")
    return 0

if __name__ == "__main__":
    sys.exit(main())
