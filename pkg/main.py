"""
半测度实验室命令行入口
verify 运行全部不变式校验；run <experiment> 运行命名实验并写出序列与清单
"""

import argparse
import asyncio
import logging
import sys

from api.experiments import EXPERIMENTS, monitor, run_experiment
from api.verification import run_verification
from core.config import LabConfigManager
from core.errors import LabError
from infrastructure.events import LabEvent, LabEventType, get_event_bus
from utils.formatters import format_dict_pretty

logger: logging.Logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semimeasure-lab", description="半测度、混合预测与随机性的精确实验室")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--registry", help="预设名称（default、base、convergence）或注册表清单路径")
    common.add_argument("--horizon", type=int, help="穷举视界 n")
    common.add_argument("--stages", type=int, help="阶段上限 T")
    common.add_argument("--depth", type=int, help="穷举校验深度")
    common.add_argument("--precision", type=int, help="工作精度（二进制位）")
    common.add_argument("--seed", type=int, help="抽样种子")
    common.add_argument("--out", help="输出目录")
    common.add_argument("--config", help="JSON 配置文件，命令行参数优先")
    common.add_argument("--verbose", action="store_true", help="输出 DEBUG 日志")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="运行全部不变式校验")
    run = sub.add_parser("run", parents=[common], help="运行命名实验")
    run.add_argument("experiment", help=f"实验名称: {', '.join(sorted(EXPERIMENTS))}")
    return parser


def load_config(args: argparse.Namespace) -> LabConfigManager:
    overrides = {
        "registry": args.registry,
        "horizon": args.horizon,
        "stages": args.stages,
        "depth": args.depth,
        "precision": args.precision,
        "seed": args.seed,
        "out": args.out,
    }
    return LabConfigManager(overrides, config_file=args.config)


def cmd_verify(manager: LabConfigManager) -> int:
    """全部校验通过时返回 0"""
    report = asyncio.run(run_verification(manager.get_config()))
    report.warnings = manager.warnings + [w for w in report.warnings if w not in manager.warnings]
    for line in report.lines():
        print(line)
    failure = report.first_failure
    if failure is not None:
        print(f"首个失败项: {failure.name} {failure.detail}", file=sys.stderr)
        return 1
    return 0


def cmd_run(name: str, manager: LabConfigManager) -> int:
    result, manifest_path = run_experiment(name, manager.get_config())
    summary = {
        "experiment": name,
        "verdicts": result.verdicts,
        "manifest": str(manifest_path),
        "runtime": monitor.get_stats(),
    }
    print(format_dict_pretty(summary))
    return 0 if result.passed else 1


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT, force=True)

    try:
        manager = load_config(args)
        if not manager.validate_config():
            logger.error("配置无效，终止")
            return 2
        bus = get_event_bus()
        for warning in manager.warnings:
            bus.publish_nowait(LabEvent(LabEventType.TOLERANCE_WARNING, experiment=args.command, data={"message": warning}))
        if args.command == "verify":
            return cmd_verify(manager)
        return cmd_run(args.experiment, manager)
    except LabError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"错误: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
