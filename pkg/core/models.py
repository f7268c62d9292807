"""
数据模型定义
包含跨层共享的数据结构：CheckResult, OutputRecord, ExperimentConfig, ExperimentResult, RunManifest
"""

import time
from dataclasses import dataclass, field
from typing import Any

from .config import LabConfig

ARTIFACT_VERSION = "1.0.0"


@dataclass
class CheckResult:
    """单项不变式校验结果"""

    name: str
    passed: bool
    detail: str = ""
    witness: str | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "witness": self.witness,
            "warnings": list(self.warnings),
        }


@dataclass
class OutputRecord:
    """一个已写出的文件"""

    path: str
    sha256: str
    kind: str  # csv / json / plot
    columns: list[str] = field(default_factory=list)
    description: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "path": self.path,
            "sha256": self.sha256,
            "kind": self.kind,
            "columns": list(self.columns),
            "description": self.description,
        }


@dataclass
class ExperimentConfig:
    """一次实验调用的完整配置，种子写入所有输出"""

    experiment: str
    lab: LabConfig

    @property
    def seed(self) -> int:
        return self.lab.seed

    def to_dict(self) -> dict[str, Any]:
        return {"experiment": self.experiment, **self.lab.to_dict()}


@dataclass
class ExperimentResult:
    """实验运行结果：判定、数值摘要与说明"""

    name: str
    verdicts: dict[str, bool] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())


@dataclass
class RunManifest:
    """运行清单：配置回显、版本、判定、耗时与全部输出文件摘要"""

    config: dict[str, Any]
    version: str = ARTIFACT_VERSION
    verdicts: dict[str, bool] = field(default_factory=dict)
    outputs: list[OutputRecord] = field(default_factory=list)
    started_at: float = None
    wall_clock_seconds: float = 0.0

    def __post_init__(self):
        if self.started_at is None:
            self.started_at = time.time()

    def record(self, output: OutputRecord):
        self.outputs.append(output)

    def finish(self):
        self.wall_clock_seconds = time.time() - self.started_at

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "version": self.version,
            "verdicts": dict(self.verdicts),
            "outputs": [o.to_dict() for o in self.outputs],
            "started_at": self.started_at,
            "wall_clock_seconds": self.wall_clock_seconds,
        }
