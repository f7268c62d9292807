"""
配置管理模块
包含实验室的配置类和配置管理器；默认值来自 _conf_schema.json，
之后依次被 JSON 配置文件与命令行参数覆盖
"""

import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Any

from utils.validators import parse_rational, validate_open_interval, validate_positive_int

from .errors import ConfigError
from .numeric import LOW_PRECISION_WARNING_BITS

logger: logging.Logger = logging.getLogger(__name__)

SCHEMA_PATH = Path(__file__).resolve().parent.parent / "_conf_schema.json"

MIN_PRECISION = 24


def load_schema_defaults(path: Path = SCHEMA_PATH) -> dict[str, Any]:
    """读取配置模式中的 default 字段"""
    try:
        schema = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise ConfigError(f"无法读取配置模式 {path}: {e}") from e
    return {key: spec.get("default") for key, spec in schema.items()}


class LabConfig:
    """实验室配置数据类"""

    def __init__(
        self,
        registry: str = "",
        horizon: int = 10,
        stages: int = 64,
        depth: int = 8,
        alpha_length: int = 30,
        precision: int = 100,
        seed: int = 0,
        samples: int = 20,
        sample_horizon: int = 200,
        budget: int = 2**20,
        gamma: str = "1/9",
        kappa: str = "1/4",
        tail_offsets: list = None,
        count_threshold: str = "1/10",
        slack: int = 4,
        quasimeasure_stages: int = 32,
        out: str = "lab_output",
    ):
        self.registry = registry
        self.horizon = horizon
        self.stages = stages
        self.depth = depth
        self.alpha_length = alpha_length
        self.precision = precision
        self.seed = seed
        self.samples = samples
        self.sample_horizon = sample_horizon
        self.budget = budget
        self.gamma = gamma
        self.kappa = kappa
        self.tail_offsets = tail_offsets if tail_offsets is not None else [1, 2, 4]
        self.count_threshold = count_threshold
        self.slack = slack
        self.quasimeasure_stages = quasimeasure_stages
        self.out = out

    @classmethod
    def from_dict(cls, config_dict):
        """从字典创建配置对象，缺失键使用模式默认值"""
        values = load_schema_defaults()
        values.update({k: v for k, v in config_dict.items() if k in values and v is not None})
        return cls(**values)

    def to_dict(self):
        """转换为字典"""
        return {
            "registry": self.registry,
            "horizon": self.horizon,
            "stages": self.stages,
            "depth": self.depth,
            "alpha_length": self.alpha_length,
            "precision": self.precision,
            "seed": self.seed,
            "samples": self.samples,
            "sample_horizon": self.sample_horizon,
            "budget": self.budget,
            "gamma": self.gamma,
            "kappa": self.kappa,
            "tail_offsets": list(self.tail_offsets),
            "count_threshold": self.count_threshold,
            "slack": self.slack,
            "quasimeasure_stages": self.quasimeasure_stages,
            "out": self.out,
        }

    @property
    def gamma_value(self) -> Fraction:
        return parse_rational(self.gamma)

    @property
    def kappa_value(self) -> Fraction:
        return parse_rational(self.kappa)

    @property
    def count_threshold_value(self) -> Fraction:
        return parse_rational(self.count_threshold)


class LabConfigManager:
    """实验室配置管理器"""

    def __init__(self, config=None, config_file: str | Path | None = None):
        """
        初始化配置管理器

        Args:
            config: 覆盖项字典（通常来自命令行），值为 None 的键忽略
            config_file: JSON 配置文件路径，优先级低于 config
        """
        merged: dict[str, Any] = {}
        if config_file:
            merged.update(self._read_config_file(config_file))
        if config:
            merged.update({k: v for k, v in config.items() if v is not None})

        self.config = LabConfig.from_dict(merged)
        self.warnings: list[str] = []

        logger.info(
            f"实验室配置加载完成，精度 {self.config.precision} 位，预算 {self.config.budget}"
        )

    @staticmethod
    def _read_config_file(path: str | Path) -> dict[str, Any]:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise ConfigError(f"无法读取配置文件 {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"配置文件 {path} 顶层必须是对象")
        logger.info(f"读取配置文件: {path}")
        return data

    def get_config(self):
        """
        获取当前配置对象

        Returns:
            LabConfig: 当前配置对象
        """
        return self.config

    def validate_config(self):
        """
        验证配置是否有效，低精度只产生警告

        Returns:
            bool: 配置是否有效
        """
        c = self.config
        self.warnings = []
        ok = True

        def fail(message):
            nonlocal ok
            logger.error(message)
            ok = False

        for key in ("horizon", "stages", "depth", "alpha_length", "samples", "sample_horizon", "budget", "slack", "quasimeasure_stages"):
            value = getattr(c, key)
            if validate_positive_int(value) is None:
                fail(f"{key} 必须是正整数，当前为 {value!r}")
        if validate_positive_int(c.seed, minimum=0) is None:
            fail(f"seed 必须是非负整数，当前为 {c.seed!r}")
        if not ok:
            return False

        if 2**c.depth > c.budget:
            fail(f"2^depth = 2^{c.depth} 超过枚举预算 {c.budget}")
        if 2**c.horizon > c.budget:
            fail(f"2^horizon = 2^{c.horizon} 超过枚举预算 {c.budget}")
        if c.precision < MIN_PRECISION:
            fail(f"precision 至少为 {MIN_PRECISION} 位，当前为 {c.precision}")
        elif c.precision < LOW_PRECISION_WARNING_BITS:
            message = f"工作精度 {c.precision} 位偏低，容差放宽到 2^-{c.precision - 20}"
            logger.warning(message)
            self.warnings.append(message)

        if validate_open_interval(c.gamma, Fraction(0), Fraction(1, 5)) is None:
            fail(f"gamma 必须在 (0, 1/5) 内，当前为 {c.gamma!r}")
        kappa = parse_rational(c.kappa)
        if kappa is None or not 0 < kappa <= Fraction(1, 2):
            fail(f"kappa 必须在 (0, 1/2] 内，当前为 {c.kappa!r}")
        threshold = parse_rational(c.count_threshold)
        if threshold is None or threshold <= 0:
            fail(f"count_threshold 必须为正，当前为 {c.count_threshold!r}")
        if not isinstance(c.tail_offsets, list) or not all(
            isinstance(v, int) and v > 0 for v in c.tail_offsets
        ):
            fail(f"tail_offsets 必须是正整数列表，当前为 {c.tail_offsets!r}")

        return ok
