"""
异常定义模块
实验室所有可预期的失败都以 LabError 子类抛出，由 CLI 与校验套件统一捕获
"""


class LabError(Exception):
    """实验室基础异常，witness 保存触发失败的字符串或数值"""

    def __init__(self, message: str = "", witness: str | None = None):
        super().__init__(message)
        self.message = message
        self.witness = witness

    def __str__(self) -> str:
        base = super().__str__()
        if self.witness is not None:
            return f"{base} (witness: {self.witness})"
        return base


class ZeroConditioning(LabError):
    """条件概率的分母为零（离开支撑集的查询）"""


class BudgetExceeded(LabError):
    """穷举规模超过配置的枚举预算"""


class WeightOverflow(LabError):
    """混合权重之和超过 1"""


class NoLimitHint(LabError):
    """分阶段半测度没有可用的极限求值器"""


class DominanceViolated(LabError):
    """存在 x 使 ν(x) < w·μ(x)"""


class ExpectationExceeded(LabError):
    """穷举期望超过给定上界"""


class PreconditionViolated(LabError):
    """调用前置条件不满足"""


class EmptyMeasureSet(LabError):
    """索引过滤后没有任何测度条目"""


class MeasureFlagInvalid(LabError):
    """注册表中的 is_measure 标记与实际校验结果不一致"""


class GammaOutOfRange(LabError):
    """污染系数 γ 不在 (0, 1/5) 内"""


class UnknownExperiment(LabError):
    """未注册的实验名称"""


class ManifestError(LabError):
    """注册表清单文件格式错误"""


class ConfigError(LabError):
    """配置项非法"""
