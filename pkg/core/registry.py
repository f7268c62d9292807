"""
分阶段注册表模块
可枚举半测度的可计算替身：单调的阶段下近似、带声明码长的索引注册表、
两种权重规则下的混合，以及 JSON 清单的读写。
"""

import copy
import json
import logging
import math
import threading
from abc import ABC, abstractmethod
from collections.abc import Callable, Iterator
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from pathlib import Path
from typing import Any

from utils.formatters import format_fraction, format_str
from utils.validators import parse_rational, validate_probability, validate_symbol_pattern

from .errors import (
    LabError,
    ManifestError,
    NoLimitHint,
    PreconditionViolated,
    WeightOverflow,
)
from .measures import (
    BINARY,
    DEFAULT_BUDGET,
    Alphabet,
    ConditionalSemimeasure,
    DeterministicMeasure,
    Semimeasure,
    Str,
    SumSemimeasure,
    ScaledSemimeasure,
    TruncatedSemimeasure,
    check_budget,
    family_bernoulli,
    family_poly3,
    family_uniform,
    floor_conditionals,
    to_str,
)

logger: logging.Logger = logging.getLogger(__name__)

DEFAULT_STAGE_CAP = 64


class StagedSemimeasure(ABC):
    """
    分阶段半测度：eval_at_stage(t, x) 对 t 单调不减，每个阶段本身是半测度。
    limit_hint 在极限可计算时给出精确求值器。
    """

    is_measure: bool = False

    def __init__(self, alphabet: Alphabet = BINARY, limit_hint: Semimeasure | None = None):
        self.alphabet = alphabet
        self.limit_hint = limit_hint
        self._stage_cached = lru_cache(maxsize=256)(self._build_stage)

    @abstractmethod
    def _build_stage(self, t: int) -> Semimeasure:
        """构造第 t 阶段（t ≥ 1）"""

    def stage(self, t: int) -> Semimeasure:
        if t < 1:
            raise PreconditionViolated(f"阶段编号从 1 开始，收到 {t}")
        return self._stage_cached(t)

    def eval_at_stage(self, t: int, x: Str | str) -> Fraction:
        return self.stage(t)(x)

    def limit(self, stage_cap: int = DEFAULT_STAGE_CAP) -> Semimeasure:
        """有 limit_hint 时返回它，否则以 stage_cap 阶段代替"""
        if self.limit_hint is not None:
            return self.limit_hint
        return self.stage(stage_cap)


class ConstantStages(StagedSemimeasure):
    """每个阶段都等于同一个精确半测度"""

    def __init__(self, base: Semimeasure):
        super().__init__(base.alphabet, limit_hint=base)
        self.base = base
        self.is_measure = base.is_measure

    def _build_stage(self, t: int) -> Semimeasure:
        return self.base


class DyadicStages(StagedSemimeasure):
    """
    条件概率向下取整到 t 位的阶梯近似；对 t 单调，
    与极限的差距不超过 ℓ(x)·2^-t
    """

    def __init__(self, base: ConditionalSemimeasure):
        super().__init__(base.alphabet, limit_hint=base)
        self.base = base
        self.is_measure = base.is_measure

    def _build_stage(self, t: int) -> Semimeasure:
        return floor_conditionals(self.base, t)


class FunctionStages(StagedSemimeasure):
    """由函数 t → 半测度 给出的阶段序列，调用方负责单调性"""

    def __init__(
        self,
        builder: Callable[[int], Semimeasure],
        alphabet: Alphabet = BINARY,
        limit_hint: Semimeasure | None = None,
        is_measure: bool = False,
    ):
        super().__init__(alphabet, limit_hint=limit_hint)
        self.builder = builder
        self.is_measure = is_measure

    def _build_stage(self, t: int) -> Semimeasure:
        return self.builder(t)


class MixtureStages(StagedSemimeasure):
    """Σ_i w_i·ν_i^t；所有成员都有极限时极限也精确"""

    def __init__(self, terms: list[tuple[Fraction, StagedSemimeasure]], alphabet: Alphabet = BINARY):
        self.terms = terms
        hints = [s.limit_hint for _, s in terms]
        limit_hint = None
        if terms and all(h is not None for h in hints):
            limit_hint = SumSemimeasure([(w, h) for (w, _), h in zip(terms, hints)], alphabet)
        super().__init__(alphabet, limit_hint=limit_hint)
        self.is_measure = limit_hint is not None and limit_hint.is_measure

    def _build_stage(self, t: int) -> Semimeasure:
        return SumSemimeasure([(w, s.stage(t)) for w, s in self.terms], self.alphabet)


class WeightRule(Enum):
    """权重规则"""

    CODE_LENGTH = "code_length"  # w_i = 2^-κ_i
    POLYNOMIAL = "polynomial"  # ε_i = i^-6·2^-i


def polynomial_weight(index: int) -> Fraction:
    """ε_i = i^-6·2^-i"""
    return Fraction(1, index**6 * 2**index)


@dataclass
class RegistryEntry:
    """注册表条目"""

    index: int
    name: str
    staged: StagedSemimeasure
    code_length: int
    is_measure: bool
    family: str = "custom"
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.code_length < 0:
            raise PreconditionViolated(f"码长必须非负: {self.name}")

    def weight(self, rule: WeightRule) -> Fraction:
        if rule is WeightRule.CODE_LENGTH:
            return Fraction(1, 2**self.code_length)
        return polynomial_weight(self.index)

    def limit(self, stage_cap: int = DEFAULT_STAGE_CAP) -> Semimeasure:
        return self.staged.limit(stage_cap)


class ModelRegistry:
    """
    有限、可扩展的模型注册表
    构造阶段独占写入；freeze() 之后不可变，可并发求值
    """

    def __init__(self, alphabet: Alphabet = BINARY, name: str = "registry"):
        self.alphabet = alphabet
        self.name = name
        self._entries: list[RegistryEntry] = []
        self._frozen = False
        self._lock = threading.Lock()

    def add(
        self,
        name: str,
        staged: StagedSemimeasure,
        code_length: int,
        is_measure: bool,
        family: str = "custom",
        params: dict[str, Any] | None = None,
    ) -> RegistryEntry:
        """追加条目，索引从 1 开始连续编号"""
        with self._lock:
            if self._frozen:
                raise LabError(f"注册表 {self.name} 已冻结，无法添加 {name}")
            if staged.alphabet != self.alphabet:
                raise PreconditionViolated(f"条目 {name} 的字母表与注册表不一致")
            entry = RegistryEntry(
                index=len(self._entries) + 1,
                name=name,
                staged=staged,
                code_length=code_length,
                is_measure=is_measure,
                family=family,
                params=dict(params or {}),
            )
            self._entries.append(entry)
        logger.debug(f"注册表 {self.name} 添加条目 #{entry.index}: {name} (κ={code_length})")
        return entry

    def freeze(self) -> "ModelRegistry":
        self._frozen = True
        logger.info(f"注册表 {self.name} 已冻结，共 {len(self._entries)} 个条目")
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def extended(
        self, name: str, staged: StagedSemimeasure, code_length: int, is_measure: bool, **kwargs
    ) -> "ModelRegistry":
        """返回追加了一个条目的新冻结副本，原注册表不变"""
        clone = ModelRegistry(self.alphabet, name=f"{self.name}+{name}")
        for entry in self._entries:
            clone._entries.append(copy.copy(entry))
        clone.add(name, staged, code_length, is_measure, **kwargs)
        return clone.freeze()

    def subset(self, names: list[str]) -> "ModelRegistry":
        """按名称挑选条目并重新编号"""
        clone = ModelRegistry(self.alphabet, name=f"{self.name}[{','.join(names)}]")
        for name in names:
            entry = self.by_name(name)
            clone.add(entry.name, entry.staged, entry.code_length, entry.is_measure, entry.family, entry.params)
        return clone.freeze()

    def entry(self, index: int) -> RegistryEntry:
        if not 1 <= index <= len(self._entries):
            raise PreconditionViolated(f"注册表索引越界: {index}")
        return self._entries[index - 1]

    def by_name(self, name: str) -> RegistryEntry:
        for entry in self._entries:
            if entry.name == name:
                return entry
        raise PreconditionViolated(f"注册表中没有名为 {name} 的条目")

    def weights(self, rule: WeightRule) -> list[Fraction]:
        return [e.weight(rule) for e in self._entries]

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[RegistryEntry]:
        return iter(list(self._entries))


def mixture(reg: ModelRegistry, rule: WeightRule = WeightRule.CODE_LENGTH) -> MixtureStages:
    """
    构造混合 Σ_i weight(i)·ν_i

    Raises:
        WeightOverflow: 权重之和 > 1
    """
    if len(reg) == 0:
        raise PreconditionViolated("空注册表无法构成混合")
    weights = reg.weights(rule)
    total = sum(weights, Fraction(0))
    if total > 1:
        raise WeightOverflow(
            f"注册表 {reg.name} 在 {rule.value} 规则下权重和为 {format_fraction(total)}",
            witness=format_fraction(total),
        )
    return MixtureStages([(w, e.staged) for w, e in zip(weights, reg)], reg.alphabet)


def dominance_constant(
    M: StagedSemimeasure,
    nu: Semimeasure,
    depth: int,
    stage: int,
    budget: int = DEFAULT_BUDGET,
) -> Fraction:
    """min_{ℓ(x)≤depth, ν(x)>0} M^stage(x)/ν(x)"""
    check_budget(nu.alphabet, depth, budget)
    M_t = M.stage(stage)
    best: Fraction | None = None
    for x in nu.alphabet.strings_upto(depth):
        value = nu.evaluate(x)
        if value > 0:
            ratio = M_t.evaluate(x) / value
            if best is None or ratio < best:
                best = ratio
    if best is None:
        raise PreconditionViolated(f"ν 在深度 {depth} 内处处为零")
    return best


def stage_gap(nu: StagedSemimeasure, t: int, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
    """max_{ℓ(x)≤depth} limit(x) − ν^t(x)"""
    if nu.limit_hint is None:
        raise NoLimitHint("该分阶段半测度没有极限求值器")
    check_budget(nu.alphabet, depth, budget)
    stage = nu.stage(t)
    return max(
        nu.limit_hint.evaluate(x) - stage.evaluate(x) for x in nu.alphabet.strings_upto(depth)
    )


def stages_monotone(nu: StagedSemimeasure, t: int, depth: int, budget: int = DEFAULT_BUDGET) -> str | None:
    """检查 ν^t ≤ ν^{t+1}，返回首个违反的字符串"""
    check_budget(nu.alphabet, depth, budget)
    lower, upper = nu.stage(t), nu.stage(t + 1)
    for x in nu.alphabet.strings_upto(depth):
        if lower.evaluate(x) > upper.evaluate(x):
            return format_str(x)
    return None


# ---------------------------------------------------------------------------
# 清单读写
# ---------------------------------------------------------------------------


def _require_rational(params: dict[str, Any], key: str, probability: bool = True) -> Fraction:
    raw = params.get(key)
    value = validate_probability(raw) if probability else parse_rational(raw)
    if value is None:
        raise ManifestError(f"参数 {key} 必须是 \"n/d\" 形式的有理数", witness=str(raw))
    return value


def build_family(family: str, params: dict[str, Any], alphabet: Alphabet = BINARY) -> Semimeasure:
    """按族名称与参数构造精确半测度"""
    if family == "uniform":
        return family_uniform(alphabet)
    if family == "bernoulli":
        return family_bernoulli(_require_rational(params, "p"))
    if family == "poly3":
        return family_poly3()
    if family == "deterministic":
        pattern = params.get("pattern", "0")
        if not validate_symbol_pattern(pattern, alphabet.size):
            raise ManifestError("deterministic 族需要非空符号串 pattern", witness=str(pattern))
        return DeterministicMeasure.periodic(to_str(pattern), alphabet)
    if family == "scaled":
        base = params.get("base")
        if not isinstance(base, dict):
            raise ManifestError("scaled 族需要 base 定义")
        return ScaledSemimeasure(
            build_family(base.get("family", ""), base.get("params", {}), alphabet),
            _require_rational(params, "c"),
        )
    if family == "truncated":
        base = params.get("base")
        cutoff = params.get("cutoff")
        if not isinstance(base, dict) or not isinstance(cutoff, int) or cutoff < 0:
            raise ManifestError("truncated 族需要 base 与非负整数 cutoff")
        return TruncatedSemimeasure(
            build_family(base.get("family", ""), base.get("params", {}), alphabet), cutoff
        )
    raise ManifestError(f"未知的测度族: {family}", witness=family)


def staged_from_params(family: str, params: dict[str, Any], alphabet: Alphabet = BINARY) -> StagedSemimeasure:
    """params.stages == "dyadic" 时使用阶梯近似，否则常数阶段"""
    base = build_family(family, params, alphabet)
    if params.get("stages", "constant") == "dyadic":
        if not isinstance(base, ConditionalSemimeasure):
            raise ManifestError(f"族 {family} 不支持 dyadic 阶段")
        return DyadicStages(base)
    return ConstantStages(base)


def load_manifest(source: str | Path | list | dict, alphabet: Alphabet = BINARY) -> ModelRegistry:
    """
    读取注册表清单

    清单是条目列表（或带 entries 键的对象），条目形如
    {index, name, family, params, code_length, is_measure}，有理参数写作 "n/d"。
    family 为 counterexample 的条目由其前面的条目构造。
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as e:
            raise ManifestError(f"无法读取注册表清单 {path}: {e}") from e
        name = path.stem
    else:
        data = source
        name = "manifest"

    entries = data.get("entries") if isinstance(data, dict) else data
    if isinstance(data, dict):
        name = data.get("name", name)
    if not isinstance(entries, list) or not entries:
        raise ManifestError("注册表清单必须包含非空条目列表")

    registry = ModelRegistry(alphabet, name=name)
    for position, raw in enumerate(entries, start=1):
        if not isinstance(raw, dict):
            raise ManifestError(f"第 {position} 个条目不是对象")
        if raw.get("index", position) != position:
            raise ManifestError("条目索引必须从 1 开始连续", witness=str(raw.get("index")))
        family = raw.get("family")
        params = raw.get("params", {}) or {}
        code_length = raw.get("code_length")
        is_measure = raw.get("is_measure")
        if not isinstance(code_length, int) or isinstance(code_length, bool) or code_length < 0:
            raise ManifestError(f"条目 {position} 的 code_length 必须是非负整数")
        if not isinstance(is_measure, bool):
            raise ManifestError(f"条目 {position} 的 is_measure 必须是布尔值")
        entry_name = raw.get("name") or f"{family}#{position}"

        if family == "counterexample":
            from intelligence.counterexample import counterexample_stages

            staged = counterexample_stages(
                registry,
                stages=int(params.get("stages", DEFAULT_STAGE_CAP)),
                length=int(params.get("length", DEFAULT_STAGE_CAP)),
            )
        else:
            staged = staged_from_params(family, params, alphabet)
        registry.add(entry_name, staged, code_length, is_measure, family=family, params=params)

    logger.info(f"从清单加载注册表 {name}，共 {len(registry)} 个条目")
    return registry.freeze()


def save_manifest(reg: ModelRegistry, path: str | Path) -> Path:
    """把注册表写回清单（仅限清单可表达的族）"""
    entries = []
    for entry in reg:
        if entry.family == "custom":
            raise ManifestError(f"条目 {entry.name} 不是清单可表达的族", witness=entry.name)
        entries.append(
            {
                "index": entry.index,
                "name": entry.name,
                "family": entry.family,
                "params": entry.params,
                "code_length": entry.code_length,
                "is_measure": entry.is_measure,
            }
        )
    path = Path(path)
    path.write_text(
        json.dumps({"name": reg.name, "entries": entries}, ensure_ascii=False, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    return path


# ---------------------------------------------------------------------------
# 内置注册表
# ---------------------------------------------------------------------------

BASE_MANIFEST: list[dict[str, Any]] = [
    {"index": 1, "name": "uniform", "family": "uniform", "params": {}, "code_length": 2, "is_measure": True},
    {"index": 2, "name": "bernoulli(1/3)", "family": "bernoulli", "params": {"p": "1/3", "stages": "dyadic"}, "code_length": 3, "is_measure": True},
    {"index": 3, "name": "bernoulli(2/3)", "family": "bernoulli", "params": {"p": "2/3", "stages": "dyadic"}, "code_length": 3, "is_measure": True},
    {"index": 4, "name": "poly3", "family": "poly3", "params": {}, "code_length": 3, "is_measure": True},
    {"index": 5, "name": "deterministic(0)", "family": "deterministic", "params": {"pattern": "0"}, "code_length": 4, "is_measure": True},
    {"index": 6, "name": "half-uniform", "family": "scaled", "params": {"c": "1/2", "base": {"family": "uniform"}}, "code_length": 4, "is_measure": False},
]

COUNTEREXAMPLE_ENTRY: dict[str, Any] = {
    "index": 7,
    "name": "counterexample",
    "family": "counterexample",
    "params": {"stages": DEFAULT_STAGE_CAP, "length": DEFAULT_STAGE_CAP},
    "code_length": 4,
    "is_measure": False,
}

CONVERGENCE_MANIFEST: list[dict[str, Any]] = [
    {"index": 1, "name": "bernoulli(1/3)", "family": "bernoulli", "params": {"p": "1/3"}, "code_length": 2, "is_measure": True},
    {"index": 2, "name": "bernoulli(2/3)", "family": "bernoulli", "params": {"p": "2/3"}, "code_length": 2, "is_measure": True},
    {"index": 3, "name": "half-uniform", "family": "scaled", "params": {"c": "1/2", "base": {"family": "uniform"}}, "code_length": 2, "is_measure": False},
    {"index": 4, "name": "truncated-uniform(10)", "family": "truncated", "params": {"cutoff": 10, "base": {"family": "uniform"}}, "code_length": 2, "is_measure": False},
]


@lru_cache(maxsize=None)
def base_registry() -> ModelRegistry:
    """默认注册表去掉反例条目：λ、B(1/3)、B(2/3)、poly3、0^∞、½λ"""
    registry = load_manifest({"name": "base", "entries": BASE_MANIFEST})
    return registry


@lru_cache(maxsize=None)
def default_registry(stages: int = DEFAULT_STAGE_CAP, length: int = DEFAULT_STAGE_CAP) -> ModelRegistry:
    """基础注册表加上由基础混合构造的反例半测度 ν"""
    entry = copy.deepcopy(COUNTEREXAMPLE_ENTRY)
    entry["params"] = {"stages": stages, "length": max(length, stages)}
    return load_manifest({"name": "default", "entries": BASE_MANIFEST + [entry]})


@lru_cache(maxsize=None)
def convergence_registry() -> ModelRegistry:
    """收敛实验用注册表：两个 Bernoulli 测度、½λ 与截断到 10 的 λ"""
    return load_manifest({"name": "convergence", "entries": CONVERGENCE_MANIFEST})


PRESET_REGISTRIES: dict[str, Callable[[], ModelRegistry]] = {
    "default": default_registry,
    "base": base_registry,
    "convergence": convergence_registry,
}


def resolve_registry(source: str | None, default: str = "default") -> ModelRegistry:
    """预设名称或清单路径"""
    key = source or default
    if key in PRESET_REGISTRIES:
        return PRESET_REGISTRIES[key]()
    return load_manifest(key)


def code_length_for_index(k: int, slack: int = 1) -> int:
    """k + 2⌈log2 k⌉ + slack，用作索引 k 上构造物的声明码长"""
    return k + 2 * math.ceil(math.log2(max(k, 1))) + slack
