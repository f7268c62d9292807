"""
精确半测度模块
字母表、字符串、半测度/测度抽象、预测条件概率，以及实验中用到的可计算测度族。
所有取值都是 fractions.Fraction，不做任何舍入。
"""

import itertools
import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Iterator, Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction

from utils.formatters import format_str

from .errors import BudgetExceeded, PreconditionViolated, ZeroConditioning

logger: logging.Logger = logging.getLogger(__name__)

Str = tuple[int, ...]
EMPTY: Str = ()
DEFAULT_BUDGET = 2**20

# 单个对象缓存的条目上限，超出后整体清空
_CACHE_LIMIT = 2**21


def to_str(value: Str | Sequence[int] | str) -> Str:
    """把 "0101" 或序列转换为符号元组"""
    if isinstance(value, tuple):
        return value
    if isinstance(value, str):
        return tuple(int(ch) for ch in value)
    return tuple(value)


@dataclass(frozen=True)
class Alphabet:
    """有限字母表，符号记为 0..N-1"""

    size: int = 2

    def __post_init__(self):
        if self.size < 2:
            raise PreconditionViolated(f"字母表大小必须 ≥ 2，收到 {self.size}")

    @property
    def symbols(self) -> range:
        return range(self.size)

    def strings(self, n: int) -> Iterator[Str]:
        """长度为 n 的全部字符串，按字典序"""
        return itertools.product(range(self.size), repeat=n)

    def strings_upto(self, depth: int) -> Iterator[Str]:
        for n in range(depth + 1):
            yield from self.strings(n)

    def contains(self, x: Str) -> bool:
        return all(0 <= a < self.size for a in x)


BINARY = Alphabet(2)


def check_budget(alphabet: Alphabet, depth: int, budget: int = DEFAULT_BUDGET) -> None:
    """N^depth 超过预算时抛出 BudgetExceeded"""
    if depth < 0:
        raise PreconditionViolated(f"深度必须非负，收到 {depth}")
    if alphabet.size**depth > budget:
        raise BudgetExceeded(
            f"穷举规模 {alphabet.size}^{depth} 超过预算 {budget}",
            witness=f"{alphabet.size}^{depth}",
        )


class Semimeasure(ABC):
    """
    半测度抽象基类

    子类实现 evaluate；additive_depth 声明对 ℓ(x) < additive_depth 的
    所有 x 都有 Σ_a ν(xa) = ν(x)，用于跳过子树穷举。
    """

    is_measure: bool = False
    additive_depth: float = 0

    def __init__(self, alphabet: Alphabet = BINARY):
        self.alphabet = alphabet

    def __call__(self, x: Str | Sequence[int] | str) -> Fraction:
        return self.evaluate(to_str(x))

    @abstractmethod
    def evaluate(self, x: Str) -> Fraction:
        """返回 ν(x)"""

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        """Σ_{y: ℓ(xy)=depth} ν(xy)"""
        ell = len(x)
        if depth < ell:
            raise PreconditionViolated(f"深度 {depth} 小于字符串长度 {ell}")
        if depth <= self.additive_depth:
            return self.evaluate(x)
        check_budget(self.alphabet, depth - ell, budget)
        return sum(
            (self.evaluate(x + y) for y in self.alphabet.strings(depth - ell)),
            Fraction(0),
        )

    def level_mass(self, n: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        """Σ_{ℓ(x)=n} ν(x)"""
        return self.subtree_mass(EMPTY, n, budget)


class ConditionalSemimeasure(Semimeasure):
    """由逐位条件概率连乘定义的半测度"""

    root_mass: Fraction = Fraction(1)

    def __init__(self, alphabet: Alphabet = BINARY):
        super().__init__(alphabet)
        self._cache: dict[Str, Fraction] = {EMPTY: self.root_mass}

    @abstractmethod
    def conditional_vector(self, x: Str) -> tuple[Fraction, ...]:
        """返回 (ν(0|x), ..., ν(N-1|x))"""

    def evaluate(self, x: Str) -> Fraction:
        cached = self._cache.get(x)
        if cached is not None:
            return cached

        start = len(x)
        while start > 0 and x[:start] not in self._cache:
            start -= 1
        value = self._cache[x[:start]]

        if len(self._cache) > _CACHE_LIMIT:
            self._cache = {EMPTY: self.root_mass}

        for t in range(start, len(x)):
            if value != 0:
                value = value * self.conditional_vector(x[:t])[x[t]]
            self._cache[x[: t + 1]] = value
        return value


class IIDSemimeasure(ConditionalSemimeasure):
    """条件概率与历史无关的（可能有缺损的）i.i.d. 半测度"""

    def __init__(self, probs: Sequence[Fraction], alphabet: Alphabet | None = None):
        probs = tuple(Fraction(p) for p in probs)
        alphabet = alphabet or Alphabet(len(probs))
        if len(probs) != alphabet.size:
            raise PreconditionViolated("概率向量长度与字母表不一致")
        if any(p < 0 for p in probs) or sum(probs) > 1:
            raise PreconditionViolated(f"非法的条件概率向量: {probs}")
        self.probs = probs
        self.total = sum(probs, Fraction(0))
        self.is_measure = self.total == 1
        self.additive_depth = math.inf if self.is_measure else 0
        super().__init__(alphabet)

    def conditional_vector(self, x: Str) -> tuple[Fraction, ...]:
        return self.probs

    def evaluate(self, x: Str) -> Fraction:
        value = Fraction(1)
        for a in self.alphabet.symbols:
            count = x.count(a)
            if count:
                value *= self.probs[a] ** count
        return value

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        if depth < len(x):
            raise PreconditionViolated(f"深度 {depth} 小于字符串长度 {len(x)}")
        return self.evaluate(x) * self.total ** (depth - len(x))


class UniformMeasure(IIDSemimeasure):
    """均匀测度 λ(x) = N^-ℓ(x)"""

    def __init__(self, alphabet: Alphabet = BINARY):
        super().__init__([Fraction(1, alphabet.size)] * alphabet.size, alphabet)

    def evaluate(self, x: Str) -> Fraction:
        return Fraction(1, self.alphabet.size ** len(x))


class BernoulliMeasure(IIDSemimeasure):
    """二元 Bernoulli(p)，p 为下一位是 1 的概率"""

    def __init__(self, p: Fraction):
        p = Fraction(p)
        if not 0 <= p <= 1:
            raise PreconditionViolated(f"Bernoulli 参数必须在 [0,1]，收到 {p}")
        self.p = p
        super().__init__([1 - p, p], BINARY)


class Poly3Measure(ConditionalSemimeasure):
    """μ(1|x_{<n}) = ½n⁻³ 的二元测度，其 0^∞ 概率收敛到正常数"""

    is_measure = True
    additive_depth = math.inf

    def __init__(self):
        super().__init__(BINARY)

    def conditional_vector(self, x: Str) -> tuple[Fraction, ...]:
        n = len(x) + 1
        one = Fraction(1, 2 * n**3)
        return (1 - one, one)

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        return self.evaluate(x)


class DeterministicMeasure(ConditionalSemimeasure):
    """集中在序列 α 上的确定性测度，generator(n) 给出 α_n（n 从 1 开始）"""

    is_measure = True
    additive_depth = math.inf

    def __init__(self, generator: Callable[[int], int], alphabet: Alphabet = BINARY):
        self.generator = generator
        super().__init__(alphabet)

    @classmethod
    def periodic(cls, pattern: Str | str, alphabet: Alphabet = BINARY):
        """α = pattern pattern pattern ..."""
        pattern = to_str(pattern)
        if not pattern or not alphabet.contains(pattern):
            raise PreconditionViolated(f"非法的周期模式: {pattern}")
        return cls(lambda n: pattern[(n - 1) % len(pattern)], alphabet)

    @classmethod
    def from_prefix(cls, prefix: Str, fill: int = 0, alphabet: Alphabet = BINARY):
        """α = prefix 后接常数 fill"""
        prefix = tuple(prefix)
        return cls(lambda n: prefix[n - 1] if n <= len(prefix) else fill, alphabet)

    def conditional_vector(self, x: Str) -> tuple[Fraction, ...]:
        target = self.generator(len(x) + 1)
        return tuple(Fraction(int(a == target)) for a in self.alphabet.symbols)

    def evaluate(self, x: Str) -> Fraction:
        for i, a in enumerate(x):
            if a != self.generator(i + 1):
                return Fraction(0)
        return Fraction(1)

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        return self.evaluate(x)


class FlooredConditionalSemimeasure(ConditionalSemimeasure):
    """把 base 的每个条件概率向下取整到 2^-bits 网格"""

    def __init__(self, base: ConditionalSemimeasure, bits: int):
        self.base = base
        self.bits = bits
        super().__init__(base.alphabet)

    def conditional_vector(self, x: Str) -> tuple[Fraction, ...]:
        scale = 2**self.bits
        return tuple(
            Fraction(math.floor(c * scale), scale) for c in self.base.conditional_vector(x)
        )


def floor_conditionals(base: ConditionalSemimeasure, bits: int) -> ConditionalSemimeasure:
    """t 位截断的下近似，i.i.d. 族保持 i.i.d. 形式以便闭式求和"""
    if isinstance(base, IIDSemimeasure):
        scale = 2**bits
        return IIDSemimeasure(
            [Fraction(math.floor(p * scale), scale) for p in base.probs], base.alphabet
        )
    return FlooredConditionalSemimeasure(base, bits)


class TableSemimeasure(Semimeasure):
    """显式表格给出的半测度，表外取 0"""

    def __init__(
        self,
        values: Mapping[Str, Fraction],
        alphabet: Alphabet = BINARY,
        additive_depth: float = 0,
    ):
        super().__init__(alphabet)
        self.values = {tuple(k): Fraction(v) for k, v in values.items()}
        self.additive_depth = additive_depth

    def evaluate(self, x: Str) -> Fraction:
        return self.values.get(x, Fraction(0))

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        if depth <= self.additive_depth:
            return self.evaluate(x)
        ell = len(x)
        return sum(
            (v for k, v in self.values.items() if len(k) == depth and k[:ell] == x),
            Fraction(0),
        )


class ZeroSemimeasure(Semimeasure):
    """恒为零"""

    additive_depth = math.inf

    def evaluate(self, x: Str) -> Fraction:
        return Fraction(0)


class ScaledSemimeasure(Semimeasure):
    """c·ν，c ∈ [0,1]"""

    def __init__(self, base: Semimeasure, scale: Fraction):
        super().__init__(base.alphabet)
        scale = Fraction(scale)
        if not 0 <= scale <= 1:
            raise PreconditionViolated(f"缩放系数必须在 [0,1]，收到 {scale}")
        self.base = base
        self.scale = scale
        self.additive_depth = base.additive_depth
        self.is_measure = base.is_measure and scale == 1

    def evaluate(self, x: Str) -> Fraction:
        return self.scale * self.base.evaluate(x)

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        return self.scale * self.base.subtree_mass(x, depth, budget)


class SumSemimeasure(Semimeasure):
    """Σ_i w_i·ν_i 的逐点加权和"""

    def __init__(self, terms: Sequence[tuple[Fraction, Semimeasure]], alphabet: Alphabet | None = None):
        terms = [(Fraction(w), nu) for w, nu in terms]
        if alphabet is None:
            if not terms:
                raise PreconditionViolated("空加权和需要显式指定字母表")
            alphabet = terms[0][1].alphabet
        super().__init__(alphabet)
        self.terms = terms
        self.additive_depth = min((nu.additive_depth for _, nu in terms), default=math.inf)
        self.is_measure = (
            bool(terms)
            and all(nu.is_measure for _, nu in terms)
            and sum(w for w, _ in terms) == 1
        )

    def evaluate(self, x: Str) -> Fraction:
        return sum((w * nu.evaluate(x) for w, nu in self.terms if w), Fraction(0))

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        return sum(
            (w * nu.subtree_mass(x, depth, budget) for w, nu in self.terms if w),
            Fraction(0),
        )


class NormalizedSemimeasure(Semimeasure):
    """ν(x)/ν(ε)；ν 与某个测度成比例时结果是测度"""

    def __init__(self, base: Semimeasure):
        super().__init__(base.alphabet)
        self.base = base
        self.root = base.evaluate(EMPTY)
        if self.root == 0:
            raise ZeroConditioning("无法归一化：ν(ε) = 0", witness="ε")
        self.additive_depth = base.additive_depth
        self.is_measure = base.additive_depth == math.inf

    def evaluate(self, x: Str) -> Fraction:
        return self.base.evaluate(x) / self.root

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        return self.base.subtree_mass(x, depth, budget) / self.root


class TruncatedSemimeasure(Semimeasure):
    """
    ρ(x) = Σ_{ℓ(xy)=cutoff} ν(xy)（ℓ(x) ≤ cutoff），更长的字符串取 0。
    结果在 cutoff 以内逐层守恒。
    """

    def __init__(self, base: Semimeasure, cutoff: int, budget: int = DEFAULT_BUDGET):
        super().__init__(base.alphabet)
        self.base = base
        self.cutoff = cutoff
        self.budget = budget
        self.additive_depth = cutoff
        self._cache: dict[Str, Fraction] = {}

    def evaluate(self, x: Str) -> Fraction:
        if len(x) > self.cutoff:
            return Fraction(0)
        cached = self._cache.get(x)
        if cached is None:
            cached = self.base.subtree_mass(x, self.cutoff, self.budget)
            if len(self._cache) < _CACHE_LIMIT:
                self._cache[x] = cached
        return cached

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        if depth > self.cutoff:
            return Fraction(0)
        return self.evaluate(x)


def family_uniform(alphabet: Alphabet = BINARY) -> UniformMeasure:
    return UniformMeasure(alphabet)


def family_bernoulli(p: Fraction) -> BernoulliMeasure:
    return BernoulliMeasure(p)


def family_poly3() -> Poly3Measure:
    return Poly3Measure()


def family_deterministic(
    generator: Callable[[int], int] | None = None, alphabet: Alphabet = BINARY
) -> DeterministicMeasure:
    """默认集中在 0^∞"""
    if generator is None:
        return DeterministicMeasure.periodic("0", alphabet)
    return DeterministicMeasure(generator, alphabet)


def joint(nu: Semimeasure, x: Str | str) -> Fraction:
    """ν(x)"""
    return nu(x)


def conditional(nu: Semimeasure, x: Str | str, a: int) -> Fraction:
    """
    预测条件概率 ν(a|x) = ν(xa)/ν(x)

    Raises:
        ZeroConditioning: ν(x) = 0
    """
    x = to_str(x)
    denominator = nu.evaluate(x)
    if denominator == 0:
        raise ZeroConditioning("条件化字符串的概率为零", witness=format_str(x))
    return nu.evaluate(x + (a,)) / denominator


def predictive_vector(nu: Semimeasure, x: Str | str) -> tuple[Fraction, ...]:
    """精确的 (ν(a|x))_a"""
    x = to_str(x)
    denominator = nu.evaluate(x)
    if denominator == 0:
        raise ZeroConditioning("条件化字符串的概率为零", witness=format_str(x))
    return tuple(nu.evaluate(x + (a,)) / denominator for a in nu.alphabet.symbols)


@dataclass
class SemimeasureReport:
    """半测度穷举校验结果"""

    passed: bool
    depth: int
    root_mass: Fraction
    equality_everywhere: bool
    witness: str | None = None
    checked: int = 0

    @property
    def is_measure_like(self) -> bool:
        """到该深度为止满足测度等式"""
        return self.passed and self.equality_everywhere and self.root_mass == 1


def verify_semimeasure(
    nu: Semimeasure, depth: int, budget: int = DEFAULT_BUDGET
) -> SemimeasureReport:
    """
    按层穷举检查 ν(x) ≥ Σ_a ν(xa)（ℓ(x) < depth）以及 0 ≤ ν(ε) ≤ 1

    Returns:
        SemimeasureReport: 首个违反处（先短后字典序）作为 witness
    """
    check_budget(nu.alphabet, depth, budget)
    root = nu.evaluate(EMPTY)
    report = SemimeasureReport(
        passed=True, depth=depth, root_mass=root, equality_everywhere=True
    )
    if root < 0 or root > 1:
        report.passed = False
        report.witness = "ε"
        return report

    level: list[tuple[Str, Fraction]] = [(EMPTY, root)]
    for _ in range(depth):
        next_level: list[tuple[Str, Fraction]] = []
        for x, value in level:
            children = [(x + (a,), nu.evaluate(x + (a,))) for a in nu.alphabet.symbols]
            report.checked += 1
            total = sum((v for _, v in children), Fraction(0))
            negative = [c for c, v in children if v < 0]
            if negative or total > value:
                report.passed = False
                report.equality_everywhere = False
                report.witness = format_str(negative[0] if negative else x)
                logger.debug(f"半测度校验失败于 {report.witness}")
                return report
            if total != value:
                report.equality_everywhere = False
            next_level.extend(children)
        level = next_level
    return report
