"""
随机性模块
相对注册表混合的随机性缺损轨迹、上鞅判定与构造，以及由期望界推出个体界的构造。
对数以 2 为底。
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

from core.errors import ExpectationExceeded, PreconditionViolated, ZeroConditioning
from core.measures import (
    BINARY,
    DEFAULT_BUDGET,
    EMPTY,
    Alphabet,
    Semimeasure,
    Str,
    TableSemimeasure,
    check_budget,
    to_str,
    verify_semimeasure,
)
from core.numeric import DEFAULT_PRECISION, ceil_dyadic, dlog2, to_decimal, working_precision
from core.registry import ConstantStages, ModelRegistry, StagedSemimeasure, WeightRule, mixture
from utils.formatters import format_decimal, format_fraction, format_str

logger: logging.Logger = logging.getLogger(__name__)

DEFICIENCY_COLUMNS = ["n", "log_ratio", "running_sup"]

Functional = Callable[[int, Str], Fraction]

NEG_INF = Decimal("-Infinity")


@dataclass
class DeficiencyTrace:
    """
    log₂(M(ω_{1:n})/μ(ω_{1:n})) 及其前缀上确界
    上确界只取到视界 n，是真实缺损的下界
    """

    per_n: list[Decimal]
    sup_so_far: list[Decimal]
    ratios: list[Fraction]
    reference: str
    stage: int
    precision: int = DEFAULT_PRECISION

    @property
    def horizon(self) -> int:
        return len(self.per_n)

    @property
    def supremum(self) -> Decimal:
        return self.sup_so_far[-1] if self.sup_so_far else NEG_INF

    @property
    def max_ratio(self) -> Fraction:
        return max(self.ratios, default=Fraction(0))

    @property
    def min_ratio(self) -> Fraction:
        return min(self.ratios, default=Fraction(0))

    def floor_witness(self, w: Fraction) -> int | None:
        """首个 M/μ < w 的前缀长度；全部满足 log₂(M/μ) ≥ log₂ w 时为 None"""
        w = Fraction(w)
        return next((n for n, r in enumerate(self.ratios, start=1) if r < w), None)

    def is_random(self, c: Fraction) -> bool:
        """到视界 n 为止 sup ≤ log c，按精确比值判定"""
        return self.max_ratio <= Fraction(c)

    def csv_rows(self) -> list[list[str]]:
        return [
            [str(n), format_decimal(v), format_decimal(s)]
            for n, (v, s) in enumerate(zip(self.per_n, self.sup_so_far), start=1)
        ]


def deficiency_trace(
    M: StagedSemimeasure,
    mu: Semimeasure,
    omega: Str | str,
    n: int,
    stage: int,
    precision: int = DEFAULT_PRECISION,
    reference: str = "registry-mixture",
) -> DeficiencyTrace:
    """
    用第 stage 阶段的混合值计算缺损轨迹

    Raises:
        ZeroConditioning: μ(ω_{1:t}) = 0
    """
    omega = to_str(omega)
    if len(omega) < n:
        raise PreconditionViolated(f"序列长度 {len(omega)} 小于视界 {n}")
    M_t = M.stage(stage)
    trace = DeficiencyTrace([], [], [], reference, stage, precision)
    with working_precision(precision):
        best = NEG_INF
        for t in range(1, n + 1):
            prefix = omega[:t]
            mu_x = mu.evaluate(prefix)
            if mu_x == 0:
                raise ZeroConditioning("缺损轨迹要求 μ(ω_{1:t}) > 0", witness=format_str(prefix))
            ratio = M_t.evaluate(prefix) / mu_x
            value = dlog2(ratio) if ratio > 0 else NEG_INF
            best = max(best, value)
            trace.ratios.append(ratio)
            trace.per_n.append(value)
            trace.sup_so_far.append(best)
    logger.debug(f"缺损轨迹 n={n} stage={stage} sup={format_decimal(trace.supremum, 8)}")
    return trace


@dataclass
class Supermartingale:
    """
    字符串上的非负函数
    support 给出时，只有 support(x) 为真的节点可能取非零值，其余子树恒为零
    """

    eval: Callable[[Str], Fraction]
    alphabet: Alphabet = BINARY
    support: Callable[[Str], bool] | None = None

    def __call__(self, x: Str | str) -> Fraction:
        return self.eval(to_str(x))


def is_supermartingale(
    m: Supermartingale, depth: int, budget: int = DEFAULT_BUDGET
) -> tuple[bool, str | None]:
    """
    按层检查 m(x) ≥ (1/N)Σ_a m(xa) 与非负性

    Returns:
        (是否通过, 首个违反处)
    """
    if m.support is None:
        check_budget(m.alphabet, depth, budget)
    size = m.alphabet.size
    level: list[Str] = [EMPTY]
    visited = 0
    if m(EMPTY) < 0:
        return False, format_str(EMPTY)
    for _ in range(depth):
        next_level: list[Str] = []
        for x in level:
            value = m.eval(x)
            children = [x + (a,) for a in m.alphabet.symbols]
            child_values = [m.eval(c) for c in children]
            visited += 1
            if visited > budget:
                raise PreconditionViolated(f"上鞅检查访问的节点超过预算 {budget}")
            for c, v in zip(children, child_values):
                if v < 0:
                    return False, format_str(c)
            if sum(child_values, Fraction(0)) > size * value:
                return False, format_str(x)
            for c, v in zip(children, child_values):
                if m.support is None or m.support(c):
                    next_level.append(c)
                elif v != 0:
                    return False, format_str(c)
        level = next_level
    return True, None


def semimeasure_to_supermartingale(nu: Semimeasure) -> Supermartingale:
    """m(x) = ν(x)/λ(x) = ν(x)·2^ℓ(x)"""
    if nu.alphabet.size != 2:
        raise PreconditionViolated("只对二元字母表定义 ν/λ")
    return Supermartingale(lambda x: nu.evaluate(x) * 2 ** len(x), nu.alphabet)


def dominance_witness(
    dominant: Semimeasure, nu: Semimeasure, weight: Fraction, depth: int, budget: int = DEFAULT_BUDGET
) -> str | None:
    """首个 dominant(x) < weight·ν(x) 的 x（ℓ(x) ≤ depth），处处满足时为 None"""
    check_budget(nu.alphabet, depth, budget)
    weight = Fraction(weight)
    for x in nu.alphabet.strings_upto(depth):
        if dominant.evaluate(x) < weight * nu.evaluate(x):
            return format_str(x)
    return None


def constant_schedule(eps: Fraction) -> Callable[[int], Fraction]:
    eps = Fraction(eps)
    return lambda k: eps


def dyadic_upper_schedule(eps: Decimal, bits: int) -> Callable[[int], Fraction]:
    """ε_k = ⌈ε·2^{bits+k}⌉/2^{bits+k}，对 k 单调不增并收敛到 ε"""

    def schedule(k: int) -> Fraction:
        with working_precision(bits + k + 32):
            return ceil_dyadic(to_decimal(eps), bits + k)

    return schedule


def prefix_functional(F: Callable[[Str], Fraction]) -> Functional:
    """只依赖字符串本身的泛函 F(x) 视作 F_n(x)"""
    return lambda k, x: F(x)


@dataclass
class IndividualBoundReport:
    """期望界到个体界的构造结果"""

    horizon: int
    codelen: int
    expectations: list[Fraction] = field(default_factory=list)
    epsilons: list[Fraction] = field(default_factory=list)
    mu_bar: TableSemimeasure | None = None
    semimeasure_passed: bool = True
    monotone_passed: bool = True
    monotone_witness: str | None = None
    dominance_passed: bool = False
    dominance_witness: str | None = None
    functional_value: Fraction = Fraction(0)
    exact_bound: Fraction = Fraction(0)
    deficiency: Decimal = NEG_INF
    bound_value: Decimal = Decimal(0)
    bound_passed: bool = False

    @property
    def passed(self) -> bool:
        return (
            self.semimeasure_passed
            and self.monotone_passed
            and self.dominance_passed
            and self.bound_passed
        )


def _mu_bar_table(
    F: Functional, mu: Semimeasure, eps_k: Fraction, k: int
) -> tuple[dict[Str, Fraction], Fraction]:
    """μ̄_k(y) = μ(y)F_k(y)/ε_k 在第 k 层，较短前缀取子节点之和"""
    table: dict[Str, Fraction] = {}
    expectation = Fraction(0)
    for y in mu.alphabet.strings(k):
        mass = mu.evaluate(y)
        value = mass * F(k, y) if mass else Fraction(0)
        if value < 0:
            raise PreconditionViolated("F_n 必须非负", witness=format_str(y))
        expectation += value
        table[y] = value / eps_k
    for length in range(k - 1, -1, -1):
        for x in mu.alphabet.strings(length):
            table[x] = sum((table[x + (a,)] for a in mu.alphabet.symbols), Fraction(0))
    return table, expectation


def expected_to_individual(
    F: Functional,
    mu: Semimeasure,
    eps_schedule: Callable[[int], Fraction] | Sequence[Fraction],
    codelen: int,
    omega: Str | str,
    n: int,
    registry: ModelRegistry,
    stage: int,
    precision: int = DEFAULT_PRECISION,
    budget: int = DEFAULT_BUDGET,
) -> IndividualBoundReport:
    """
    构造 μ̄_k(x) = ε_k⁻¹·Σ_{ℓ(xy)=k} μ(xy)F_k(xy)（k ≤ n），
    以码长 codelen 加入注册表后检查 M ≥ 2^{-codelen}·μ̄_n，
    并给出 F_n(ω) ≤ ε_n·2^{codelen+d} 的个体界

    Args:
        F: F(k, x) 给出 ℓ(x)=k 时的 F_k(x)
        eps_schedule: ε_k，k=1..n，单调不增
        codelen: μ̄ 在注册表中的声明码长
        registry: 被扩展的注册表，原对象不变

    Raises:
        ExpectationExceeded: 某个 k 上 E_μ[F_k] > ε_k
    """
    check_budget(mu.alphabet, n, budget)
    omega = to_str(omega)
    if len(omega) < n:
        raise PreconditionViolated(f"序列长度 {len(omega)} 小于视界 {n}")
    schedule = eps_schedule if callable(eps_schedule) else (lambda k: Fraction(eps_schedule[k - 1]))

    report = IndividualBoundReport(horizon=n, codelen=codelen)
    previous: dict[Str, Fraction] | None = None
    table: dict[Str, Fraction] = {}
    for k in range(1, n + 1):
        eps_k = Fraction(schedule(k))
        if eps_k <= 0:
            raise PreconditionViolated(f"ε_{k} 必须为正", witness=format_fraction(eps_k))
        if report.epsilons and eps_k > report.epsilons[-1]:
            raise PreconditionViolated("ε_k 必须单调不增", witness=str(k))
        table, expectation = _mu_bar_table(F, mu, eps_k, k)
        report.epsilons.append(eps_k)
        report.expectations.append(expectation)
        if expectation > eps_k:
            raise ExpectationExceeded(
                f"E_μ[F_{k}] = {format_fraction(expectation)} > ε_{k} = {format_fraction(eps_k)}",
                witness=str(k),
            )

        check = verify_semimeasure(TableSemimeasure(table, mu.alphabet, additive_depth=k), k, budget)
        if not check.passed:
            report.semimeasure_passed = False
            logger.warning(f"μ̄_{k} 不是半测度，违反于 {check.witness}")

        if previous is not None and report.monotone_passed:
            for x, value in previous.items():
                if table[x] < value:
                    report.monotone_passed = False
                    report.monotone_witness = format_str(x)
                    logger.warning(f"μ̄_{k} < μ̄_{k - 1} 于 {report.monotone_witness}")
                    break
        previous = table

    mu_bar = TableSemimeasure(table, mu.alphabet, additive_depth=n)
    report.mu_bar = mu_bar

    augmented = registry.extended("mu-bar", ConstantStages(mu_bar), codelen, is_measure=False)
    M_aug = mixture(augmented, WeightRule.CODE_LENGTH)
    report.dominance_witness = dominance_witness(M_aug.stage(stage), mu_bar, Fraction(1, 2**codelen), n, budget)
    report.dominance_passed = report.dominance_witness is None
    if not report.dominance_passed:
        logger.warning(f"M < 2^-{codelen}·μ̄_{n} 于 {report.dominance_witness}")
    prefix = omega[:n]

    trace = deficiency_trace(M_aug, mu, omega, n, stage, precision, reference=augmented.name)
    eps_n = report.epsilons[-1]
    report.functional_value = F(n, prefix)
    report.exact_bound = eps_n * 2**codelen * trace.ratios[-1]
    report.deficiency = trace.supremum
    with working_precision(precision):
        report.bound_value = to_decimal(eps_n) * Decimal(2) ** (Decimal(codelen) + trace.supremum)
        report.bound_passed = (
            report.functional_value <= report.exact_bound
            and to_decimal(report.functional_value) <= report.bound_value
        )

    logger.info(
        f"期望到个体界 n={n}: F_n(ω)={format_fraction(report.functional_value)} "
        f"界={format_decimal(report.bound_value, 8)} {'通过' if report.passed else '失败'}"
    )
    return report
