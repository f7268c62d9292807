"""
反例构造模块
相对注册表混合的最左随机序列 α、可枚举的振荡上鞅 r、字典序半测度 ν、
污染混合 M′ 与反支配序列；混合 M 代替真正的普适半测度。
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from core.errors import BudgetExceeded, GammaOutOfRange, PreconditionViolated, ZeroConditioning
from core.measures import (
    DEFAULT_BUDGET,
    DeterministicMeasure,
    Semimeasure,
    Str,
    SumSemimeasure,
    predictive_vector,
)
from core.registry import (
    ConstantStages,
    FunctionStages,
    ModelRegistry,
    StagedSemimeasure,
    WeightRule,
    code_length_for_index,
    mixture,
)
from utils.formatters import format_fraction, format_str

from .randomness import Supermartingale

logger: logging.Logger = logging.getLogger(__name__)

SUBSTITUTION_NOTE = "普适半测度 M 由注册表混合代替，α 是相对该混合的最左随机序列"

CONTAMINATION_COLUMNS = ["n", "alpha_n", "conditional", "lambda_conditional", "is_01", "r_prefix"]
ANTI_DOMINANCE_COLUMNS = ["n", "alpha_n", "nu_prefix", "product_bound", "four_bound"]
OSCILLATION_COLUMNS = ["n", "r_before", "r_after", "r_ratio", "r_prime_ratio"]

# 局部形态 (奇偶, r(x), r(x0), r(x1))
HALF = Fraction(1, 2)
DISPLAYED_CONFIGURATIONS = frozenset(
    [("any", Fraction(0), Fraction(0), Fraction(0))]
    + [("odd", HALF, Fraction(1), Fraction(0)), ("odd", HALF, Fraction(0), Fraction(1)), ("odd", Fraction(1), Fraction(1), Fraction(1))]
    + [("even", Fraction(1), HALF, Fraction(0)), ("even", Fraction(1), Fraction(0), HALF), ("even", Fraction(1), HALF, HALF)]
)


@dataclass
class AlphaTrace:
    """各阶段的 α^t（t = 1..T），长度 max(N+1, T)"""

    sequences: list[Str]
    stages: int
    horizon: int
    stabilization: list[int] = field(default_factory=list)
    monotone: bool = True
    invariant_passed: bool = True
    invariant_witness: str | None = None

    @property
    def length(self) -> int:
        return len(self.sequences[0]) if self.sequences else 0

    def alpha(self, t: int) -> Str:
        if not 1 <= t <= self.stages:
            raise PreconditionViolated(f"阶段 {t} 超出 1..{self.stages}")
        return self.sequences[t - 1]

    @property
    def limit(self) -> Str:
        """α^T，作为已稳定的 α"""
        return self.sequences[-1]

    def positions_01(self, upto: int | None = None) -> list[int]:
        """α_n α_{n+1} = 01 的位置 n（n+1 ≤ min(upto, T)）"""
        alpha = self.limit
        last = min(upto or self.horizon, self.stages - 1, len(alpha) - 1)
        return [n for n in range(1, last + 1) if alpha[n - 1] == 0 and alpha[n] == 1]

    def to_dict(self) -> dict[str, Any]:
        return {
            "stages": self.stages,
            "horizon": self.horizon,
            "alpha": format_str(self.limit[: self.horizon]),
            "stabilization": list(self.stabilization),
            "monotone": self.monotone,
            "invariant_passed": self.invariant_passed,
            "invariant_witness": self.invariant_witness,
            "positions_01": self.positions_01(),
        }


def build_alpha(M: StagedSemimeasure, T: int, N: int, budget: int = DEFAULT_BUDGET) -> AlphaTrace:
    """
    α^t_n = 0 当 M^t(α^t_{<n}0) ≤ 2^-n，否则为 1（等号取 0）

    Raises:
        BudgetExceeded: T·max(N+1, T) 超过预算
    """
    if M.alphabet.size != 2:
        raise PreconditionViolated("α 的构造只对二元字母表定义")
    length = max(N + 1, T)
    if T * length > budget:
        raise BudgetExceeded(f"构造 α 需要 {T}×{length} 次求值，超过预算 {budget}", witness=f"{T}x{length}")

    sequences: list[Str] = []
    for t in range(1, T + 1):
        M_t = M.stage(t)
        alpha: list[int] = []
        for n in range(1, length + 1):
            candidate = tuple(alpha) + (0,)
            alpha.append(0 if M_t.evaluate(candidate) <= Fraction(1, 2**n) else 1)
        sequences.append(tuple(alpha))
        logger.debug(f"α^{t} 前 {min(N, 16)} 位: {format_str(sequences[-1][: min(N, 16)])}")

    trace = AlphaTrace(sequences=sequences, stages=T, horizon=N)
    trace.monotone = all(a <= b for a, b in zip(sequences, sequences[1:]))

    for t, alpha in enumerate(sequences, start=1):
        M_t = M.stage(t)
        for n in range(0, N + 1):
            if M_t.evaluate(alpha[:n]) > Fraction(1, 2**n):
                trace.invariant_passed = False
                trace.invariant_witness = f"t={t}, n={n}"
                break
        if not trace.invariant_passed:
            break

    final = sequences[-1]
    for n in range(1, N + 1):
        stable = T
        while stable > 1 and sequences[stable - 2][:n] == final[:n]:
            stable -= 1
        trace.stabilization.append(stable)

    logger.info(
        f"α 构造完成 T={T} N={N}: α={format_str(final[:N])} "
        f"单调={'是' if trace.monotone else '否'} 随机性不变式={'通过' if trace.invariant_passed else '失败'}"
    )
    return trace


class OscillatorR:
    """
    偶数长度：x = α^t_{<n}（t ≤ T, n ≤ N+1）时 r(x)=1，否则 0
    奇数长度：r(x) = ½[r(x0) + r(x1)]
    """

    def __init__(self, trace: AlphaTrace):
        self.trace = trace
        self.depth = trace.horizon
        self.prefixes: set[Str] = {
            alpha[:k] for alpha in trace.sequences for k in range(0, trace.horizon + 2)
        }
        self._cache: dict[Str, Fraction] = {}

    def __call__(self, x: Str) -> Fraction:
        return self.evaluate(tuple(x))

    def evaluate(self, x: Str) -> Fraction:
        cached = self._cache.get(x)
        if cached is not None:
            return cached
        if len(x) > self.depth + 1:
            raise PreconditionViolated(f"r 只定义到深度 {self.depth + 1}")
        if x not in self.prefixes:
            value = Fraction(0)
        elif len(x) % 2 == 0:
            value = Fraction(1)
        else:
            value = (self.evaluate(x + (0,)) + self.evaluate(x + (1,))) / 2
        self._cache[x] = value
        return value

    def as_supermartingale(self) -> Supermartingale:
        return Supermartingale(self.evaluate, support=lambda x: x in self.prefixes)

    def census(self) -> dict[tuple[str, Fraction, Fraction, Fraction], int]:
        """支撑节点上的局部形态计数"""
        counts: Counter = Counter()
        for x in self.prefixes:
            if len(x) >= self.depth:
                continue
            parity = "even" if len(x) % 2 == 0 else "odd"
            counts[(parity, self.evaluate(x), self.evaluate(x + (0,)), self.evaluate(x + (1,)))] += 1
        return dict(counts)

    def unexpected_configurations(self) -> list[tuple[str, Fraction, Fraction, Fraction]]:
        """不在七种图示形态内的形态（只报告）"""
        found = []
        for config in self.census():
            parity, top, left, right = config
            if ("any", top, left, right) in DISPLAYED_CONFIGURATIONS:
                continue
            if config not in DISPLAYED_CONFIGURATIONS:
                found.append(config)
        return sorted(found)


def build_r(trace: AlphaTrace) -> OscillatorR:
    return OscillatorR(trace)


class LexicographicSemimeasure(Semimeasure):
    """
    ν^t：第 t 层上字典序小于 α^t_{1:t} 的串取 2^-t，其余为 0，较短的串取子节点之和。
    闭式：x < α^t_{1:ℓ} 时 2^-ℓ，x > α^t_{1:ℓ} 时 0，x = α^t_{1:ℓ} 时 Σ_{j>ℓ, α_j=1} 2^-j
    """

    def __init__(self, alpha: Str, t: int):
        super().__init__()
        if len(alpha) < t:
            raise PreconditionViolated(f"α 长度 {len(alpha)} 不足 {t}")
        self.alpha = tuple(alpha[:t])
        self.t = t
        self.additive_depth = t
        suffix = [Fraction(0)] * (t + 1)
        for j in range(t, 0, -1):
            suffix[j - 1] = suffix[j] + (Fraction(1, 2**j) if self.alpha[j - 1] == 1 else 0)
        self._suffix = suffix

    def evaluate(self, x: Str) -> Fraction:
        ell = len(x)
        if ell > self.t:
            return Fraction(0)
        target = self.alpha[:ell]
        if x < target:
            return Fraction(1, 2**ell)
        if x > target:
            return Fraction(0)
        return self._suffix[ell]

    def subtree_mass(self, x: Str, depth: int, budget: int = DEFAULT_BUDGET) -> Fraction:
        if depth < len(x):
            raise PreconditionViolated(f"深度 {depth} 小于字符串长度 {len(x)}")
        return self.evaluate(x) if depth <= self.t else Fraction(0)


def build_nu(trace: AlphaTrace, t: int) -> LexicographicSemimeasure:
    """由 α^t_{1:t} 定义的 ν^t"""
    return LexicographicSemimeasure(trace.alpha(t), t)


def counterexample_stages(registry: ModelRegistry, stages: int = 64, length: int = 64) -> FunctionStages:
    """以 registry 当前条目的码长混合构造 α，再得到分阶段的 ν（极限取 ν^T）"""
    M = mixture(registry, WeightRule.CODE_LENGTH)
    trace = build_alpha(M, stages, length)
    return FunctionStages(
        lambda t: build_nu(trace, min(t, stages)),
        registry.alphabet,
        limit_hint=build_nu(trace, stages),
        is_measure=False,
    )


def contamination_bound(gamma: Fraction) -> Fraction:
    """(1 − γ)/(1 + 3γ)"""
    gamma = Fraction(gamma)
    return (1 - gamma) / (1 + 3 * gamma)


@dataclass
class ContaminationReport:
    """M′ = (1 − γ)ν + γM 沿 α 的条件概率序列"""

    gamma: Fraction
    bound: Fraction
    mixture: SumSemimeasure
    conditionals: list[Fraction] = field(default_factory=list)
    positions_01: list[int] = field(default_factory=list)
    far_positions: list[int] = field(default_factory=list)
    r_values: list[Fraction] = field(default_factory=list)
    verdicts: dict[str, bool] = field(default_factory=dict)
    witness: str | None = None

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def csv_rows(self, alpha: Str) -> list[list[str]]:
        rows = []
        marks = set(self.positions_01)
        for n, c in enumerate(self.conditionals, start=1):
            r_value = format_fraction(self.r_values[n - 1]) if n <= len(self.r_values) else ""
            rows.append([str(n), str(alpha[n - 1]), format_fraction(c), "1/2", str(int(n in marks)), r_value])
        return rows


def contaminated_mixture(
    nu: Semimeasure,
    M: StagedSemimeasure,
    gamma: Fraction,
    trace: AlphaTrace,
    r: OscillatorR | None = None,
) -> ContaminationReport:
    """
    沿 α^T 计算 M′(α_n|α_{<n})，在 01 位置检查 ≥ (1−γ)/(1+3γ)，
    以及 ν(α_{<n}) = ν(α_{1:n})（α_n = 0）与 ν(α_{1:n}) ≥ 2^{-n-1}（01 位置）

    Args:
        nu: 由同一条 α 构造的 ν（通常为 ν^T）
        M: 构造 α 时使用的混合，取第 T 阶段

    Raises:
        GammaOutOfRange: γ ∉ (0, 1/5)
    """
    gamma = Fraction(gamma)
    if not 0 < gamma < Fraction(1, 5):
        raise GammaOutOfRange(f"γ 必须在 (0, 1/5) 内，收到 {gamma}", witness=format_fraction(gamma))

    M_T = M.stage(trace.stages)
    contaminated = SumSemimeasure([(1 - gamma, nu), (gamma, M_T)])
    alpha = trace.limit
    N = trace.horizon
    report = ContaminationReport(gamma=gamma, bound=contamination_bound(gamma), mixture=contaminated)
    report.positions_01 = trace.positions_01()

    for n in range(1, N + 1):
        before = contaminated.evaluate(alpha[: n - 1])
        if before == 0:
            raise ZeroConditioning("M′ 在 α 上为零", witness=format_str(alpha[: n - 1]))
        report.conditionals.append(contaminated.evaluate(alpha[:n]) / before)
        if r is not None:
            report.r_values.append(r.evaluate(alpha[: n - 1]))

    cond_ok = nu_equal_ok = nu_floor_ok = True
    for n in report.positions_01:
        if report.conditionals[n - 1] < report.bound:
            cond_ok = False
            report.witness = report.witness or f"n={n}"
        if nu.evaluate(alpha[:n]) < Fraction(1, 2 ** (n + 1)):
            nu_floor_ok = False
    for n in range(1, min(N, trace.stages) + 1):
        if alpha[n - 1] == 0 and nu.evaluate(alpha[: n - 1]) != nu.evaluate(alpha[:n]):
            nu_equal_ok = False

    sixth = Fraction(1, 6)
    report.far_positions = [n for n, c in enumerate(report.conditionals, start=1) if abs(c - HALF) >= sixth]
    report.verdicts = {
        "bound_at_01": cond_ok,
        "has_01": bool(report.positions_01),
        "nu_flat_at_zero": nu_equal_ok,
        "nu_floor_at_01": nu_floor_ok,
        "far_fraction": len(report.far_positions) >= len(report.positions_01),
    }
    logger.info(
        f"污染混合 γ={format_fraction(gamma)}: 下界 {format_fraction(report.bound)}，"
        f"01 位置 {len(report.positions_01)} 个，偏离 ½ 的位置 {len(report.far_positions)} 个"
    )
    return report


@dataclass
class OscillationReport:
    """R = M/λ 与 R′ = (R + γ′r)/(1 + γ′) 的比值在 r 翻转处的振荡"""

    gamma_prime: Fraction
    delta: Fraction
    r_ratios: list[Fraction] = field(default_factory=list)
    r_prime_ratios: list[Fraction] = field(default_factory=list)
    flips: list[tuple[int, int]] = field(default_factory=list)  # (n, +1 上翻 / −1 下翻)
    windows: list[tuple[int, int, Fraction, Fraction]] = field(default_factory=list)
    passed: bool = True
    rows: list[list[str]] = field(default_factory=list)


def windowed_oscillation(
    M: StagedSemimeasure,
    trace: AlphaTrace,
    r: OscillatorR,
    gamma_prime: Fraction = Fraction(1),
    delta: Fraction = Fraction(1, 6),
) -> OscillationReport:
    """
    相邻的一次上翻与一次下翻构成一个窗口；窗口内 R 比值或 R′ 比值的半振幅必须超过 δ，
    即两者不能同时停留在某个 (η, η′) 的 δ 邻域内
    """
    gamma_prime = Fraction(gamma_prime)
    if gamma_prime <= 0:
        raise PreconditionViolated(f"γ′ 必须为正，收到 {gamma_prime}")
    M_T = M.stage(trace.stages)
    alpha = trace.limit
    report = OscillationReport(gamma_prime=gamma_prime, delta=Fraction(delta))

    def R(x: Str) -> Fraction:
        return M_T.evaluate(x) * 2 ** len(x)

    def R_prime(x: Str) -> Fraction:
        return (R(x) + gamma_prime * r.evaluate(x)) / (1 + gamma_prime)

    for n in range(1, trace.horizon + 1):
        before, after = alpha[: n - 1], alpha[:n]
        if R(before) == 0:
            raise ZeroConditioning("M 在 α 上为零", witness=format_str(before))
        ratio = R(after) / R(before)
        ratio_prime = R_prime(after) / R_prime(before)
        report.r_ratios.append(ratio)
        report.r_prime_ratios.append(ratio_prime)
        r_before, r_after = r.evaluate(before), r.evaluate(after)
        if r_before != r_after:
            report.flips.append((n, 1 if r_after > r_before else -1))
        report.rows.append(
            [str(n), format_fraction(r_before), format_fraction(r_after), format_fraction(ratio), format_fraction(ratio_prime)]
        )

    for (n1, d1), (n2, d2) in zip(report.flips, report.flips[1:]):
        if d1 == d2:
            continue
        a, b = report.r_ratios[n1 - 1], report.r_ratios[n2 - 1]
        pa, pb = report.r_prime_ratios[n1 - 1], report.r_prime_ratios[n2 - 1]
        osc = abs(a - b) / 2
        osc_prime = abs(pa - pb) / 2
        report.windows.append((n1, n2, osc, osc_prime))
        if not (osc > report.delta or osc_prime > report.delta):
            report.passed = False

    logger.info(f"窗口振荡检查 γ′={format_fraction(gamma_prime)}: {len(report.windows)} 个窗口，{'通过' if report.passed else '失败'}")
    return report


@dataclass
class AntiDominanceReport:
    """贪心选取的序列与 ν(α_{1:n}) 的乘积界"""

    sequence: Str
    values: list[Fraction] = field(default_factory=list)
    product_bounds: list[Fraction] = field(default_factory=list)
    four_bounds: list[Fraction] = field(default_factory=list)
    threshold_passed: bool = True
    product_passed: bool = True
    four_passed: bool = True

    @property
    def passed(self) -> bool:
        return self.threshold_passed and self.product_passed and self.four_passed

    def csv_rows(self) -> list[list[str]]:
        return [
            [str(n), str(self.sequence[n - 1]), format_fraction(v), format_fraction(p), format_fraction(f)]
            for n, (v, p, f) in enumerate(zip(self.values, self.product_bounds, self.four_bounds), start=1)
        ]


def anti_dominance_sequence(nu: Semimeasure, N: int) -> AntiDominanceReport:
    """
    α_n = argmin_a ν(a|α_{<n})（相同时取最小符号），
    检查 ν(α_n|α_{<n}) < |X|⁻¹(1 + 1/n²) 与 ν(α_{1:n}) ≤ Π_{k≤n}(1 + 1/k²)·|X|^-n ≤ 4·|X|^-n

    Raises:
        ZeroConditioning: ν 在路径上为零
    """
    size = nu.alphabet.size
    alpha: list[int] = []
    report = AntiDominanceReport(sequence=())
    product = Fraction(1)
    for n in range(1, N + 1):
        probs = predictive_vector(nu, tuple(alpha))
        choice = min(nu.alphabet.symbols, key=lambda a: (probs[a], a))
        if probs[choice] >= Fraction(1, size) * (1 + Fraction(1, n * n)):
            report.threshold_passed = False
        alpha.append(choice)
        value = nu.evaluate(tuple(alpha))
        if value == 0:
            raise ZeroConditioning("ν 在构造的路径上为零", witness=format_str(tuple(alpha)))
        product *= 1 + Fraction(1, n * n)
        scale = Fraction(1, size**n)
        report.values.append(value)
        report.product_bounds.append(product * scale)
        report.four_bounds.append(4 * scale)
        report.product_passed = report.product_passed and value <= product * scale
        report.four_passed = report.four_passed and product * scale <= 4 * scale
    report.sequence = tuple(alpha)
    logger.info(f"反支配序列 N={N}: {format_str(report.sequence[:32])} {'通过' if report.passed else '失败'}")
    return report


@dataclass
class DominanceChainReport:
    """δ_k(α_{1:n}) ≤ 4|X|^-n·ν̄(α_{1:n}) ≤ 4|X|^-n·2^{κ̄}·M(α_{1:n})"""

    k: int
    code_length: int
    links: list[tuple[bool, bool, bool]] = field(default_factory=list)
    exceeds_from: int | None = None
    registry_name: str = ""

    @property
    def passed(self) -> bool:
        return all(all(link) for link in self.links)


def dominance_chain(
    delta: Semimeasure,
    registry: ModelRegistry,
    k: int,
    sequence: Str,
    stage: int,
    slack: int = 1,
) -> DominanceChainReport:
    """
    以码长 κ̄ = k + 2⌈log₂k⌉ + slack 把 α 上的确定性测度 ν̄ 加入注册表，
    逐个 n 精确检查三段不等式；exceeds_from 是 M(α_{1:n}) > δ_k(α_{1:n}) 首次成立处
    """
    size = delta.alphabet.size
    kappa = code_length_for_index(k, slack)
    nu_bar = DeterministicMeasure.from_prefix(sequence, alphabet=delta.alphabet)
    augmented = registry.extended("anti-dominance", ConstantStages(nu_bar), kappa, is_measure=True)
    M = mixture(augmented, WeightRule.CODE_LENGTH).stage(stage)
    report = DominanceChainReport(k=k, code_length=kappa, registry_name=augmented.name)
    weight = Fraction(1, 2**kappa)
    for n in range(1, len(sequence) + 1):
        x = sequence[:n]
        scale = Fraction(4, size**n)
        d, m = delta.evaluate(x), M.evaluate(x)
        link1 = d <= scale * nu_bar.evaluate(x)
        link2 = m >= weight * nu_bar.evaluate(x)
        link3 = d <= scale * 2**kappa * m
        report.links.append((link1, link2, link3))
        if report.exceeds_from is None and m > d:
            report.exceeds_from = n
    logger.info(f"反支配链 k={k} κ̄={kappa}: {'通过' if report.passed else '失败'}，M > δ_k 自 n={report.exceeds_from}")
    return report


def poly3_limit(n: int) -> tuple[float, np.ndarray]:
    """Π_{t≤n}(1 − ½t⁻³)，返回终值与全部部分积"""
    t = np.arange(1, n + 1, dtype=np.float64)
    partial = np.cumprod(1.0 - 0.5 / t**3)
    return float(partial[-1]), partial


def sinh_pi_products(n: int) -> tuple[float, np.ndarray]:
    """Π_{k≤n}(1 + 1/k²) 的部分积，极限 sinh(π)/π"""
    k = np.arange(1, n + 1, dtype=np.float64)
    partial = np.cumprod(1.0 + 1.0 / k**2)
    return float(partial[-1]), partial


SINH_PI_OVER_PI = math.sinh(math.pi) / math.pi
