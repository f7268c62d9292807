"""
准测度与混合模块
半测度到准测度的逐阶段转换、混合 δ_k / D / D̂ / W，
以及 D̂ → μ 与 W → D 两个收敛命题的经验验证。
"""

import logging
import threading
import weakref
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

from core.errors import EmptyMeasureSet, MeasureFlagInvalid, PreconditionViolated, WeightOverflow
from core.measures import (
    DEFAULT_BUDGET,
    EMPTY,
    IIDSemimeasure,
    NormalizedSemimeasure,
    Semimeasure,
    Str,
    SumSemimeasure,
    TruncatedSemimeasure,
    ZeroSemimeasure,
    check_budget,
    predictive_vector,
    to_str,
    verify_semimeasure,
)
from core.numeric import DEFAULT_PRECISION, dln, leq_within, tolerance, working_precision
from core.registry import (
    DEFAULT_STAGE_CAP,
    ModelRegistry,
    MixtureStages,
    StagedSemimeasure,
    WeightRule,
    mixture,
    polynomial_weight,
)
from utils.formatters import format_decimal, format_fraction, format_ratio, format_str

from .hellinger import ContinuityReport, HellingerSeries, continuity_bound, hellinger_series
from .randomness import deficiency_trace

logger: logging.Logger = logging.getLogger(__name__)

PROP1_COLUMNS = ["t", "h_t", "cumsum", "target_cumsum"]
PROP2_COLUMNS = ["t", "w_over_d", "conditional_ratio", "max_predictive_gap", "envelope", "h_dw"]


@dataclass
class Quasimeasure:
    """
    准测度：cutoff 为 None 时是测度；否则在 cutoff 以内逐层守恒、
    更长的字符串取 0，且 1 − 1/cutoff < ν̃(ε) ≤ 1。cutoff 为 0 表示零阶段。
    """

    semimeasure: Semimeasure
    cutoff: int | None
    stage: int = 0
    accepted_at: int = 0

    def __call__(self, x: Str | str) -> Fraction:
        return self.semimeasure(x)

    def evaluate(self, x: Str) -> Fraction:
        return self.semimeasure.evaluate(x)

    @property
    def is_zero(self) -> bool:
        return self.cutoff == 0


def verify_quasimeasure(q: Quasimeasure, depth: int, budget: int = DEFAULT_BUDGET) -> tuple[bool, str | None]:
    """
    穷举检查准测度不变式，深度取 min(depth, cutoff)；cutoff < depth 时另查 cutoff+1 层为零

    Returns:
        (是否通过, 首个违反处)
    """
    nu = q.semimeasure
    root = nu.evaluate(EMPTY)
    if q.is_zero:
        return (root == 0, None if root == 0 else "ε")
    if q.cutoff is None:
        report = verify_semimeasure(nu, depth, budget)
        if not report.passed:
            return False, report.witness
        return (report.is_measure_like, None if report.is_measure_like else "ε")

    n = q.cutoff
    if not (1 - Fraction(1, n) < root <= 1):
        return False, "ε"
    report = verify_semimeasure(nu, min(depth, n), budget)
    if not report.passed or not report.equality_everywhere:
        return False, report.witness or "ε"
    if n < depth:
        check_budget(nu.alphabet, n + 1, budget)
        for x in nu.alphabet.strings(n + 1):
            if nu.evaluate(x) != 0:
                return False, format_str(x)
    return True, None


def _cutoff_for_stage(nu_t: Semimeasure, t: int, budget: int) -> int:
    """m^t = max{n ≤ t : Σ_{ℓ(x)=n} ν^t(x) > 1 − 1/n}，自 t 向下搜索，严格不等号"""
    for n in range(t, 0, -1):
        if nu_t.level_mass(n, budget) > 1 - Fraction(1, n):
            return n
    return 0


class QuasimeasureSequence:
    """
    ν̃^t 的增量序列，ν̃^0 = 0
    ρ^t ≥ ν̃^{t−1} 逐点成立时 ν̃^t = ρ^t，否则沿用 ν̃^{t−1}
    """

    def __init__(self, staged: StagedSemimeasure, budget: int = DEFAULT_BUDGET):
        self.staged = staged
        self.budget = budget
        self._lock = threading.Lock()
        self._stages: list[Quasimeasure] = [
            Quasimeasure(ZeroSemimeasure(staged.alphabet), cutoff=0, stage=0, accepted_at=0)
        ]
        self._bases: list[Semimeasure | None] = [None]

    def at(self, t: int) -> Quasimeasure:
        if t < 0:
            raise PreconditionViolated(f"阶段编号必须非负，收到 {t}")
        with self._lock:
            while len(self._stages) <= t:
                self._advance()
            return self._stages[t]

    def _advance(self):
        t = len(self._stages)
        old = self._stages[-1]
        old_base = self._bases[-1]
        nu_t = self.staged.stage(t)
        m = _cutoff_for_stage(nu_t, t, self.budget)

        if m > 0:
            rho = TruncatedSemimeasure(nu_t, m, self.budget)
            if self._accepts(old, old_base, rho, nu_t, m):
                self._stages.append(Quasimeasure(rho, cutoff=m, stage=t, accepted_at=t))
                self._bases.append(nu_t)
                logger.debug(f"准测度阶段 t={t} 接受 ρ^t，截断深度 {m}")
                return
        self._stages.append(Quasimeasure(old.semimeasure, old.cutoff, stage=t, accepted_at=old.accepted_at))
        self._bases.append(old_base)
        logger.debug(f"准测度阶段 t={t} 保留 ν̃^{t - 1}（m^t={m}）")

    def _accepts(
        self,
        old: Quasimeasure,
        old_base: Semimeasure | None,
        rho: TruncatedSemimeasure,
        nu_t: Semimeasure,
        m: int,
    ) -> bool:
        """两者在旧截断深度以内都逐层守恒，只需比较第 old.cutoff 层"""
        if old.is_zero:
            return True
        level = old.cutoff
        if m < level:
            return False
        if nu_t is old_base and nu_t.additive_depth >= m:
            return True
        if isinstance(nu_t, IIDSemimeasure) and isinstance(old_base, IIDSemimeasure):
            ratios = []
            for p, q in zip(nu_t.probs, old_base.probs):
                if q > 0:
                    ratios.append(p / q)
            if not ratios:
                return True
            return min(ratios) ** level * nu_t.total ** (m - level) >= 1
        check_budget(nu_t.alphabet, level, self.budget)
        return all(
            rho.evaluate(x) >= old.semimeasure.evaluate(x) for x in nu_t.alphabet.strings(level)
        )


_SEQUENCES: "weakref.WeakKeyDictionary[StagedSemimeasure, QuasimeasureSequence]" = weakref.WeakKeyDictionary()
_SEQUENCES_LOCK = threading.Lock()


def quasimeasure_sequence(staged: StagedSemimeasure, budget: int = DEFAULT_BUDGET) -> QuasimeasureSequence:
    """每个分阶段半测度共享一条转换序列"""
    with _SEQUENCES_LOCK:
        seq = _SEQUENCES.get(staged)
        if seq is None:
            seq = QuasimeasureSequence(staged, budget)
            _SEQUENCES[staged] = seq
        return seq


def to_quasimeasure(staged: StagedSemimeasure, t: int, budget: int = DEFAULT_BUDGET) -> Quasimeasure:
    """第 t 阶段的 ν̃^t"""
    return quasimeasure_sequence(staged, budget).at(t)


class QuasimeasureStages(StagedSemimeasure):
    """t → ν̃^t；测度条目的极限就是原条目"""

    def __init__(
        self,
        staged: StagedSemimeasure,
        is_measure: bool,
        stage_cap: int = DEFAULT_STAGE_CAP,
        budget: int = DEFAULT_BUDGET,
    ):
        self.source = staged
        self.sequence = quasimeasure_sequence(staged, budget)
        if is_measure and staged.limit_hint is not None:
            hint = staged.limit_hint
        else:
            hint = self.sequence.at(stage_cap).semimeasure
        super().__init__(staged.alphabet, limit_hint=hint)
        self.is_measure = is_measure

    def _build_stage(self, t: int) -> Semimeasure:
        return self.sequence.at(t).semimeasure


def entry_cutoff(staged: StagedSemimeasure, is_measure: bool, stage_cap: int, budget: int = DEFAULT_BUDGET) -> int | None:
    """极限准测度的截断深度，测度条目为 None"""
    if is_measure:
        return None
    return to_quasimeasure(staged, stage_cap, budget).cutoff


@dataclass
class MixtureSpec:
    """
    索引过滤器与权重 ε_i = i^-6·2^-i
    mode: "all" | "measures" | "prefix"（J_k = {i ≤ k : 测度}）
    """

    registry: ModelRegistry
    mode: str = "measures"
    k: int | None = None

    def __post_init__(self):
        if self.mode not in ("all", "measures", "prefix"):
            raise PreconditionViolated(f"未知的索引过滤方式: {self.mode}")
        if self.mode == "prefix" and (self.k is None or not 1 <= self.k <= len(self.registry)):
            raise PreconditionViolated(f"前缀过滤需要 1 ≤ k ≤ {len(self.registry)}，收到 {self.k}")

    def indices(self) -> list[int]:
        if self.mode == "all":
            return [e.index for e in self.registry]
        limit = self.k if self.mode == "prefix" else len(self.registry)
        return [e.index for e in self.registry if e.is_measure and e.index <= limit]

    def weight(self, index: int) -> Fraction:
        return polynomial_weight(index)

    def semimeasure(self, stage_cap: int = DEFAULT_STAGE_CAP) -> SumSemimeasure:
        """Σ_{i∈J} ε_i·ν_i（使用条目极限）"""
        indices = self.indices()
        if not indices:
            raise EmptyMeasureSet(
                f"注册表 {self.registry.name} 在 {self.mode} 过滤下没有测度条目",
                witness=str(self.k) if self.k is not None else self.registry.name,
            )
        return SumSemimeasure(
            [(self.weight(i), self.registry.entry(i).limit(stage_cap)) for i in indices],
            self.registry.alphabet,
        )


def validate_measure_flags(
    reg: ModelRegistry, depth: int, stage_cap: int = DEFAULT_STAGE_CAP, budget: int = DEFAULT_BUDGET
) -> None:
    """
    标记为测度的条目必须在 depth 以内满足测度等式；结构上是测度却标为非测度同样非法

    Raises:
        MeasureFlagInvalid: 以条目名为 witness
    """
    for entry in reg:
        limit = entry.limit(stage_cap)
        if entry.is_measure:
            report = verify_semimeasure(limit, depth, budget)
            if not report.is_measure_like:
                raise MeasureFlagInvalid(
                    f"条目 #{entry.index} {entry.name} 标记为测度，但在深度 {depth} 内不满足测度等式",
                    witness=entry.name,
                )
        elif limit.is_measure:
            raise MeasureFlagInvalid(
                f"条目 #{entry.index} {entry.name} 是测度却标记为非测度", witness=entry.name
            )
    logger.debug(f"注册表 {reg.name} 测度标记校验通过")


def build_W(
    reg: ModelRegistry, stage_cap: int = DEFAULT_STAGE_CAP, budget: int = DEFAULT_BUDGET
) -> MixtureStages:
    """W^t = Σ_i ε_i·ν̃_i^t"""
    if not reg.frozen:
        raise PreconditionViolated(f"注册表 {reg.name} 尚未冻结")
    terms = [
        (polynomial_weight(e.index), QuasimeasureStages(e.staged, e.is_measure, stage_cap, budget))
        for e in reg
    ]
    total = sum((w for w, _ in terms), Fraction(0))
    if total > 1:
        raise WeightOverflow(f"W 的权重和为 {format_fraction(total)}", witness=format_fraction(total))
    return MixtureStages(terms, reg.alphabet)


def build_D(reg: ModelRegistry, stage_cap: int = DEFAULT_STAGE_CAP) -> SumSemimeasure:
    """D = Σ_{i∈J} ε_i·ν_i"""
    return MixtureSpec(reg, "measures").semimeasure(stage_cap)


def normalize_D(D: Semimeasure) -> NormalizedSemimeasure:
    """D̂ = D/D(ε)"""
    return NormalizedSemimeasure(D)


def delta_k(reg: ModelRegistry, k: int, stage_cap: int = DEFAULT_STAGE_CAP) -> SumSemimeasure:
    """δ_k = Σ_{i∈J_k} ε_i·ν_i"""
    return MixtureSpec(reg, "prefix", k).semimeasure(stage_cap)


def delta_hat_k(reg: ModelRegistry, k: int, stage_cap: int = DEFAULT_STAGE_CAP) -> NormalizedSemimeasure:
    """δ̂_k = δ_k/δ_k(ε)"""
    return NormalizedSemimeasure(delta_k(reg, k, stage_cap))


def non_measure_part(W: MixtureStages, reg: ModelRegistry) -> SumSemimeasure:
    """W − D = Σ_{i∉J} ε_i·ν̃_i（极限）"""
    terms = [
        (w, staged.limit_hint)
        for (w, staged), entry in zip(W.terms, reg)
        if not entry.is_measure
    ]
    return SumSemimeasure(terms, reg.alphabet)


@dataclass
class AdjacentRatioCheck:
    """δ̂_{k−1}(x)/δ̂_k(x) ≤ 1 + ε_k/ε_O"""

    k: int
    max_ratio: Fraction
    bound: Fraction
    passed: bool
    witness: str | None = None


def adjacent_ratio_check(
    reg: ModelRegistry, k: int, depth: int, stage_cap: int = DEFAULT_STAGE_CAP, budget: int = DEFAULT_BUDGET
) -> AdjacentRatioCheck:
    """O = min J_{k−1}；穷举到 depth"""
    previous_indices = MixtureSpec(reg, "prefix", k - 1).indices() if k >= 2 else []
    if not previous_indices:
        raise EmptyMeasureSet(f"J_{k - 1} 为空", witness=str(k - 1))
    check_budget(reg.alphabet, depth, budget)
    lower = delta_hat_k(reg, k - 1, stage_cap)
    upper = delta_hat_k(reg, k, stage_cap)
    bound = 1 + polynomial_weight(k) / polynomial_weight(previous_indices[0])
    result = AdjacentRatioCheck(k, Fraction(0), bound, True)
    for x in reg.alphabet.strings_upto(depth):
        denominator = upper.evaluate(x)
        if denominator == 0:
            continue
        ratio = lower.evaluate(x) / denominator
        if ratio > result.max_ratio:
            result.max_ratio = ratio
            if ratio > bound:
                result.passed = False
                result.witness = format_str(x)
                break
    return result


@dataclass
class Prop1Report:
    """D̂ → μ：Σh_t(δ̂_{k0}, μ) 与 Σh_t(δ̂_{k0}, D̂) 的部分和及右端界"""

    k0: int
    horizon: int
    seed: int | None
    series: HellingerSeries
    target_series: HellingerSeries
    sums_by_k: dict[int, Decimal] = field(default_factory=dict)
    chain_terms: dict[int, Decimal] = field(default_factory=dict)
    chain_bound_shifted: Decimal = Decimal(0)
    chain_bound_literal: Decimal = Decimal(0)
    deficiency: Decimal = Decimal(0)
    linear_bound: Decimal = Decimal(0)
    multiplicative_bound: Decimal = Decimal(0)
    slack: int = 4
    verdicts: dict[str, bool] = field(default_factory=dict)

    @property
    def final_increment(self) -> Decimal:
        return self.series.per_step[-1] if self.series.per_step else Decimal(0)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def csv_rows(self) -> list[list[str]]:
        return [
            [str(t), format_decimal(h), format_decimal(c), format_decimal(tc)]
            for t, (h, c, tc) in enumerate(
                zip(self.series.per_step, self.series.cumulative, self.target_series.cumulative), start=1
            )
        ]


def convergence_experiment_prop1(
    reg: ModelRegistry,
    k0: int,
    omega: Str | str,
    n: int,
    stage: int = DEFAULT_STAGE_CAP,
    slack: int = 4,
    precision: int = DEFAULT_PRECISION,
    seed: int | None = None,
) -> Prop1Report:
    """
    沿 ω 计算 Σ_t h_t(δ̂_{k0}, μ)、每个 k ≥ k0 的 Σ_t h_t(δ̂_k, μ)、
    相邻 Σ_t h_t(δ̂_{k−1}, δ̂_k) 以及链式比较；界只做 slack 倍的有界性检查

    Args:
        reg: 注册表，μ 为第 k0 个条目
        k0: μ 的索引，必须是测度条目
    """
    omega = to_str(omega)
    entry = reg.entry(k0)
    if not entry.is_measure:
        raise PreconditionViolated(f"条目 #{k0} {entry.name} 不是测度", witness=entry.name)
    mu = entry.limit(stage)
    K = len(reg)
    hats = {k: delta_hat_k(reg, k, stage) for k in range(k0, K + 1)}

    series = hellinger_series(mu, hats[k0], omega, n, precision)
    target = hellinger_series(hats[K], hats[k0], omega, n, precision)
    report = Prop1Report(k0=k0, horizon=n, seed=seed, series=series, target_series=target, slack=slack)

    measure_indices = set(MixtureSpec(reg, "measures").indices())
    for k in range(k0, K + 1):
        report.sums_by_k[k] = series.total if k == k0 else hellinger_series(mu, hats[k], omega, n, precision).total
        if k > k0:
            report.chain_terms[k] = (
                hellinger_series(hats[k - 1], hats[k], omega, n, precision).total
                if k in measure_indices
                else Decimal(0)
            )

    trace = deficiency_trace(mixture(reg, WeightRule.CODE_LENGTH), mu, omega, n, stage, precision)
    with working_precision(precision):
        tol = tolerance(precision)
        report.chain_bound_shifted = 3 * sum(
            (Decimal((k - k0 + 1) ** 2) * v for k, v in report.chain_terms.items()), Decimal(0)
        )
        report.chain_bound_literal = 3 * sum(
            (Decimal(k * k) * v for k, v in report.chain_terms.items()), Decimal(0)
        )
        d_plus = max(trace.supremum, Decimal(0))
        report.deficiency = trace.supremum
        report.linear_bound = 2 * dln(2) * d_plus + 3 * k0
        report.multiplicative_bound = Decimal(k0) ** 7 * Decimal(2) ** (k0 + d_plus)

        floor = polynomial_weight(k0)
        report.verdicts = {
            "dominance": all(hats[k0].evaluate(omega[:t]) >= floor * mu.evaluate(omega[:t]) for t in range(n + 1)),
            "nondecreasing": all(
                leq_within(a, b, tol) for a, b in zip(series.cumulative, series.cumulative[1:])
            ),
            "chain": leq_within(target.total, report.chain_bound_shifted, tol)
            and leq_within(report.chain_bound_shifted, report.chain_bound_literal, tol),
            "linear_bound": series.total <= slack * report.linear_bound,
            "multiplicative_bound": target.total <= slack * report.multiplicative_bound,
        }

    logger.info(
        f"D̂→μ 实验 k0={k0} n={n}: Σh={format_decimal(series.total, 8)} "
        f"末增量={format_decimal(report.final_increment, 4)} d={format_decimal(report.deficiency, 6)}"
    )
    return report


@dataclass
class Prop2Report:
    """W → D：比值、条件比值、预测差与包络 ε′"""

    horizon: int
    seed: int | None
    ratios: list[Fraction] = field(default_factory=list)
    conditional_ratios: list[Fraction] = field(default_factory=list)
    predictive_gaps: list[Fraction] = field(default_factory=list)
    envelopes: list[Fraction] = field(default_factory=list)
    continuity: list[ContinuityReport] = field(default_factory=list)
    largest_cutoff: int = 0
    verdicts: dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def csv_rows(self) -> list[list[str]]:
        return [
            [
                str(t),
                format_ratio(r),
                format_ratio(c),
                format_ratio(g),
                format_ratio(e),
                format_decimal(h.h_value),
            ]
            for t, (r, c, g, e, h) in enumerate(
                zip(self.ratios, self.conditional_ratios, self.predictive_gaps, self.envelopes, self.continuity),
                start=1,
            )
        ]


def envelope(
    x: Str,
    D_x: Fraction,
    M_x: Fraction,
    reg: ModelRegistry,
    cutoffs: dict[int, int | None],
) -> Fraction:
    """ε′_x = (M(x)/D(x))·Σ_{i∉J, cutoff_i ≥ ℓ(x)} ε_i·2^{κ_i}"""
    total = Fraction(0)
    for entry in reg:
        cutoff = cutoffs[entry.index]
        if entry.is_measure or cutoff is None or cutoff < len(x):
            continue
        total += polynomial_weight(entry.index) * 2**entry.code_length
    return M_x / D_x * total if total else Fraction(0)


def convergence_experiment_prop2(
    reg: ModelRegistry,
    omega: Str | str,
    n: int,
    stage_cap: int = DEFAULT_STAGE_CAP,
    precision: int = DEFAULT_PRECISION,
    seed: int | None = None,
    budget: int = DEFAULT_BUDGET,
) -> Prop2Report:
    """
    沿 ω 输出 W/D、W(ω_t|ω_{<t})/D(ω_t|ω_{<t})、max_a|W(a|x) − D(a|x)|，
    并检查 1 ≤ W/D ≤ 1 + ε′、预测差 ≤ ε′、h_x(D, W) ≤ ε′ 以及包络在最大截断之后单调收缩
    """
    omega = to_str(omega)
    W_staged = build_W(reg, stage_cap, budget)
    W = W_staged.limit_hint
    D = build_D(reg, stage_cap)
    M = mixture(reg, WeightRule.CODE_LENGTH).limit(stage_cap)
    excess = non_measure_part(W_staged, reg)
    cutoffs = {e.index: entry_cutoff(e.staged, e.is_measure, stage_cap, budget) for e in reg}
    finite = [c for c in cutoffs.values() if c is not None]
    report = Prop2Report(horizon=n, seed=seed, largest_cutoff=max(finite, default=0))

    ratio_ok = gap_ok = continuity_ok = True
    for t in range(1, n + 1):
        x = omega[:t]
        prev = omega[: t - 1]
        D_x, W_x = D.evaluate(x), W.evaluate(x)
        if D_x == 0:
            raise PreconditionViolated("W/D 实验要求 D(ω_{1:t}) > 0", witness=format_str(x))
        ratio = W_x / D_x
        eps_x = envelope(x, D_x, M.evaluate(x), reg, cutoffs)
        eps_prev = envelope(prev, D.evaluate(prev), M.evaluate(prev), reg, cutoffs)
        w_cond = predictive_vector(W, prev)
        d_cond = predictive_vector(D, prev)
        gap = max(abs(a - b) for a, b in zip(w_cond, d_cond))

        report.ratios.append(ratio)
        report.conditional_ratios.append(w_cond[x[-1]] / d_cond[x[-1]])
        report.predictive_gaps.append(gap)
        report.envelopes.append(eps_x)
        check = continuity_bound(D, excess, prev, eps=eps_prev, precision=precision)
        report.continuity.append(check)

        ratio_ok = ratio_ok and 1 <= ratio <= 1 + eps_x
        gap_ok = gap_ok and gap <= eps_prev
        continuity_ok = continuity_ok and check.passed and check.linear_bound <= eps_prev

    tail = report.envelopes[report.largest_cutoff:]
    report.verdicts = {
        "ratio_envelope": ratio_ok,
        "predictive_gap": gap_ok,
        "continuity": continuity_ok,
        "envelope_shrinks": all(b <= a for a, b in zip(tail, tail[1:])),
        "ratio_above_one_before_cutoff": all(r > 1 for r in report.ratios[: report.largest_cutoff]),
        "ratio_exact_after_cutoff": all(r == 1 for r in report.ratios[report.largest_cutoff:]),
    }
    logger.info(
        f"W→D 实验 n={n}: 最大截断 {report.largest_cutoff}，"
        f"{'通过' if report.passed else '失败'}"
    )
    return report
