"""
Hellinger 距离分析模块
逐步距离、累计与指数化聚合，按 μ 穷举验证期望链、尾部界、κ 推广、
链式不等式与连续性界。
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction

from core.errors import DominanceViolated, PreconditionViolated, ZeroConditioning
from core.measures import (
    DEFAULT_BUDGET,
    EMPTY,
    Semimeasure,
    Str,
    SumSemimeasure,
    check_budget,
    predictive_vector,
    to_str,
)
from core.numeric import (
    DEFAULT_PRECISION,
    dexp,
    dln,
    dpow,
    dsqrt,
    floor_dyadic,
    certified_leq,
    compare_within,
    leq_within,
    to_decimal,
    tolerance,
    working_precision,
)
from utils.formatters import format_decimal, format_str

logger: logging.Logger = logging.getLogger(__name__)

SERIES_COLUMNS = ["t", "h_t", "cumsum", "exp_half_cumsum"]
RATIO_COLUMNS = ["t", "symbol", "nu_conditional", "mu_conditional", "ratio"]

Vector = Sequence[Fraction | Decimal]


def hellinger_distance(p: Vector, q: Vector, precision: int = DEFAULT_PRECISION) -> Decimal:
    """
    h(p,q) = Σ_i (√p_i − √q_i)²

    Args:
        p, q: 非负向量（精确有理数或 Decimal）
        precision: 工作精度（二进制位）
    """
    if len(p) != len(q):
        raise PreconditionViolated("Hellinger 距离要求等长向量")
    with working_precision(precision):
        return _hellinger(p, q)


def _hellinger(p: Vector, q: Vector) -> Decimal:
    total = Decimal(0)
    for a, b in zip(p, q):
        if a < 0 or b < 0:
            raise PreconditionViolated("Hellinger 距离要求非负分量")
        diff = dsqrt(a) - dsqrt(b)
        total += diff * diff
    return total


def affinity_bounds(p: Vector, q: Vector, precision: int = DEFAULT_PRECISION) -> tuple[Decimal, Decimal, Decimal]:
    """返回 (Σ√(p_i q_i), 1 − ½h(p,q), exp(−½h(p,q)))"""
    with working_precision(precision):
        affinity = sum((dsqrt(a) * dsqrt(b) for a, b in zip(p, q)), Decimal(0))
        h = _hellinger(p, q)
        return affinity, 1 - h / 2, dexp(-h / 2)


@dataclass
class HellingerSeries:
    """沿序列的逐步 Hellinger 距离"""

    per_step: list[Decimal]
    cumulative: list[Decimal]
    horizon: int
    ratios: list[Decimal] = field(default_factory=list)
    conditionals: list[tuple[int, Fraction, Fraction]] = field(default_factory=list)
    precision: int = DEFAULT_PRECISION

    @property
    def exp_half_cumsum(self) -> list[Decimal]:
        with working_precision(self.precision):
            return [dexp(c / 2) for c in self.cumulative]

    @property
    def total(self) -> Decimal:
        return self.cumulative[-1] if self.cumulative else Decimal(0)

    def csv_rows(self) -> list[list[str]]:
        """列: t, h_t, cumsum, exp_half_cumsum"""
        return [
            [str(t), format_decimal(h), format_decimal(c), format_decimal(e)]
            for t, (h, c, e) in enumerate(
                zip(self.per_step, self.cumulative, self.exp_half_cumsum), start=1
            )
        ]

    def ratio_rows(self) -> list[list[str]]:
        return [
            [str(t), str(a), str(nu_c), str(mu_c), format_decimal(r)]
            for t, ((a, nu_c, mu_c), r) in enumerate(zip(self.conditionals, self.ratios), start=1)
        ]


def hellinger_series(
    mu: Semimeasure,
    nu: Semimeasure,
    omega: Str | str,
    n: int,
    precision: int = DEFAULT_PRECISION,
) -> HellingerSeries:
    """
    h_t(ν,μ|ω_{<t}) for t = 1..n，附带在序列上的条件概率比 ν(ω_t|ω_{<t})/μ(ω_t|ω_{<t})

    Raises:
        ZeroConditioning: 条件化前缀的概率为零
    """
    omega = to_str(omega)
    if len(omega) < n:
        raise PreconditionViolated(f"序列长度 {len(omega)} 小于视界 {n}")
    series = HellingerSeries(per_step=[], cumulative=[], horizon=n, precision=precision)
    with working_precision(precision):
        running = Decimal(0)
        for t in range(1, n + 1):
            prefix = omega[: t - 1]
            mu_probs = predictive_vector(mu, prefix)
            nu_probs = predictive_vector(nu, prefix)
            h = _hellinger(nu_probs, mu_probs)
            running += h
            series.per_step.append(h)
            series.cumulative.append(running)
            a = omega[t - 1]
            if mu_probs[a] == 0:
                raise ZeroConditioning("序列落在 μ 的零概率分支", witness=format_str(omega[:t]))
            series.conditionals.append((a, nu_probs[a], mu_probs[a]))
            series.ratios.append(to_decimal(nu_probs[a] / mu_probs[a]))
    return series


@dataclass
class TailCheck:
    """P[Σ_{t≤n} h_t ≥ ln w⁻¹ + c] ≤ e^{−c/2}"""

    offset: int
    threshold: Decimal
    probability: Fraction
    bound: Decimal
    passed: bool
    undecided: Fraction = Fraction(0)  # 容差内无法判定、按发生计入的质量


@dataclass
class CountCheck:
    """P[#{t ≤ n : h_t ≥ ε} ≥ (ln w⁻¹ + c)/ε] ≤ e^{−c/2}"""

    offset: int
    epsilon: Fraction
    min_count: Decimal
    probability: Fraction
    bound: Decimal
    passed: bool
    undecided: Fraction = Fraction(0)  # 容差内无法判定、按发生计入的质量


@dataclass
class BoundReport:
    """期望链 (i) ≤ (ii) ≤ (iii) 的穷举结果"""

    horizon: int
    weight: Fraction
    precision: int
    tolerance: Decimal
    expected_sum: Decimal  # (i)
    log_exp_moment: Decimal  # (ii)
    log_inverse_weight: Decimal  # (iii)
    exp_moment: Decimal
    exact_margin: Decimal  # 1 − √w·E[exp(½Σh)]
    expected_sum_by_horizon: list[Decimal] = field(default_factory=list)
    log_exp_moment_by_horizon: list[Decimal] = field(default_factory=list)
    tails: list[TailCheck] = field(default_factory=list)
    counts: list[CountCheck] = field(default_factory=list)
    chain_passed: bool = False
    exact_passed: bool = False
    monotone_passed: bool = False

    @property
    def passed(self) -> bool:
        return (
            self.chain_passed
            and self.exact_passed
            and self.monotone_passed
            and all(t.passed for t in self.tails)
            and all(c.passed for c in self.counts)
        )

    def csv_rows(self) -> list[list[str]]:
        """列: n, expected_sum, two_log_exp_moment, log_inverse_weight"""
        return [
            [str(k), format_decimal(i), format_decimal(ii), format_decimal(self.log_inverse_weight)]
            for k, (i, ii) in enumerate(
                zip(self.expected_sum_by_horizon, self.log_exp_moment_by_horizon)
            )
        ]


BOUND_COLUMNS = ["n", "expected_sum", "two_log_exp_moment", "log_inverse_weight"]


def _check_dominance(mu_x: Fraction, nu_x: Fraction, w: Fraction, x: Str):
    if nu_x < w * mu_x:
        raise DominanceViolated(
            f"ν(x) = {nu_x} < w·μ(x) = {w * mu_x}", witness=format_str(x)
        )


def _walk_mu_tree(
    mu: Semimeasure,
    nu: Semimeasure,
    w: Fraction,
    n: int,
    step: Callable[[tuple[Fraction, ...], tuple[Fraction, ...]], Decimal],
    visit: Callable[[int, Str, Fraction, Decimal, list[Decimal]], None],
    budget: int,
):
    """
    按 μ 的支撑深度优先遍历到深度 n（跳过 μ(x)=0），同时检查 ν ≥ w·μ。
    visit(depth, x, μ(x), 累计量, 逐步量列表) 在每个节点调用一次。
    """
    check_budget(mu.alphabet, n, budget)
    root_mu = mu.evaluate(EMPTY)
    _check_dominance(root_mu, nu.evaluate(EMPTY), w, EMPTY)
    stack: list[tuple[Str, Fraction, Decimal, list[Decimal]]] = [(EMPTY, root_mu, Decimal(0), [])]
    while stack:
        x, mu_x, acc, steps = stack.pop()
        depth = len(x)
        visit(depth, x, mu_x, acc, steps)
        if depth == n or mu_x == 0:
            continue
        mu_probs = predictive_vector(mu, x)
        nu_probs = predictive_vector(nu, x)
        value = step(nu_probs, mu_probs)
        for a in reversed(mu.alphabet.symbols):
            child = x + (a,)
            mu_child = mu_x * mu_probs[a]
            if mu_child == 0:
                continue
            _check_dominance(mu_child, nu.evaluate(child), w, child)
            stack.append((child, mu_child, acc + value, steps + [value]))


def verify_lemma1(
    mu: Semimeasure,
    nu: Semimeasure,
    w: Fraction,
    n: int,
    precision: int = DEFAULT_PRECISION,
    tail_offsets: Sequence[int] = (1, 2, 4),
    count_threshold: Fraction = Fraction(1, 10),
    budget: int = DEFAULT_BUDGET,
) -> BoundReport:
    """
    穷举验证 Σ E[h_t] ≤ 2 ln E[exp(½Σh_t)] ≤ ln w⁻¹ 以及 √w·E[exp(½Σh_t)] ≤ 1

    Args:
        mu: 真实测度
        nu: 预测半测度，需满足 ν ≥ w·μ
        w: 支配常数
        n: 视界

    Raises:
        DominanceViolated: 某个 x 上 ν(x) < w·μ(x)
    """
    w = Fraction(w)
    if not 0 < w <= 1:
        raise PreconditionViolated(f"支配常数必须在 (0,1]，收到 {w}")

    with working_precision(precision):
        tol = tolerance(precision)
        log_inv_w = -dln(w)
        expected = [Decimal(0)] * (n + 1)
        exp_moment = [Decimal(0)] * (n + 1)
        thresholds = [log_inv_w + c for c in tail_offsets]
        tail_mass = [Fraction(0)] * len(tail_offsets)
        eps_dec = to_decimal(Fraction(count_threshold))
        count_mins = [(log_inv_w + c) / eps_dec for c in tail_offsets]
        count_mass = [Fraction(0)] * len(tail_offsets)
        tail_undecided = [Fraction(0)] * len(tail_offsets)
        count_undecided = [Fraction(0)] * len(tail_offsets)

        def visit(depth, x, mu_x, acc, steps):
            weight = to_decimal(mu_x)
            expected[depth] += weight * acc
            exp_moment[depth] += weight * dexp(acc / 2)
            if depth == n:
                # 事件判定按有理数进行，容差内的按发生计入，概率只会被高估
                for i, threshold in enumerate(thresholds):
                    verdict = compare_within(acc, threshold, tol)
                    if verdict is not False:
                        tail_mass[i] += mu_x
                    if verdict is None:
                        tail_undecided[i] += mu_x
                step_verdicts = [compare_within(h, eps_dec, tol) for h in steps]
                sure_hits = sum(1 for v in step_verdicts if v is True)
                maybe_hits = sum(1 for v in step_verdicts if v is not False)
                for i, minimum in enumerate(count_mins):
                    if compare_within(maybe_hits, minimum, tol) is False:
                        continue
                    count_mass[i] += mu_x
                    if compare_within(sure_hits, minimum, tol) is not True:
                        count_undecided[i] += mu_x

        _walk_mu_tree(mu, nu, w, n, _hellinger, visit, budget)

        root = mu.evaluate(EMPTY)
        if root != 1:
            logger.warning(f"μ(ε) = {root}，期望按未归一化的权重计算")

        log_moment = [2 * dln(m) if m > 0 else Decimal(0) for m in exp_moment]
        report = BoundReport(
            horizon=n,
            weight=w,
            precision=precision,
            tolerance=tol,
            expected_sum=expected[n],
            log_exp_moment=log_moment[n],
            log_inverse_weight=log_inv_w,
            exp_moment=exp_moment[n],
            exact_margin=1 - dsqrt(w) * exp_moment[n],
            expected_sum_by_horizon=expected,
            log_exp_moment_by_horizon=log_moment,
        )
        report.chain_passed = leq_within(report.expected_sum, report.log_exp_moment, tol) and leq_within(
            report.log_exp_moment, log_inv_w, tol
        )
        report.exact_passed = report.exact_margin >= -tol
        report.monotone_passed = all(
            leq_within(expected[k], expected[k + 1], tol) and leq_within(log_moment[k], log_moment[k + 1], tol)
            for k in range(n)
        )
        for i, c in enumerate(tail_offsets):
            bound = dexp(Decimal(-c) / 2)
            report.tails.append(
                TailCheck(
                    c, thresholds[i], tail_mass[i], bound,
                    certified_leq(tail_mass[i], bound, tol),
                    undecided=tail_undecided[i],
                )
            )
            report.counts.append(
                CountCheck(
                    c, Fraction(count_threshold), count_mins[i], count_mass[i], bound,
                    certified_leq(count_mass[i], bound, tol),
                    undecided=count_undecided[i],
                )
            )

    logger.info(
        f"期望链验证 n={n}: (i)={format_decimal(report.expected_sum, 8)} "
        f"(ii)={format_decimal(report.log_exp_moment, 8)} (iii)={format_decimal(log_inv_w, 8)} "
        f"{'通过' if report.passed else '失败'}"
    )
    return report


@dataclass
class KappaReport:
    """w^κ·E[exp(½ΣΣ|ν_t^κ − μ_t^κ|^{1/κ})] ≤ 1"""

    kappa: Fraction
    horizon: int
    value: Decimal
    margin: Decimal
    passed: bool


def verify_kappa_bound(
    mu: Semimeasure,
    nu: Semimeasure,
    w: Fraction,
    kappa: Fraction,
    n: int,
    precision: int = DEFAULT_PRECISION,
    budget: int = DEFAULT_BUDGET,
) -> KappaReport:
    """κ 推广的指数矩界，κ = ½ 时与 verify_lemma1 的精确界一致"""
    kappa = Fraction(kappa)
    w = Fraction(w)
    if not 0 < kappa <= Fraction(1, 2):
        raise PreconditionViolated(f"κ 必须在 (0, 1/2]，收到 {kappa}")
    if not 0 < w <= 1:
        raise PreconditionViolated(f"支配常数必须在 (0,1]，收到 {w}")

    with working_precision(precision):
        tol = tolerance(precision)
        inverse = 1 / kappa

        def step(nu_probs, mu_probs):
            total = Decimal(0)
            for v, m in zip(nu_probs, mu_probs):
                gap = abs(dpow(to_decimal(v), kappa) - dpow(to_decimal(m), kappa))
                total += dpow(gap, inverse)
            return total

        moment = [Decimal(0)]

        def visit(depth, x, mu_x, acc, steps):
            if depth == n:
                moment[0] += to_decimal(mu_x) * dexp(acc / 2)

        _walk_mu_tree(mu, nu, w, n, step, visit, budget)
        value = dexp(to_decimal(kappa) * dln(w)) * moment[0]
        return KappaReport(kappa, n, value, 1 - value, value <= 1 + tol)


def chain_bound_pair(hpr: Decimal | Fraction, hrq: Decimal | Fraction, beta: Decimal | Fraction) -> Decimal:
    """(1+β)·h(p,r) + (1+β⁻¹)·h(r,q)"""
    if beta <= 0:
        raise PreconditionViolated(f"β 必须为正，收到 {beta}")
    beta = to_decimal(beta)
    return (1 + beta) * to_decimal(hpr) + (1 + 1 / beta) * to_decimal(hrq)


def optimal_beta(hpr: Decimal, hrq: Decimal) -> tuple[Decimal | None, Decimal]:
    """
    最小化 chain_bound_pair 的 β* = √(h_rq/h_pr)，最小值 (√h_pr + √h_rq)²。
    某一侧为零时最优在边界取得，β 返回 None。
    """
    hpr, hrq = to_decimal(hpr), to_decimal(hrq)
    bound = (hpr.sqrt() + hrq.sqrt()) ** 2
    if hpr == 0 or hrq == 0:
        return None, bound
    return (hrq / hpr).sqrt(), bound


def chain_bound_sequence(distances: Sequence[Decimal | Fraction]) -> Decimal:
    """3·Σ_{k=2}^m k²·h(p^{k−1}, p^k)，distances[0] 对应 k=2"""
    if not distances:
        raise PreconditionViolated("链长 m 至少为 2")
    return 3 * sum((Decimal(k * k) * to_decimal(h) for k, h in enumerate(distances, start=2)), Decimal(0))


def chain_bound_product(distances: Sequence[Decimal | Fraction]) -> Decimal:
    """Σ_{k=2}^m [Π_{j≤k−2}(1+β_j⁻¹)]·(1+β_{k−1})·h_k，β_j = j(j+1)"""
    if not distances:
        raise PreconditionViolated("链长 m 至少为 2")
    total = Decimal(0)
    product = Decimal(1)
    for k, h in enumerate(distances, start=2):
        if k >= 3:
            j = k - 2
            product *= 1 + Decimal(1) / (j * (j + 1))
        total += product * (1 + (k - 1) * k) * to_decimal(h)
    return total


@dataclass
class ContinuityReport:
    """h_x(μ, μ+ν) 与线性、二次界"""

    h_value: Decimal
    linear_bound: Fraction
    quadratic_bound: Fraction | None
    passed: bool


def continuity_bound(
    mu: Semimeasure,
    nu: Semimeasure,
    x: Str | str,
    eps: Fraction | None = None,
    precision: int = DEFAULT_PRECISION,
) -> ContinuityReport:
    """
    ρ = μ + ν 时 h_x(μ,ρ) ≤ ν(x)/μ(x)；若 ν(x) ≤ ε·μ(x) 且所有 ν(xb) ≤ ε·μ(xb)，
    另有 h_x(μ,ρ) ≤ ¼ε²。ε 缺省取 ν(x)/μ(x)。

    Raises:
        ZeroConditioning: μ(x) = 0
    """
    x = to_str(x)
    mu_x = mu.evaluate(x)
    if mu_x == 0:
        raise ZeroConditioning("连续性界要求 μ(x) > 0", witness=format_str(x))
    nu_x = nu.evaluate(x)
    linear = nu_x / mu_x
    eps = linear if eps is None else Fraction(eps)

    quadratic = None
    if nu_x <= eps * mu_x and all(
        nu.evaluate(x + (b,)) <= eps * mu.evaluate(x + (b,)) for b in mu.alphabet.symbols
    ):
        quadratic = eps * eps / 4

    rho = SumSemimeasure([(Fraction(1), mu), (Fraction(1), nu)])
    with working_precision(precision):
        tol = tolerance(precision)
        h = _hellinger(predictive_vector(mu, x), predictive_vector(rho, x))
        passed = h <= to_decimal(linear) + tol
        if quadratic is not None:
            passed = passed and h <= to_decimal(quadratic) + tol
    return ContinuityReport(h, linear, quadratic, passed)


def hellinger_sum_functional(
    mu: Semimeasure, nu: Semimeasure, precision: int = DEFAULT_PRECISION
) -> Callable[[Str], Fraction]:
    """
    F(x) = Σ_{t≤ℓ(x)} ⌊h_t(ν,μ|x_{<t})⌋，每项向下取整到 2^-precision 网格，
    因而是非负、对前缀单调的精确有理泛函
    """
    cache: dict[Str, Fraction] = {EMPTY: Fraction(0)}

    def functional(x: Str) -> Fraction:
        x = to_str(x)
        if x in cache:
            return cache[x]
        parent = functional(x[:-1])
        if mu.evaluate(x[:-1]) == 0:
            value = parent
        else:
            with working_precision(precision + 8):
                h = _hellinger(predictive_vector(nu, x[:-1]), predictive_vector(mu, x[:-1]))
                value = parent + floor_dyadic(h, precision)
        cache[x] = value
        return value

    return functional

