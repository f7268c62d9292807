"""
不变式校验套件
verify 命令背后的全部穷举检查；各检查在线程中并发执行，结果以事件发布
"""

import asyncio
import logging
from collections.abc import Callable
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Any

import numpy as np

from core.config import LabConfig
from core.errors import LabError
from core.measures import BernoulliMeasure, IIDSemimeasure, SumSemimeasure, verify_semimeasure
from core.models import CheckResult
from core.numeric import LOW_PRECISION_WARNING_BITS, ceil_dyadic, dexp, dln, dsqrt, tolerance, working_precision
from core.registry import (
    ModelRegistry,
    WeightRule,
    code_length_for_index,
    convergence_registry,
    dominance_constant,
    mixture,
    resolve_registry,
    stages_monotone,
)
from core.sampling import sample_sequence
from infrastructure.events import LabEvent, LabEventBus, LabEventType, get_event_bus
from intelligence.counterexample import (
    anti_dominance_sequence,
    build_alpha,
    build_nu,
    build_r,
    contaminated_mixture,
    dominance_chain,
)
from intelligence.hellinger import (
    _hellinger,
    chain_bound_pair,
    chain_bound_product,
    chain_bound_sequence,
    continuity_bound,
    hellinger_sum_functional,
    verify_kappa_bound,
    verify_lemma1,
)
from intelligence.quasimeasures import (
    MixtureSpec,
    adjacent_ratio_check,
    convergence_experiment_prop2,
    delta_k,
    to_quasimeasure,
    validate_measure_flags,
    verify_quasimeasure,
)
from intelligence.randomness import (
    constant_schedule,
    expected_to_individual,
    is_supermartingale,
    prefix_functional,
    semimeasure_to_supermartingale,
)
from utils.formatters import format_decimal, format_fraction

logger: logging.Logger = logging.getLogger(__name__)

PROPERTY_INSTANCES = 1000
LEMMA6_HORIZON = 8
WD_HORIZON = 16


@dataclass
class VerificationReport:
    """逐项校验结果"""

    checks: list[CheckResult] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_failure(self) -> CheckResult | None:
        return next((c for c in self.checks if not c.passed), None)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "warnings": list(self.warnings),
        }

    def lines(self) -> list[str]:
        out = []
        for c in self.checks:
            mark = "PASS" if c.passed else "FAIL"
            line = f"[{mark}] {c.name}"
            if c.detail:
                line += f": {c.detail}"
            if c.witness:
                line += f" (witness: {c.witness})"
            out.append(line)
        out.extend(f"[WARN] {w}" for w in self.warnings)
        return out


def random_vector(rng: np.random.Generator, size: int, defective: bool) -> tuple[Fraction, ...]:
    """正分量有理向量，defective 时总和严格小于 1"""
    weights = [int(v) for v in rng.integers(1, 32, size=size)]
    total = sum(weights) + (int(rng.integers(1, 16)) if defective else 0)
    return tuple(Fraction(v, total) for v in weights)


def hellinger_property_violations(seed: int, instances: int, precision: int = 100) -> list[str]:
    """
    随机有理向量上的链式不等式、affinity 界与连续性界
    返回违反实例的描述，空列表表示全部成立
    """
    rng = np.random.default_rng(seed)
    violations: list[str] = []
    with working_precision(precision):
        tol = tolerance(precision)
        for i in range(instances):
            size = int(rng.integers(2, 5))
            defective = bool(rng.integers(0, 2))
            p, q, r = (random_vector(rng, size, defective) for _ in range(3))
            hpq, hpr, hrq = _hellinger(p, q), _hellinger(p, r), _hellinger(r, q)

            k = int(rng.integers(1, 10))
            for beta in (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(k * (k + 1))):
                if hpq > chain_bound_pair(hpr, hrq, beta) + tol:
                    violations.append(f"#{i} pair β={format_fraction(beta)}")

            m = int(rng.integers(2, 7))
            chain = [random_vector(rng, size, defective) for _ in range(m)]
            steps = [_hellinger(a, b) for a, b in zip(chain, chain[1:])]
            end = _hellinger(chain[0], chain[-1])
            product = chain_bound_product(steps)
            if end > product + tol or product > chain_bound_sequence(steps) + tol:
                violations.append(f"#{i} chain m={m}")

            affinity = sum((dsqrt(a) * dsqrt(b) for a, b in zip(p, q)), Decimal(0))
            if affinity > 1 - hpq / 2 + tol or 1 - hpq / 2 > dexp(-hpq / 2) + tol:
                violations.append(f"#{i} affinity")

            mu, nu = IIDSemimeasure(p), IIDSemimeasure(q)
            x = tuple(int(a) for a in rng.integers(0, size, size=int(rng.integers(0, 3))))
            if not continuity_bound(mu, nu, x, precision=precision).passed:
                violations.append(f"#{i} continuity")
    return violations


class VerificationSuite:
    """
    校验套件
    每个检查返回 CheckResult；LabError 被捕获为失败项并保留 witness
    """

    def __init__(self, config: LabConfig, registry: ModelRegistry | None = None, bus: LabEventBus | None = None):
        self.config = config
        self.registry = registry
        self.bus = bus or get_event_bus()

    def checks(self) -> list[tuple[str, Callable[[], CheckResult]]]:
        return [
            ("measure_flags", self.check_measure_flags),
            ("registry_semimeasures", self.check_registry_semimeasures),
            ("registry_supermartingales", self.check_registry_supermartingales),
            ("mixture_dominance", self.check_mixture_dominance),
            ("lemma1_chain", self.check_lemma1),
            ("kappa_bound", self.check_kappa_bound),
            ("hellinger_properties", self.check_hellinger_properties),
            ("expected_to_individual", self.check_expected_to_individual),
            ("quasimeasures", self.check_quasimeasures),
            ("adjacent_ratios", self.check_adjacent_ratios),
            ("w_over_d", self.check_w_over_d),
            ("counterexample", self.check_counterexample),
            ("anti_dominance", self.check_anti_dominance),
        ]

    def _run_check(self, name: str, check: Callable[[], CheckResult]) -> CheckResult:
        try:
            result = check()
        except LabError as e:
            logger.error(f"校验 {name} 失败: {e}")
            return CheckResult(name, False, detail=e.message, witness=e.witness)
        except Exception as e:
            logger.error(f"校验 {name} 异常: {e}", exc_info=True)
            return CheckResult(name, False, detail=f"{type(e).__name__}: {e}")
        result.name = name
        return result

    async def run(self) -> VerificationReport:
        c = self.config
        if self.registry is None:
            self.registry = resolve_registry(c.registry)
        report = VerificationReport()
        if c.precision < LOW_PRECISION_WARNING_BITS:
            message = f"工作精度 {c.precision} 位低于 {LOW_PRECISION_WARNING_BITS} 位，容差为 2^-{c.precision - 20}"
            report.warnings.append(message)
            logger.warning(message)
            await self.bus.publish(LabEvent(LabEventType.TOLERANCE_WARNING, experiment="verify", data={"precision": c.precision}))

        results = await asyncio.gather(
            *(asyncio.to_thread(self._run_check, name, check) for name, check in self.checks())
        )
        for result in results:
            report.checks.append(result)
            event_type = LabEventType.CHECK_PASSED if result.passed else LabEventType.CHECK_FAILED
            await self.bus.publish(LabEvent(event_type, experiment="verify", data=result.to_dict()))
        failure = report.first_failure
        if failure:
            logger.error(f"校验未通过，首个失败项: {failure.name} {failure.detail}")
        else:
            logger.info(f"全部 {len(report.checks)} 项校验通过")
        return report

    # ------------------------------------------------------------------
    # 各项检查
    # ------------------------------------------------------------------

    def check_measure_flags(self) -> CheckResult:
        validate_measure_flags(self.registry, self.config.depth, self.config.stages, self.config.budget)
        k = len(self.registry)
        root = delta_k(self.registry, k, self.config.stages).evaluate(())
        return CheckResult("", True, detail=f"δ_{k}(ε) = {format_fraction(root)}")

    def check_registry_semimeasures(self) -> CheckResult:
        c = self.config
        for entry in self.registry:
            report = verify_semimeasure(entry.limit(c.stages), c.depth, c.budget)
            if not report.passed:
                return CheckResult("", False, detail=f"{entry.name} 不是半测度", witness=report.witness)
            for t in range(1, min(c.stages, 4)):
                witness = stages_monotone(entry.staged, t, c.depth, c.budget)
                if witness is not None:
                    return CheckResult("", False, detail=f"{entry.name} 阶段 {t} 不单调", witness=witness)
        return CheckResult("", True, detail=f"{len(self.registry)} 个条目到深度 {c.depth}")

    def check_registry_supermartingales(self) -> CheckResult:
        c = self.config
        entries = [*self.registry, *convergence_registry()]
        for entry in entries:
            if entry.staged.alphabet.size != 2:
                continue
            ok, witness = is_supermartingale(semimeasure_to_supermartingale(entry.limit(c.stages)), c.depth, c.budget)
            if not ok:
                return CheckResult("", False, detail=f"{entry.name} 的 ν/λ 不是上鞅", witness=f"{entry.name}:{witness}")
        return CheckResult("", True, detail=f"{len(entries)} 个条目的 ν/λ 到深度 {c.depth}")

    def check_mixture_dominance(self) -> CheckResult:
        c = self.config
        M = mixture(self.registry, WeightRule.CODE_LENGTH)
        for entry in self.registry:
            stage = entry.staged.stage(c.stages)
            if stage.evaluate(()) == 0:
                continue
            constant = dominance_constant(M, stage, c.depth, c.stages, c.budget)
            if constant < entry.weight(WeightRule.CODE_LENGTH):
                return CheckResult("", False, detail=f"M 对 {entry.name} 的支配常数 {format_fraction(constant)}", witness=entry.name)
        return CheckResult("", True)

    def _lemma1_pair(self):
        mu = BernoulliMeasure(Fraction(2, 3))
        nu = SumSemimeasure([(Fraction(1, 2), BernoulliMeasure(Fraction(1, 3))), (Fraction(1, 2), mu)])
        return mu, nu, Fraction(1, 2)

    def check_lemma1(self) -> CheckResult:
        c = self.config
        mu, nu, w = self._lemma1_pair()
        report = verify_lemma1(mu, nu, w, c.horizon, c.precision, tuple(c.tail_offsets), c.count_threshold_value, c.budget)
        return CheckResult(
            "",
            report.passed,
            detail=f"(i)={format_decimal(report.expected_sum, 10)} 余量={format_decimal(report.exact_margin, 10)}",
        )

    def check_kappa_bound(self) -> CheckResult:
        c = self.config
        mu, nu, w = self._lemma1_pair()
        report = verify_kappa_bound(mu, nu, w, c.kappa_value, c.horizon, c.precision, c.budget)
        return CheckResult("", report.passed, detail=f"κ={format_fraction(report.kappa)} 值={format_decimal(report.value, 10)}")

    def check_hellinger_properties(self) -> CheckResult:
        violations = hellinger_property_violations(self.config.seed, PROPERTY_INSTANCES, self.config.precision)
        return CheckResult(
            "",
            not violations,
            detail=f"{PROPERTY_INSTANCES} 个随机实例",
            witness=violations[0] if violations else None,
        )

    def check_expected_to_individual(self) -> CheckResult:
        c = self.config
        mu, nu, w = self._lemma1_pair()
        n = min(c.horizon, LEMMA6_HORIZON)
        with working_precision(c.precision):
            eps = ceil_dyadic(dln(1 / w), c.precision)
        F = prefix_functional(hellinger_sum_functional(mu, nu, c.precision))
        omega = sample_sequence(mu, n, c.seed)
        codelen = code_length_for_index(len(self.registry) + 1)
        report = expected_to_individual(
            F, mu, constant_schedule(eps), codelen, omega, n, self.registry, c.stages, c.precision, c.budget
        )
        return CheckResult(
            "",
            report.passed,
            detail=f"n={n} 码长 {codelen}，F_n(ω)={format_fraction(report.functional_value)}",
            witness=report.monotone_witness or report.dominance_witness,
        )

    def check_quasimeasures(self) -> CheckResult:
        c = self.config
        for entry in self.registry:
            previous = None
            for t in range(1, c.quasimeasure_stages + 1):
                q = to_quasimeasure(entry.staged, t, c.budget)
                ok, witness = verify_quasimeasure(q, c.depth, c.budget)
                if not ok:
                    return CheckResult("", False, detail=f"{entry.name} 的 ν̃^{t} 不是准测度", witness=witness)
                if previous is not None:
                    for x in self.registry.alphabet.strings_upto(c.depth):
                        if previous.evaluate(x) > q.evaluate(x):
                            return CheckResult("", False, detail=f"{entry.name} 的 ν̃ 在阶段 {t} 下降", witness="".join(map(str, x)) or "ε")
                previous = q
        return CheckResult("", True, detail=f"阶段 ≤ {c.quasimeasure_stages}，深度 {c.depth}")

    def check_adjacent_ratios(self) -> CheckResult:
        c = self.config
        indices = MixtureSpec(self.registry, "measures").indices()
        for k in indices[1:]:
            result = adjacent_ratio_check(self.registry, k, c.depth, c.stages, c.budget)
            if not result.passed:
                return CheckResult("", False, detail=f"k={k} 比值 {format_fraction(result.max_ratio)}", witness=result.witness)
        return CheckResult("", True)

    def check_w_over_d(self) -> CheckResult:
        c = self.config
        registry = convergence_registry()
        mu = registry.by_name("bernoulli(2/3)").limit(c.stages)
        omega = sample_sequence(mu, WD_HORIZON, c.seed)
        report = convergence_experiment_prop2(registry, omega, WD_HORIZON, c.quasimeasure_stages, c.precision, c.seed, c.budget)
        failed = [k for k, v in report.verdicts.items() if not v]
        return CheckResult("", report.passed, detail=f"最大截断 {report.largest_cutoff}", witness=failed[0] if failed else None)

    def check_counterexample(self) -> CheckResult:
        c = self.config
        M = mixture(self.registry, WeightRule.CODE_LENGTH)
        trace = build_alpha(M, c.stages, c.alpha_length, c.budget)
        if not trace.invariant_passed:
            return CheckResult("", False, detail="M^t(α^t_{1:n}) > 2^-n", witness=trace.invariant_witness)
        if not trace.monotone:
            return CheckResult("", False, detail="α^t 不按字典序单调")
        r = build_r(trace)
        ok, witness = is_supermartingale(r.as_supermartingale(), c.alpha_length, c.budget)
        if not ok:
            return CheckResult("", False, detail="r 不是上鞅", witness=witness)
        nu = build_nu(trace, c.stages)
        semimeasure = verify_semimeasure(nu, min(c.depth, c.stages), c.budget)
        if not semimeasure.passed:
            return CheckResult("", False, detail="ν 不是半测度", witness=semimeasure.witness)
        contamination = contaminated_mixture(nu, M, c.gamma_value, trace, r)
        failed = [k for k, v in contamination.verdicts.items() if not v]
        unexpected = r.unexpected_configurations()
        return CheckResult(
            "",
            not failed,
            detail=f"01 位置 {len(contamination.positions_01)} 个，图示外形态 {len(unexpected)} 种",
            witness=failed[0] if failed else contamination.witness,
        )

    def check_anti_dominance(self) -> CheckResult:
        c = self.config
        k = len(self.registry)
        delta = delta_k(self.registry, k, c.stages)
        report = anti_dominance_sequence(delta, c.alpha_length)
        chain = dominance_chain(delta, self.registry, k, report.sequence, c.stages)
        return CheckResult("", report.passed and chain.passed, detail=f"κ̄={chain.code_length}，M > δ_k 自 n={chain.exceeds_from}")


async def run_verification(
    config: LabConfig, registry: ModelRegistry | None = None, bus: LabEventBus | None = None
) -> VerificationReport:
    return await VerificationSuite(config, registry, bus).run()
