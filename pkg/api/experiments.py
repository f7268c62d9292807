"""
命名实验
每个实验读取 LabConfig，写出 CSV 序列、JSON 摘要与绘图脚本，
运行清单记录配置回显、判定、耗时与每个文件的 sha256
"""

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from functools import wraps
from pathlib import Path
from typing import Any

import numpy as np

from core.config import LabConfig
from core.errors import LabError, UnknownExperiment
from core.measures import BernoulliMeasure, Poly3Measure, SumSemimeasure
from core.models import ExperimentConfig, ExperimentResult, OutputRecord, RunManifest
from core.numeric import leq_within, tolerance, working_precision
from core.registry import ConstantStages, ModelRegistry, RegistryEntry, WeightRule, mixture, resolve_registry
from core.sampling import sample_sequence
from infrastructure.events import LabEvent, LabEventBus, LabEventType, get_event_bus
from infrastructure.outputs import OutputWriter
from intelligence.counterexample import (
    ANTI_DOMINANCE_COLUMNS,
    CONTAMINATION_COLUMNS,
    OSCILLATION_COLUMNS,
    SINH_PI_OVER_PI,
    SUBSTITUTION_NOTE,
    anti_dominance_sequence,
    build_alpha,
    build_nu,
    build_r,
    contaminated_mixture,
    dominance_chain,
    poly3_limit,
    sinh_pi_products,
    windowed_oscillation,
)
from intelligence.hellinger import (
    BOUND_COLUMNS,
    RATIO_COLUMNS,
    SERIES_COLUMNS,
    hellinger_series,
    verify_kappa_bound,
    verify_lemma1,
)
from intelligence.quasimeasures import (
    PROP1_COLUMNS,
    PROP2_COLUMNS,
    convergence_experiment_prop1,
    convergence_experiment_prop2,
    delta_k,
)
from intelligence.randomness import DEFICIENCY_COLUMNS, deficiency_trace, is_supermartingale
from utils.formatters import format_duration, format_fraction

logger: logging.Logger = logging.getLogger(__name__)

REGISTRY_NOTE = "前缀复杂度 K(ν) 由声明码长代替，全体可枚举半测度由有限注册表代替"
ASYMPTOTIC_NOTE = "≤+ 与 ≤× 中的常数不可复现，这里只检查性质替代：单调、平台与精确比值"

MU_ENTRY = "bernoulli(2/3)"
PLATEAU_INCREMENT = Decimal("0.001")
POLY3_TERMS = 10**6
POLY3_TARGET = 0.450
ANTI_DOMINANCE_HORIZON = 40


@dataclass
class ExperimentContext:
    """实验运行上下文"""

    name: str
    config: LabConfig
    writer: OutputWriter

    def registry(self, default: str = "default") -> ModelRegistry:
        return resolve_registry(self.config.registry, default=default)

    def payload(
        self,
        series: str,
        horizon: int,
        values: Any,
        bounds: Any,
        verdicts: dict[str, bool],
        notes: list[str],
    ) -> dict[str, Any]:
        return {
            "series": series,
            "horizon": horizon,
            "seed": self.config.seed,
            "values": values,
            "bounds": bounds,
            "verdicts": verdicts,
            "notes": notes,
        }


class ExperimentMonitor:
    """实验耗时监控"""

    def __init__(self, slow_threshold_seconds: float = 10.0):
        self.run_count = 0
        self.total_seconds = 0.0
        self.failure_count = 0
        self.slow_runs: list[dict[str, Any]] = []
        self.slow_threshold_seconds = slow_threshold_seconds

    def record_run(self, name: str, seconds: float, success: bool):
        self.run_count += 1
        self.total_seconds += seconds
        if not success:
            self.failure_count += 1
        if seconds > self.slow_threshold_seconds:
            self.slow_runs.append({"experiment": name, "seconds": seconds, "timestamp": time.time()})
            if len(self.slow_runs) > 100:
                self.slow_runs.pop(0)

    def get_stats(self) -> dict[str, Any]:
        average = self.total_seconds / self.run_count if self.run_count else 0
        return {
            "total_runs": self.run_count,
            "average_seconds": round(average, 3),
            "failure_count": self.failure_count,
            "slow_runs_count": len(self.slow_runs),
        }


monitor = ExperimentMonitor()


def monitored(func):
    """记录实验耗时与失败"""

    @wraps(func)
    def wrapper(name: str, *args, **kwargs):
        start = time.perf_counter()
        success = True
        try:
            return func(name, *args, **kwargs)
        except Exception as e:
            success = False
            logger.error(f"实验运行失败: {name}, 错误: {e}", exc_info=not isinstance(e, LabError))
            raise
        finally:
            elapsed = time.perf_counter() - start
            monitor.record_run(name, elapsed, success)
            logger.info(f"实验 {name} 用时 {format_duration(elapsed)}")

    return wrapper


EXPERIMENTS: dict[str, Callable[[ExperimentContext], ExperimentResult]] = {}


def experiment(name: str):
    def decorator(func):
        EXPERIMENTS[name] = func
        return func

    return decorator


def _entry(registry: ModelRegistry, preferred: str) -> RegistryEntry:
    """按名称取条目，找不到时取第一个测度条目"""
    for entry in registry:
        if entry.name == preferred:
            return entry
    for entry in registry:
        if entry.is_measure:
            return entry
    raise LabError(f"注册表 {registry.name} 中没有测度条目")


@experiment("solomonoff-convergence")
def run_solomonoff_convergence(ctx: ExperimentContext) -> ExperimentResult:
    """沿 μ 抽样的 ω 上，混合 M 的逐步 Hellinger 距离、条件概率比与缺损轨迹"""
    c = ctx.config
    registry = ctx.registry()
    entry = _entry(registry, MU_ENTRY)
    mu = entry.limit(c.stages)
    M = mixture(registry, WeightRule.CODE_LENGTH)
    M_T = M.stage(c.stages)
    n = c.sample_horizon
    omega = sample_sequence(mu, n, c.seed)

    series = hellinger_series(mu, M_T, omega, n, c.precision)
    trace = deficiency_trace(M, mu, omega, n, c.stages, c.precision, reference=registry.name)
    w = entry.weight(WeightRule.CODE_LENGTH)
    nu_T = entry.staged.stage(c.stages)
    with working_precision(c.precision):
        tol = tolerance(c.precision)
        nondecreasing = all(leq_within(a, b, tol) for a, b in zip(series.cumulative, series.cumulative[1:]))
    # 阶段近似只从下方逼近 μ，逐前缀的下界 log₂(M/μ) ≥ log₂ w 用极限混合判定
    if M.limit_hint is not None:
        floor_trace = deficiency_trace(
            ConstantStages(M.limit_hint), mu, omega, n, 1, c.precision, reference=f"{registry.name}@limit"
        )
        floor_witness = floor_trace.floor_witness(w)
    else:
        floor_witness = next(
            (t for t in range(1, n + 1) if trace.ratios[t - 1] < w * nu_T.evaluate(omega[:t]) / mu.evaluate(omega[:t])),
            None,
        )
    if floor_witness is not None:
        logger.warning(f"缺损下界在 n={floor_witness} 处不成立")
    verdicts = {
        "dominance": all(M_T.evaluate(omega[:t]) >= w * nu_T.evaluate(omega[:t]) for t in range(n + 1)),
        "nondecreasing": nondecreasing,
        "deficiency_floor": floor_witness is None,
    }

    writer = ctx.writer
    writer.write_csv("solomonoff_hellinger.csv", SERIES_COLUMNS, series.csv_rows(), "h_t(M, μ) 及其累计")
    writer.write_csv("solomonoff_ratios.csv", RATIO_COLUMNS, series.ratio_rows(), "M(ω_t|ω_{<t})/μ(ω_t|ω_{<t})")
    writer.write_csv("solomonoff_deficiency.csv", DEFICIENCY_COLUMNS, trace.csv_rows(), "log₂ M/μ 与前缀上确界")
    writer.write_plot_script("solomonoff_hellinger.csv", "t", ["cumsum"], "Σ h_t(M, μ)")
    writer.write_plot_script("solomonoff_ratios.csv", "t", ["ratio"], "条件概率比")
    writer.write_json(
        "solomonoff-convergence.json",
        ctx.payload(
            "solomonoff-convergence",
            n,
            {"omega": omega, "total": series.total, "deficiency": trace.supremum},
            {"weight": w, "log_inverse_weight_bits": entry.code_length},
            verdicts,
            [REGISTRY_NOTE, f"μ = {entry.name}"],
        ),
    )
    return ExperimentResult("solomonoff-convergence", verdicts, {"total": series.total}, [REGISTRY_NOTE])


@experiment("lemma1-bounds")
def run_lemma1_bounds(ctx: ExperimentContext) -> ExperimentResult:
    """μ = B(2/3)，ν = ½B(1/3) + ½B(2/3)，w = ½ 的期望链、尾部界与 κ 推广"""
    c = ctx.config
    mu = BernoulliMeasure(Fraction(2, 3))
    nu = SumSemimeasure([(Fraction(1, 2), BernoulliMeasure(Fraction(1, 3))), (Fraction(1, 2), mu)])
    w = Fraction(1, 2)
    report = verify_lemma1(
        mu, nu, w, c.horizon, c.precision, tuple(c.tail_offsets), c.count_threshold_value, c.budget
    )
    kappa = verify_kappa_bound(mu, nu, w, c.kappa_value, c.horizon, c.precision, c.budget)
    verdicts = {
        "chain": report.chain_passed,
        "exact": report.exact_passed,
        "monotone": report.monotone_passed,
        "tails": all(t.passed for t in report.tails),
        "counts": all(k.passed for k in report.counts),
        "kappa": kappa.passed,
    }

    ctx.writer.write_csv("lemma1_chain.csv", BOUND_COLUMNS, report.csv_rows(), "按视界的 (i)、(ii) 与 (iii)")
    ctx.writer.write_csv(
        "lemma1_tails.csv",
        ["offset", "threshold", "probability", "undecided", "bound", "passed"],
        [[t.offset, t.threshold, t.probability, t.undecided, t.bound, t.passed] for t in report.tails],
        "P[Σh ≥ ln w⁻¹ + c] 与 e^{−c/2}",
    )
    ctx.writer.write_csv(
        "lemma1_counts.csv",
        ["offset", "epsilon", "min_count", "probability", "undecided", "bound", "passed"],
        [[k.offset, k.epsilon, k.min_count, k.probability, k.undecided, k.bound, k.passed] for k in report.counts],
        "超过 ε 的步数的尾部界",
    )
    ctx.writer.write_plot_script("lemma1_chain.csv", "n", ["expected_sum", "two_log_exp_moment", "log_inverse_weight"], "期望链")
    ctx.writer.write_json(
        "lemma1-bounds.json",
        ctx.payload(
            "lemma1-bounds",
            c.horizon,
            {
                "expected_sum": report.expected_sum,
                "log_exp_moment": report.log_exp_moment,
                "exp_moment": report.exp_moment,
                "kappa_value": kappa.value,
            },
            {
                "log_inverse_weight": report.log_inverse_weight,
                "exact_margin": report.exact_margin,
                "kappa_margin": kappa.margin,
                "tolerance": report.tolerance,
            },
            verdicts,
            ["期望按 μ 在 X^n 上穷举，逐叶精确求积"],
        ),
    )
    return ExperimentResult("lemma1-bounds", verdicts, {"exact_margin": report.exact_margin})


@experiment("counterexample")
def run_counterexample(ctx: ExperimentContext) -> ExperimentResult:
    """α、r、ν 与污染混合 M′ 沿 α 的条件概率"""
    c = ctx.config
    registry = ctx.registry()
    M = mixture(registry, WeightRule.CODE_LENGTH)
    trace = build_alpha(M, c.stages, c.alpha_length, c.budget)
    r = build_r(trace)
    r_ok, r_witness = is_supermartingale(r.as_supermartingale(), c.alpha_length, c.budget)
    nu = build_nu(trace, c.stages)
    contamination = contaminated_mixture(nu, M, c.gamma_value, trace, r)
    oscillation = windowed_oscillation(M, trace, r)
    unexpected = r.unexpected_configurations()

    verdicts = {
        "lex_monotone": trace.monotone,
        "stagewise_random": trace.invariant_passed,
        "r_supermartingale": r_ok,
        **{f"contamination_{k}": v for k, v in contamination.verdicts.items()},
        "oscillation": oscillation.passed,
    }

    ctx.writer.write_csv(
        "counterexample_conditionals.csv",
        CONTAMINATION_COLUMNS,
        contamination.csv_rows(trace.limit),
        "M′(α_n|α_{<n})，λ 条件概率恒为 ½",
    )
    ctx.writer.write_csv("counterexample_oscillation.csv", OSCILLATION_COLUMNS, oscillation.rows, "R 与 R′ 的比值")
    ctx.writer.write_plot_script("counterexample_conditionals.csv", "n", ["conditional", "lambda_conditional"], "M′ 沿 α")
    census = {f"{p}:{format_fraction(a)};{format_fraction(b)},{format_fraction(d)}": count for (p, a, b, d), count in sorted(r.census().items())}
    ctx.writer.write_json(
        "counterexample.json",
        ctx.payload(
            "counterexample",
            c.alpha_length,
            {
                "trace": trace.to_dict(),
                "on_sequence_conditionals": contamination.conditionals,
                "r_values": contamination.r_values,
                "census": census,
                "unexpected_configurations": [list(u) for u in unexpected],
                "oscillation_windows": [list(wnd) for wnd in oscillation.windows],
            },
            {"gamma": contamination.gamma, "conditional_bound": contamination.bound, "delta": oscillation.delta},
            verdicts,
            [SUBSTITUTION_NOTE, REGISTRY_NOTE, f"r 上鞅违反处: {r_witness}" if r_witness else "r 上鞅检查无违反"],
        ),
    )
    return ExperimentResult(
        "counterexample",
        verdicts,
        {"positions_01": len(contamination.positions_01), "far_positions": len(contamination.far_positions)},
        [SUBSTITUTION_NOTE],
    )


@experiment("prop1")
def run_prop1(ctx: ExperimentContext) -> ExperimentResult:
    """D̂ → μ：多个种子下 Σ_t h_t(δ̂_{k0}, μ) 的平台"""
    c = ctx.config
    registry = ctx.registry(default="convergence")
    entry = _entry(registry, MU_ENTRY)
    mu = entry.limit(c.stages)
    n = c.sample_horizon
    rows: list[list[Any]] = []
    summary_rows: list[list[Any]] = []
    passed_all = plateau = True
    for i in range(c.samples):
        seed = c.seed + i
        omega = sample_sequence(mu, n, seed)
        report = convergence_experiment_prop1(registry, entry.index, omega, n, c.stages, c.slack, c.precision, seed)
        rows.extend([[seed] + row for row in report.csv_rows()])
        summary_rows.append([seed, report.series.total, report.final_increment, report.deficiency, report.passed])
        passed_all = passed_all and report.passed
        plateau = plateau and report.final_increment < PLATEAU_INCREMENT
    verdicts = {"property_checks": passed_all, "plateau": plateau}

    ctx.writer.write_csv("prop1_series.csv", ["seed"] + PROP1_COLUMNS, rows, "每个种子的 h_t(δ̂_{k0}, μ) 与 Σh_t(δ̂_{k0}, D̂)")
    ctx.writer.write_csv(
        "prop1_summary.csv",
        ["seed", "total", "final_increment", "deficiency", "passed"],
        summary_rows,
        "每个种子的累计和、末增量与缺损",
    )
    ctx.writer.write_plot_script("prop1_summary.csv", "seed", ["total"], "Σ h_t(δ̂_{k0}, μ)")
    ctx.writer.write_json(
        "prop1.json",
        ctx.payload(
            "prop1",
            n,
            {"k0": entry.index, "samples": c.samples},
            {"plateau_increment": PLATEAU_INCREMENT, "slack": c.slack},
            verdicts,
            [REGISTRY_NOTE, ASYMPTOTIC_NOTE],
        ),
    )
    return ExperimentResult("prop1", verdicts, {"samples": c.samples}, [ASYMPTOTIC_NOTE])


@experiment("prop2")
def run_prop2(ctx: ExperimentContext) -> ExperimentResult:
    """W → D：最大截断深度之后 W/D 精确为 1"""
    c = ctx.config
    registry = ctx.registry(default="convergence")
    mu = _entry(registry, MU_ENTRY).limit(c.stages)
    n = c.sample_horizon
    rows: list[list[Any]] = []
    verdicts: dict[str, bool] = {}
    largest_cutoff = 0
    for i in range(c.samples):
        seed = c.seed + i
        omega = sample_sequence(mu, n, seed)
        report = convergence_experiment_prop2(
            registry, omega, n, c.quasimeasure_stages, c.precision, seed, c.budget
        )
        largest_cutoff = report.largest_cutoff
        rows.extend([[seed] + row for row in report.csv_rows()])
        for key, value in report.verdicts.items():
            verdicts[key] = verdicts.get(key, True) and value

    ctx.writer.write_csv("prop2_series.csv", ["seed"] + PROP2_COLUMNS, rows, "W/D、条件比值、预测差、包络与 h(D, W)")
    ctx.writer.write_plot_script("prop2_series.csv", "t", ["w_over_d", "envelope"], "W/D 与包络")
    ctx.writer.write_json(
        "prop2.json",
        ctx.payload(
            "prop2",
            n,
            {"samples": c.samples, "largest_cutoff": largest_cutoff},
            {"stage_cap": c.quasimeasure_stages},
            verdicts,
            [REGISTRY_NOTE, ASYMPTOTIC_NOTE],
        ),
    )
    return ExperimentResult("prop2", verdicts, {"largest_cutoff": largest_cutoff}, [ASYMPTOTIC_NOTE])


@experiment("anti-dominance")
def run_anti_dominance(ctx: ExperimentContext) -> ExperimentResult:
    """δ_k 的反支配序列、乘积界与支配链"""
    c = ctx.config
    registry = ctx.registry()
    k = len(registry)
    delta = delta_k(registry, k, c.stages)
    report = anti_dominance_sequence(delta, ANTI_DOMINANCE_HORIZON)
    chain = dominance_chain(delta, registry, k, report.sequence, c.stages)
    final, _ = sinh_pi_products(POLY3_TERMS)
    verdicts = {
        "threshold": report.threshold_passed,
        "product_bound": report.product_passed,
        "four_bound": report.four_passed,
        "dominance_chain": chain.passed,
        "sinh_products_below_limit": final < SINH_PI_OVER_PI,
    }

    ctx.writer.write_csv("anti_dominance.csv", ANTI_DOMINANCE_COLUMNS, report.csv_rows(), "ν(α_{1:n}) 与两个上界")
    ctx.writer.write_plot_script("anti_dominance.csv", "n", ["nu_prefix", "four_bound"], "反支配序列", log_y=True)
    ctx.writer.write_json(
        "anti-dominance.json",
        ctx.payload(
            "anti-dominance",
            ANTI_DOMINANCE_HORIZON,
            {"sequence": report.sequence, "k": k, "exceeds_from": chain.exceeds_from, "sinh_partial": final},
            {"code_length": chain.code_length, "sinh_pi_over_pi": SINH_PI_OVER_PI},
            verdicts,
            [REGISTRY_NOTE],
        ),
    )
    return ExperimentResult("anti-dominance", verdicts, {"exceeds_from": chain.exceeds_from})


@experiment("poly3-limit")
def run_poly3_limit(ctx: ExperimentContext) -> ExperimentResult:
    """Π_{t≤n}(1 − ½t⁻³) 收敛到正常数，故 0^∞ 在 poly3 下有正概率"""
    final, partial = poly3_limit(POLY3_TERMS)
    exact = Poly3Measure()
    checkpoints = sorted({int(v) for v in np.logspace(0, 6, 61)})
    rows = [[t, repr(float(partial[t - 1]))] for t in checkpoints]
    exact_ok = all(
        abs(float(exact.evaluate((0,) * t)) - float(partial[t - 1])) < 1e-12 for t in range(1, 21)
    )
    verdicts = {"limit": abs(final - POLY3_TARGET) < 1e-3, "exact_agreement": exact_ok}

    ctx.writer.write_csv("poly3_limit.csv", ["t", "partial_product"], rows, "对数间隔的部分积")
    ctx.writer.write_plot_script("poly3_limit.csv", "t", ["partial_product"], "Π(1 − ½t⁻³)")
    ctx.writer.write_json(
        "poly3-limit.json",
        ctx.payload("poly3-limit", POLY3_TERMS, {"final": final}, {"target": POLY3_TARGET}, verdicts, []),
    )
    return ExperimentResult("poly3-limit", verdicts, {"final": final})


@monitored
def run_experiment(name: str, config: LabConfig, bus: LabEventBus | None = None) -> tuple[ExperimentResult, Path]:
    """
    运行命名实验并写出运行清单

    Returns:
        (实验结果, 运行清单路径)

    Raises:
        UnknownExperiment: 名称不在实验表中
    """
    runner = EXPERIMENTS.get(name)
    if runner is None:
        raise UnknownExperiment(f"未知实验: {name}，可选: {', '.join(sorted(EXPERIMENTS))}", witness=name)

    bus = bus or get_event_bus()
    writer = OutputWriter(Path(config.out) / name, name, bus)
    manifest = RunManifest(config=ExperimentConfig(name, config).to_dict())

    def record_output(event: LabEvent):
        if event.experiment == name:
            manifest.record(OutputRecord(**event.data))

    bus.subscribe(LabEventType.FILE_WRITTEN, record_output)
    bus.publish_nowait(LabEvent(LabEventType.EXPERIMENT_STARTED, experiment=name, data=config.to_dict()))
    logger.info(f"开始实验 {name}，种子 {config.seed}")
    try:
        result = runner(ExperimentContext(name, config, writer))
    finally:
        bus.unsubscribe(LabEventType.FILE_WRITTEN, record_output)

    manifest.verdicts = {f"{name}.{k}": v for k, v in result.verdicts.items()}
    manifest.finish()
    path = writer.write_manifest(manifest)
    bus.publish_nowait(
        LabEvent(LabEventType.EXPERIMENT_FINISHED, experiment=name, data={"passed": result.passed, "verdicts": result.verdicts})
    )
    logger.info(f"实验 {name} 完成: {'全部通过' if result.passed else '存在失败判定'}")
    return result, path
