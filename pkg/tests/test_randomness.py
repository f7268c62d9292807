from decimal import Decimal
from fractions import Fraction

import pytest

from core.errors import BudgetExceeded, ExpectationExceeded, ZeroConditioning
from core.measures import BernoulliMeasure, DeterministicMeasure, ScaledSemimeasure, SumSemimeasure, UniformMeasure
from core.numeric import ceil_dyadic, dln, working_precision
from core.registry import ConstantStages, ModelRegistry, WeightRule, mixture
from core.sampling import sample_sequence
from intelligence.hellinger import hellinger_sum_functional
from intelligence.randomness import (
    DeficiencyTrace,
    Supermartingale,
    constant_schedule,
    deficiency_trace,
    dominance_witness,
    dyadic_upper_schedule,
    expected_to_individual,
    is_supermartingale,
    prefix_functional,
    semimeasure_to_supermartingale,
)


def _single(mu, code_length=0):
    reg = ModelRegistry(name="single")
    reg.add("mu", ConstantStages(mu), code_length, mu.is_measure)
    return reg.freeze()


def test_single_entry_mixture_has_zero_deficiency():
    mu = BernoulliMeasure(Fraction(2, 3))
    M = mixture(_single(mu))
    trace = deficiency_trace(M, mu, sample_sequence(mu, 20, 1), 20, stage=1)
    assert all(v == 0 for v in trace.per_n)
    assert trace.is_random(Fraction(1))


def test_deficiency_is_at_least_log_weight(base):
    mu = BernoulliMeasure(Fraction(2, 3))
    entry = base.by_name("bernoulli(2/3)")
    omega = sample_sequence(mu, 30, 4)
    trace = deficiency_trace(mixture(base), mu, omega, 30, stage=40)
    w = entry.weight(WeightRule.CODE_LENGTH)
    # 第 40 阶段的 dyadic 近似只差 ℓ(x)·2^-40，用极限测度检查下界
    M_limit = mixture(base).limit_hint
    assert all(M_limit(omega[:t]) >= w * mu(omega[:t]) for t in range(1, 31))
    assert all(s1 <= s2 for s1, s2 in zip(trace.sup_so_far, trace.sup_so_far[1:]))
    assert trace.csv_rows()[0][0] == "1"


def test_deficiency_requires_positive_measure():
    mu = DeterministicMeasure.periodic("0")
    M = mixture(_single(UniformMeasure()))
    with pytest.raises(ZeroConditioning):
        deficiency_trace(M, mu, "01", 2, stage=1)


def test_supermartingale_from_semimeasure():
    half = ScaledSemimeasure(UniformMeasure(), Fraction(1, 2))
    m = semimeasure_to_supermartingale(half)
    assert m("0101") == Fraction(1, 2)
    assert is_supermartingale(m, 8) == (True, None)


def test_supermartingale_violation_has_witness():
    m = Supermartingale(lambda x: Fraction(3) if x == (1,) else Fraction(1))
    ok, witness = is_supermartingale(m, 3)
    assert not ok
    assert witness == "ε"


def test_supermartingale_budget():
    m = semimeasure_to_supermartingale(UniformMeasure())
    with pytest.raises(BudgetExceeded):
        is_supermartingale(m, 12, budget=2**8)


def test_dyadic_upper_schedule_is_monotone():
    with working_precision(80):
        eps = dln(2)
    schedule = dyadic_upper_schedule(eps, 8)
    values = [schedule(k) for k in range(1, 8)]
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert all(Decimal(v.numerator) / Decimal(v.denominator) >= eps for v in values)


def test_expected_to_individual_construction(base):
    mu = BernoulliMeasure(Fraction(2, 3))
    nu = SumSemimeasure([(Fraction(1, 2), BernoulliMeasure(Fraction(1, 3))), (Fraction(1, 2), mu)])
    with working_precision(100):
        eps = ceil_dyadic(dln(2), 100)
    F = prefix_functional(hellinger_sum_functional(mu, nu))
    omega = sample_sequence(mu, 8, 0)
    report = expected_to_individual(F, mu, constant_schedule(eps), 10, omega, 8, base, stage=64)
    assert report.semimeasure_passed
    assert report.monotone_passed
    assert report.dominance_passed
    assert report.dominance_witness is None
    assert report.bound_passed
    assert report.mu_bar(()) <= 1
    assert len(base) == 6


def test_expected_to_individual_rejects_small_epsilon(base):
    mu = UniformMeasure()
    F = prefix_functional(lambda x: Fraction(1))
    with pytest.raises(ExpectationExceeded):
        expected_to_individual(F, mu, constant_schedule(Fraction(1, 2)), 5, "0000", 4, base, stage=8)


def test_deficiency_floor_needs_every_prefix():
    trace = DeficiencyTrace([], [], [Fraction(1, 100), Fraction(10)], "two-point", 1)
    assert trace.max_ratio >= Fraction(1, 2)
    assert trace.min_ratio == Fraction(1, 100)
    assert trace.floor_witness(Fraction(1, 2)) == 1
    assert trace.floor_witness(Fraction(1, 100)) is None


def test_limit_mixture_clears_weight_floor(base):
    mu = BernoulliMeasure(Fraction(2, 3))
    entry = base.by_name("bernoulli(2/3)")
    M = mixture(base)
    omega = sample_sequence(mu, 40, 2)
    trace = deficiency_trace(ConstantStages(M.limit_hint), mu, omega, 40, stage=1)
    assert trace.floor_witness(entry.weight(WeightRule.CODE_LENGTH)) is None


def test_dominance_witness_scans_every_string():
    stage = ConstantStages(UniformMeasure()).stage(1)
    ones = DeterministicMeasure.periodic("1")
    # 只看前缀 0000 时 λ ≥ 0 成立，短串 1 上才失败
    assert stage.evaluate("0000") >= ones.evaluate("0000")
    assert dominance_witness(stage, ones, Fraction(1), 4) == "1"
    assert dominance_witness(stage, ones, Fraction(1, 16), 4) is None


def test_registry_entries_are_supermartingales(registry, convergence):
    for reg in (registry, convergence):
        for entry in reg:
            m = semimeasure_to_supermartingale(entry.limit(64))
            assert is_supermartingale(m, 8) == (True, None), entry.name
