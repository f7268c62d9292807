from fractions import Fraction

import pytest

from core.errors import EmptyMeasureSet, MeasureFlagInvalid, PreconditionViolated
from core.measures import BINARY, BernoulliMeasure, ScaledSemimeasure, UniformMeasure, verify_semimeasure
from core.registry import ConstantStages, ModelRegistry, load_manifest, polynomial_weight
from core.sampling import sample_sequence
from intelligence.quasimeasures import (
    MixtureSpec,
    adjacent_ratio_check,
    build_D,
    build_W,
    convergence_experiment_prop1,
    convergence_experiment_prop2,
    delta_hat_k,
    delta_k,
    entry_cutoff,
    to_quasimeasure,
    validate_measure_flags,
    verify_quasimeasure,
)


def test_uniform_converts_to_itself():
    staged = ConstantStages(UniformMeasure())
    q = to_quasimeasure(staged, 10)
    assert q.cutoff == 10
    for x in BINARY.strings_upto(10):
        assert q(x) == Fraction(1, 2 ** len(x))
    assert verify_quasimeasure(q, 10) == (True, None)


def test_half_uniform_has_cutoff_one():
    staged = ConstantStages(ScaledSemimeasure(UniformMeasure(), Fraction(1, 2)))
    q = to_quasimeasure(staged, 8)
    assert q.cutoff == 1
    assert q(()) == Fraction(1, 2)
    assert q("0") == Fraction(1, 4)
    assert q("00") == 0
    assert verify_quasimeasure(q, 6) == (True, None)


def test_quasimeasure_stages_are_monotone():
    staged = ConstantStages(UniformMeasure())
    previous = to_quasimeasure(staged, 0)
    assert previous.is_zero
    for t in range(1, 33):
        q = to_quasimeasure(staged, t)
        assert verify_quasimeasure(q, 6)[0]
        for x in BINARY.strings_upto(6):
            assert previous(x) <= q(x)
        previous = q


def test_negative_stage_rejected():
    with pytest.raises(PreconditionViolated):
        to_quasimeasure(ConstantStages(UniformMeasure()), -1)


def test_measure_flags_accept_shipped_registry(registry):
    validate_measure_flags(registry, 6)


def test_corrupted_measure_flag_is_rejected():
    reg = ModelRegistry(name="corrupt")
    reg.add("uniform", ConstantStages(UniformMeasure()), 2, True)
    reg.add("half", ConstantStages(ScaledSemimeasure(UniformMeasure(), Fraction(1, 2))), 2, True)
    with pytest.raises(MeasureFlagInvalid) as excinfo:
        validate_measure_flags(reg.freeze(), 4)
    assert excinfo.value.witness == "half"


def test_measure_flagged_as_non_measure_is_rejected():
    reg = ModelRegistry(name="corrupt")
    reg.add("uniform", ConstantStages(UniformMeasure()), 2, False)
    with pytest.raises(MeasureFlagInvalid):
        validate_measure_flags(reg.freeze(), 4)


def test_delta_k_filters_measures(registry):
    spec = MixtureSpec(registry, "prefix", 6)
    assert spec.indices() == [1, 2, 3, 4, 5]
    assert delta_k(registry, 3)(()) == sum(polynomial_weight(i) for i in (1, 2, 3))
    assert delta_hat_k(registry, 3)(()) == 1
    assert build_D(registry)(()) == delta_k(registry, 7)(())


def test_empty_measure_set():
    reg = ModelRegistry(name="none")
    reg.add("half", ConstantStages(ScaledSemimeasure(UniformMeasure(), Fraction(1, 2))), 2, False)
    with pytest.raises(EmptyMeasureSet):
        delta_k(reg.freeze(), 1)


def test_adjacent_ratio_bound(registry):
    for k in (2, 3, 4, 5):
        result = adjacent_ratio_check(registry, k, 6)
        assert result.passed, result.witness


def test_w_over_d_finite_cutoff():
    reg = load_manifest(
        [
            {"index": 1, "name": "b23", "family": "bernoulli", "params": {"p": "2/3"}, "code_length": 1, "is_measure": True},
            {"index": 2, "name": "t10", "family": "truncated", "params": {"cutoff": 10, "base": {"family": "uniform"}}, "code_length": 2, "is_measure": False},
        ]
    )
    assert entry_cutoff(reg.entry(2).staged, False, 16) == 10
    W = build_W(reg, 16).limit_hint
    D = build_D(reg, 16)
    mu = BernoulliMeasure(Fraction(2, 3))
    omega = sample_sequence(mu, 16, 3)
    for t in range(1, 17):
        ratio = W(omega[:t]) / D(omega[:t])
        if t <= 10:
            assert ratio > 1
        else:
            assert ratio == 1
    report = convergence_experiment_prop2(reg, omega, 16, stage_cap=16)
    assert report.largest_cutoff == 10
    assert all(c.passed for c in report.continuity)
    assert report.verdicts["ratio_above_one_before_cutoff"]
    assert all(r > 1 for r in report.ratios[:10])
    assert report.verdicts["ratio_exact_after_cutoff"]
    assert report.passed


def test_w_is_semimeasure(convergence):
    W = build_W(convergence, 12)
    assert verify_semimeasure(W.stage(12), 6).passed


def test_prop1_plateau_and_monotone(convergence):
    mu = convergence.by_name("bernoulli(2/3)").limit()
    k0 = convergence.by_name("bernoulli(2/3)").index
    for seed in range(20):
        omega = sample_sequence(mu, 200, seed)
        report = convergence_experiment_prop1(convergence, k0, omega, 200, seed=seed)
        assert report.verdicts["nondecreasing"]
        assert report.verdicts["dominance"]
        assert report.final_increment < 0.001


def test_prop1_requires_measure_entry(convergence):
    with pytest.raises(PreconditionViolated):
        convergence_experiment_prop1(convergence, 3, "0" * 10, 10)
