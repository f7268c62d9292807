import json
from fractions import Fraction

import pytest

from core.errors import LabError, ManifestError, NoLimitHint, WeightOverflow
from core.measures import BINARY, BernoulliMeasure, UniformMeasure
from core.registry import (
    ConstantStages,
    DyadicStages,
    FunctionStages,
    ModelRegistry,
    WeightRule,
    code_length_for_index,
    dominance_constant,
    load_manifest,
    mixture,
    polynomial_weight,
    resolve_registry,
    save_manifest,
    stage_gap,
    stages_monotone,
)


def test_default_registry_layout(registry):
    names = [e.name for e in registry]
    assert names == [
        "uniform",
        "bernoulli(1/3)",
        "bernoulli(2/3)",
        "poly3",
        "deterministic(0)",
        "half-uniform",
        "counterexample",
    ]
    assert registry.frozen
    assert sum(registry.weights(WeightRule.CODE_LENGTH)) == Fraction(13, 16)
    assert [e.is_measure for e in registry] == [True] * 5 + [False, False]


def test_frozen_registry_rejects_additions(base):
    with pytest.raises(LabError):
        base.add("extra", ConstantStages(UniformMeasure()), 3, True)


def test_extended_returns_new_registry(base):
    bigger = base.extended("extra", ConstantStages(UniformMeasure()), 9, True)
    assert len(bigger) == len(base) + 1
    assert bigger.entry(len(bigger)).index == len(base) + 1
    assert len(base) == 6


def test_mixture_weight_overflow():
    reg = ModelRegistry(name="heavy")
    reg.add("a", ConstantStages(UniformMeasure()), 0, True)
    reg.add("b", ConstantStages(UniformMeasure()), 1, True)
    with pytest.raises(WeightOverflow):
        mixture(reg.freeze())


def test_polynomial_weights_are_summable():
    assert polynomial_weight(1) == Fraction(1, 2)
    assert polynomial_weight(2) == Fraction(1, 256)
    assert sum(polynomial_weight(i) for i in range(1, 40)) < 1


def test_mixture_dominates_each_entry(base):
    M = mixture(base)
    for entry in base:
        stage = entry.staged.stage(8)
        if stage(()) == 0:
            continue
        assert dominance_constant(M, stage, 6, 8) >= entry.weight(WeightRule.CODE_LENGTH)


def test_dyadic_stages_are_monotone_and_converge():
    staged = DyadicStages(BernoulliMeasure(Fraction(1, 3)))
    for t in range(1, 6):
        assert stages_monotone(staged, t, 5) is None
    # 差距不超过 ℓ(x)·2^-t
    assert stage_gap(staged, 12, 4) <= Fraction(4, 2**12)


def test_stage_gap_requires_limit_hint():
    staged = FunctionStages(lambda t: UniformMeasure(), BINARY)
    with pytest.raises(NoLimitHint):
        stage_gap(staged, 1, 2)


def test_stages_monotone_reports_witness():
    staged = FunctionStages(
        lambda t: BernoulliMeasure(Fraction(1, 2)) if t == 1 else BernoulliMeasure(Fraction(1, 3)),
        BINARY,
    )
    assert stages_monotone(staged, 1, 2) == "1"


def test_manifest_round_trip(tmp_path, convergence):
    path = save_manifest(convergence, tmp_path / "conv.json")
    loaded = load_manifest(path)
    assert [e.name for e in loaded] == [e.name for e in convergence]
    assert [e.code_length for e in loaded] == [2, 2, 2, 2]
    assert loaded.entry(4).limit()(()) == 1


def test_manifest_rejects_float_parameters(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(
        json.dumps([{"index": 1, "family": "bernoulli", "params": {"p": 0.5}, "code_length": 1, "is_measure": True}]),
        encoding="utf-8",
    )
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_manifest_rejects_gapped_indices():
    entries = [
        {"index": 1, "family": "uniform", "code_length": 1, "is_measure": True},
        {"index": 3, "family": "uniform", "code_length": 2, "is_measure": True},
    ]
    with pytest.raises(ManifestError):
        load_manifest(entries)


def test_resolve_registry_presets():
    assert resolve_registry(None).name == "default"
    assert resolve_registry("", default="convergence").name == "convergence"
    assert resolve_registry("base").name == "base"


def test_code_length_for_index():
    assert code_length_for_index(1) == 2
    assert code_length_for_index(7) == 7 + 6 + 1


def test_subset_renumbers_entries(base):
    picked = base.subset(["half-uniform", "uniform"])
    assert [e.index for e in picked] == [1, 2]
    assert picked.entry(1).name == "half-uniform"
    assert not picked.entry(1).is_measure
