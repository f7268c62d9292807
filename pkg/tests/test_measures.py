from fractions import Fraction

import pytest

from core.errors import BudgetExceeded, PreconditionViolated, ZeroConditioning
from core.measures import (
    BINARY,
    Alphabet,
    BernoulliMeasure,
    DeterministicMeasure,
    IIDSemimeasure,
    NormalizedSemimeasure,
    Poly3Measure,
    ScaledSemimeasure,
    SumSemimeasure,
    TableSemimeasure,
    TruncatedSemimeasure,
    UniformMeasure,
    conditional,
    family_deterministic,
    floor_conditionals,
    joint,
    predictive_vector,
    verify_semimeasure,
)


def test_alphabet_enumerates_in_lexicographic_order():
    assert list(BINARY.strings(2)) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert len(list(Alphabet(3).strings_upto(2))) == 1 + 3 + 9


def test_alphabet_rejects_single_symbol():
    with pytest.raises(PreconditionViolated):
        Alphabet(1)


def test_uniform_values_and_conditionals():
    lam = UniformMeasure()
    assert joint(lam, "0110") == Fraction(1, 16)
    assert conditional(lam, "01", 1) == Fraction(1, 2)
    assert verify_semimeasure(lam, 8).is_measure_like


def test_bernoulli_joint_is_exact():
    mu = BernoulliMeasure(Fraction(2, 3))
    assert mu("110") == Fraction(2, 3) ** 2 * Fraction(1, 3)
    assert predictive_vector(mu, "1") == (Fraction(1, 3), Fraction(2, 3))


def test_scaled_uniform_is_strict_semimeasure():
    half = ScaledSemimeasure(UniformMeasure(), Fraction(1, 2))
    report = verify_semimeasure(half, 6)
    assert report.passed
    assert report.root_mass == Fraction(1, 2)
    assert not report.is_measure_like


def test_defective_iid_fails_equality_but_passes_inequality():
    nu = IIDSemimeasure([Fraction(1, 4), Fraction(1, 4)])
    report = verify_semimeasure(nu, 5)
    assert report.passed
    assert not report.equality_everywhere
    assert nu.level_mass(3) == Fraction(1, 8)


def test_verify_semimeasure_reports_first_violation():
    table = TableSemimeasure({(): Fraction(1, 2), (0,): Fraction(1, 2), (1,): Fraction(1, 4)})
    report = verify_semimeasure(table, 2)
    assert not report.passed
    assert report.witness == "ε"


def test_conditional_on_zero_probability_raises():
    delta = DeterministicMeasure.periodic("0")
    assert delta("000") == 1
    assert delta("001") == 0
    with pytest.raises(ZeroConditioning) as excinfo:
        conditional(delta, "1", 0)
    assert excinfo.value.witness == "1"


def test_poly3_zero_path_matches_product():
    mu = Poly3Measure()
    expected = Fraction(1)
    for t in range(1, 6):
        expected *= 1 - Fraction(1, 2 * t**3)
    assert mu((0,) * 5) == expected
    assert verify_semimeasure(mu, 6).is_measure_like


def test_sum_and_normalization():
    b1, b2 = BernoulliMeasure(Fraction(1, 3)), BernoulliMeasure(Fraction(2, 3))
    mix = SumSemimeasure([(Fraction(1, 4), b1), (Fraction(1, 4), b2)])
    assert not mix.is_measure
    normalized = NormalizedSemimeasure(mix)
    assert normalized(()) == 1
    assert verify_semimeasure(normalized, 6).is_measure_like


def test_normalizing_zero_semimeasure_raises():
    with pytest.raises(ZeroConditioning):
        NormalizedSemimeasure(ScaledSemimeasure(UniformMeasure(), Fraction(0)))


def test_truncated_semimeasure_is_zero_beyond_cutoff():
    rho = TruncatedSemimeasure(IIDSemimeasure([Fraction(1, 3), Fraction(1, 3)]), 3)
    assert rho(()) == Fraction(2, 3) ** 3
    assert rho("0000") == 0
    report = verify_semimeasure(rho, 3)
    assert report.passed and report.equality_everywhere


def test_floor_conditionals_is_monotone_in_bits():
    base = BernoulliMeasure(Fraction(1, 3))
    coarse, fine = floor_conditionals(base, 3), floor_conditionals(base, 6)
    for x in BINARY.strings_upto(5):
        assert coarse.evaluate(x) <= fine.evaluate(x) <= base.evaluate(x)


def test_budget_is_enforced():
    with pytest.raises(BudgetExceeded):
        verify_semimeasure(UniformMeasure(), 12, budget=2**10)


def test_deterministic_family_defaults_to_zeros():
    nu = family_deterministic()
    assert nu("000") == 1
    assert nu("001") == 0
    odd = family_deterministic(lambda n: n % 2)
    assert odd("1010") == 1
    assert verify_semimeasure(odd, 6).passed
