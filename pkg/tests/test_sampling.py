from fractions import Fraction

import pytest

from core.errors import PreconditionViolated
from core.measures import BernoulliMeasure, DeterministicMeasure, IIDSemimeasure
from core.sampling import locate_symbol, sample_sequence, sample_sequences


def test_same_seed_gives_same_sequence():
    mu = BernoulliMeasure(Fraction(2, 3))
    assert sample_sequence(mu, 50, 7) == sample_sequence(mu, 50, 7)
    assert sample_sequence(mu, 50, 7) != sample_sequence(mu, 50, 8)


def test_deterministic_measure_is_reproduced():
    delta = DeterministicMeasure.periodic("011")
    assert sample_sequence(delta, 6, 3) == (0, 1, 1, 0, 1, 1)


def test_locate_symbol_uses_half_open_intervals():
    probs = (Fraction(1, 3), Fraction(2, 3))
    assert locate_symbol(probs, Fraction(0)) == 0
    assert locate_symbol(probs, Fraction(1, 3)) == 1


def test_defective_measure_can_fail_mid_sample():
    with pytest.raises(PreconditionViolated):
        locate_symbol((Fraction(1, 4), Fraction(1, 4)), Fraction(3, 4))
    with pytest.raises(PreconditionViolated):
        sample_sequence(IIDSemimeasure([Fraction(0), Fraction(0)]), 1, 0)


def test_sample_sequences_use_consecutive_seeds():
    mu = BernoulliMeasure(Fraction(1, 3))
    batch = sample_sequences(mu, 10, 5, 3)
    assert batch == [sample_sequence(mu, 10, s) for s in (5, 6, 7)]
