from decimal import Decimal
from fractions import Fraction

import pytest

from api.verification import hellinger_property_violations
from core.errors import DominanceViolated, PreconditionViolated
from core.measures import BernoulliMeasure, SumSemimeasure, UniformMeasure
from core.numeric import certified_leq, compare_within, tolerance, working_precision
from intelligence.hellinger import (
    affinity_bounds,
    chain_bound_pair,
    chain_bound_product,
    chain_bound_sequence,
    continuity_bound,
    hellinger_distance,
    hellinger_series,
    optimal_beta,
    verify_kappa_bound,
    verify_lemma1,
)

TOL = Decimal(2) ** -80


def _setup():
    mu = BernoulliMeasure(Fraction(2, 3))
    nu = SumSemimeasure([(Fraction(1, 2), BernoulliMeasure(Fraction(1, 3))), (Fraction(1, 2), mu)])
    return mu, nu, Fraction(1, 2)


def test_hellinger_distance_basic_values():
    assert hellinger_distance([Fraction(1, 2)] * 2, [Fraction(1, 2)] * 2) == 0
    assert hellinger_distance([1, 0], [0, 1]) == 2
    with pytest.raises(PreconditionViolated):
        hellinger_distance([1], [Fraction(1, 2), Fraction(1, 2)])


def test_lemma1_chain_at_horizon_ten():
    mu, nu, w = _setup()
    report = verify_lemma1(mu, nu, w, 10, precision=100)
    assert report.tolerance <= TOL
    assert report.expected_sum <= report.log_exp_moment + TOL
    assert report.log_exp_moment <= report.log_inverse_weight + TOL
    with working_precision(100):
        assert abs(report.log_inverse_weight - Decimal(2).ln()) <= TOL
    assert report.exact_margin > 0
    assert report.chain_passed and report.exact_passed and report.monotone_passed


def test_lemma1_tail_bounds():
    mu, nu, w = _setup()
    report = verify_lemma1(mu, nu, w, 10, tail_offsets=(1, 2, 4))
    assert [t.offset for t in report.tails] == [1, 2, 4]
    for tail in report.tails:
        assert isinstance(tail.probability, Fraction)
        assert tail.passed
        assert tail.undecided == 0
    assert all(c.passed and c.undecided == 0 for c in report.counts)
    assert report.passed


def test_lemma1_detects_missing_dominance():
    mu = BernoulliMeasure(Fraction(2, 3))
    with pytest.raises(DominanceViolated):
        verify_lemma1(mu, BernoulliMeasure(Fraction(1, 3)), Fraction(1, 2), 4)


def test_identical_predictors_have_zero_distance():
    mu = UniformMeasure()
    report = verify_lemma1(mu, mu, Fraction(1), 5)
    assert report.expected_sum == 0
    assert report.exact_margin == 0


def test_kappa_bound_holds_and_matches_half():
    mu, nu, w = _setup()
    quarter = verify_kappa_bound(mu, nu, w, Fraction(1, 4), 8)
    half = verify_kappa_bound(mu, nu, w, Fraction(1, 2), 8)
    assert quarter.passed and half.passed
    with pytest.raises(PreconditionViolated):
        verify_kappa_bound(mu, nu, w, Fraction(3, 4), 4)


def test_series_is_cumulative():
    mu, nu, _ = _setup()
    series = hellinger_series(mu, nu, "110110", 6)
    assert len(series.per_step) == 6
    assert all(a <= b for a, b in zip(series.cumulative, series.cumulative[1:]))
    assert series.total == series.cumulative[-1]
    rows = series.csv_rows()
    assert rows[0][0] == "1" and len(rows[0]) == 4


def test_pair_bound_and_optimal_beta():
    p = [Fraction(1, 2), Fraction(1, 2)]
    q = [Fraction(1, 5), Fraction(4, 5)]
    r = [Fraction(1, 3), Fraction(2, 3)]
    hpq, hpr, hrq = hellinger_distance(p, q), hellinger_distance(p, r), hellinger_distance(r, q)
    beta, best = optimal_beta(hpr, hrq)
    assert beta is not None
    for candidate in (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(6)):
        assert hpq <= chain_bound_pair(hpr, hrq, candidate) + TOL
        assert best <= chain_bound_pair(hpr, hrq, candidate) + TOL
    assert optimal_beta(Decimal(0), hrq)[0] is None


def test_chain_product_below_sequence_bound():
    steps = [Decimal("0.01"), Decimal("0.02"), Decimal("0.005")]
    assert chain_bound_product(steps) <= chain_bound_sequence(steps)
    with pytest.raises(PreconditionViolated):
        chain_bound_sequence([])


def test_affinity_bounds_order():
    affinity, linear, exponential = affinity_bounds(
        [Fraction(1, 4), Fraction(3, 4)], [Fraction(1, 2), Fraction(1, 3)]
    )
    assert affinity <= linear <= exponential


def test_continuity_linear_and_quadratic():
    mu = UniformMeasure()
    nu = SumSemimeasure([(Fraction(1, 10), BernoulliMeasure(Fraction(1, 3)))])
    report = continuity_bound(mu, nu, "01", eps=Fraction(1, 5))
    assert report.linear_bound == Fraction(4, 45)
    assert report.quadratic_bound == Fraction(1, 100)
    assert report.passed
    # ε 过小时二次界不适用
    assert continuity_bound(mu, nu, "01", eps=Fraction(1, 100)).quadratic_bound is None


def test_property_instances_have_no_violations():
    assert hellinger_property_violations(seed=0, instances=1000) == []


def test_compare_within_leaves_close_calls_open():
    tol = tolerance(100)
    with working_precision(100):
        threshold = Decimal(2).ln() + 1
        assert compare_within(threshold + 2 * tol, threshold, tol) is True
        assert compare_within(threshold - 2 * tol, threshold, tol) is False
        assert compare_within(threshold + tol / 4, threshold, tol) is None
    assert compare_within(7, Decimal("6.93"), tol) is True


def test_certified_leq_is_exact():
    tol = tolerance(100)
    with working_precision(100):
        bound = (Decimal(-1) / 2).exp()
    assert certified_leq(Fraction(1, 2), bound, tol)
    assert not certified_leq(Fraction(bound), bound, tol)


def test_tail_mass_counts_undecided_events(mocker):
    mu, nu, w = _setup()
    exact = verify_lemma1(mu, nu, w, 6, tail_offsets=(1,))
    mocker.patch("intelligence.hellinger.compare_within", return_value=None)
    report = verify_lemma1(mu, nu, w, 6, tail_offsets=(1,))
    tail = report.tails[0]
    assert tail.probability == tail.undecided == 1
    assert tail.probability >= exact.tails[0].probability
    assert not tail.passed
    assert report.counts[0].undecided == 1
