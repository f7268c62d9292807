from fractions import Fraction

import pytest

from core.errors import BudgetExceeded, GammaOutOfRange
from core.measures import BINARY, verify_semimeasure
from core.registry import WeightRule, mixture
from intelligence.counterexample import (
    SINH_PI_OVER_PI,
    anti_dominance_sequence,
    build_alpha,
    build_nu,
    build_r,
    contaminated_mixture,
    contamination_bound,
    dominance_chain,
    poly3_limit,
    sinh_pi_products,
    windowed_oscillation,
)
from intelligence.quasimeasures import delta_k
from intelligence.randomness import is_supermartingale


@pytest.fixture(scope="module")
def trace(registry):
    return build_alpha(mixture(registry, WeightRule.CODE_LENGTH), 64, 30)


def test_alpha_is_stagewise_random(registry, trace):
    M = mixture(registry, WeightRule.CODE_LENGTH)
    for t in range(1, 65):
        alpha = trace.alpha(t)
        M_t = M.stage(t)
        for n in range(0, 31):
            assert M_t(alpha[:n]) <= Fraction(1, 2**n)
    assert trace.invariant_passed
    assert trace.monotone


def test_alpha_stabilizes_and_has_01(trace):
    assert len(trace.stabilization) == 30
    assert all(1 <= s <= 64 for s in trace.stabilization)
    positions = trace.positions_01(30)
    assert positions
    assert all(trace.limit[n - 1] == 0 and trace.limit[n] == 1 for n in positions)


def test_alpha_budget(base):
    with pytest.raises(BudgetExceeded):
        build_alpha(mixture(base), 64, 30, budget=1000)


def test_r_is_supermartingale_to_depth_30(trace):
    r = build_r(trace)
    assert r(()) <= 1
    assert is_supermartingale(r.as_supermartingale(), 30) == (True, None)


def test_r_census_is_reported(trace):
    r = build_r(trace)
    census = r.census()
    assert sum(census.values()) > 0
    assert isinstance(r.unexpected_configurations(), list)


def test_nu_is_lexicographic_semimeasure(trace):
    nu = build_nu(trace, 12)
    report = verify_semimeasure(nu, 12)
    assert report.passed
    alpha = trace.alpha(12)[:12]
    assert nu(alpha) == 0
    below = tuple(0 for _ in range(12))
    if below < alpha:
        assert nu(below) == Fraction(1, 2**12)
    assert nu("1" * 13) == 0


def test_nu_stages_are_monotone(trace):
    for t in range(1, 12):
        lower, upper = build_nu(trace, t), build_nu(trace, t + 1)
        for x in BINARY.strings_upto(8):
            assert lower.evaluate(x) <= upper.evaluate(x)


def test_contamination_bound_at_01_positions(registry, trace):
    M = mixture(registry, WeightRule.CODE_LENGTH)
    nu = build_nu(trace, 64)
    report = contaminated_mixture(nu, M, Fraction(1, 9), trace, build_r(trace))
    assert report.bound == Fraction(2, 3)
    assert report.positions_01
    for n in report.positions_01:
        assert report.conditionals[n - 1] >= Fraction(2, 3)
    assert report.verdicts["bound_at_01"]
    assert report.verdicts["nu_flat_at_zero"]
    assert report.verdicts["nu_floor_at_01"]
    assert len(report.csv_rows(trace.limit)) == 30


def test_contamination_gamma_range(registry, trace):
    M = mixture(registry, WeightRule.CODE_LENGTH)
    nu = build_nu(trace, 64)
    with pytest.raises(GammaOutOfRange):
        contaminated_mixture(nu, M, Fraction(1, 5), trace)
    assert contamination_bound(Fraction(1, 9)) == Fraction(2, 3)


def test_windowed_oscillation_reports_windows(registry, trace):
    report = windowed_oscillation(mixture(registry), trace, build_r(trace))
    assert len(report.r_ratios) == 30
    assert len(report.rows) == 30
    for n1, n2, osc, osc_prime in report.windows:
        assert n1 < n2
        assert osc >= 0 and osc_prime >= 0


def test_anti_dominance_bounds(registry):
    delta = delta_k(registry, len(registry))
    report = anti_dominance_sequence(delta, 40)
    assert len(report.sequence) == 40
    for n, value in enumerate(report.values, start=1):
        assert value <= Fraction(4, 2**n)
    assert report.passed


def test_dominance_chain(registry):
    k = len(registry)
    delta = delta_k(registry, k)
    sequence = anti_dominance_sequence(delta, 30).sequence
    chain = dominance_chain(delta, registry, k, sequence, stage=64)
    assert chain.code_length == 14
    assert chain.passed
    assert chain.exceeds_from is not None


def test_sinh_products_match_brute_force():
    final, partial = sinh_pi_products(40)
    product = 1.0
    for k in range(1, 41):
        product *= 1 + 1 / k**2
        assert abs(partial[k - 1] - product) < 1e-12
        assert product < SINH_PI_OVER_PI
    assert abs(SINH_PI_OVER_PI - 3.67608) < 1e-5
    assert abs(final - product) < 1e-12


def test_poly3_limit():
    final, partial = poly3_limit(10**6)
    assert abs(final - 0.450) < 1e-3
    assert all(partial[1:] <= partial[:-1])
    assert final > 0
