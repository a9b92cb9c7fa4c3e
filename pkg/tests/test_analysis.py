import itertools
from fractions import Fraction
from math import comb

import pytest

from pirsi.analysis import (
    ClassificationError,
    FULL,
    NULL,
    Relation,
    SupportClass,
    classify_support,
    closed_form_query_prob,
    compare_theorem2,
    compute_distribution,
    perturbed_distribution,
    rate_R,
    rate_RL,
    rate_Rstar,
    rate_report,
    verify_pk_conditions,
)
from pirsi.core import RangeError, validate_params

SWEEP = [(N, K, M) for N in range(2, 7) for K in range(2, 11) for M in range(1, K)]


def test_distribution_worked_example():
    d = compute_distribution(validate_params(3, 3, 1))
    assert d.g == 2
    assert d.r == (Fraction(1, 2),)
    assert d.P == (Fraction(1, 2), Fraction(1, 2))


def test_distribution_single_group():
    for N, K in [(2, 2), (3, 4), (5, 7)]:
        d = compute_distribution(validate_params(N, K, K - 1))
        assert d.g == 1 and d.P == (Fraction(1),) and d.r == ()


def test_distribution_2_5_1():
    # r_1 = (5/2 - 1)/1, r_2 = r_1 (5/2 - 2)/2; P_0 = 1/(1 + r_1 + r_2)
    d = compute_distribution(validate_params(2, 5, 1))
    assert d.g == 3
    assert d.r == (Fraction(3, 2), Fraction(3, 8))
    assert d.P == (Fraction(8, 23), Fraction(12, 23), Fraction(3, 23))


@pytest.mark.parametrize("N, K, M", SWEEP)
def test_distribution_invariants(N, K, M):
    p = validate_params(N, K, M)
    d = compute_distribution(p)
    assert sum(d.P) == 1
    assert all(x > 0 for x in d.P)
    for k in range(1, d.g):
        assert d.P[k] == d.P[0] * (N - 1) ** k * d.r_k(k)
        assert d.r_k(k) == d.r_k(k - 1) * (Fraction(K, M + 1) - k) / k
        direct = Fraction(1)
        for j in range(1, k + 1):
            direct *= (Fraction(K, M + 1) - j) / j
        assert d.r_k(k) == direct
    if p.divisible:
        assert d.P[0] == Fraction(1, N ** (p.g - 1))
    assert rate_R(p) == Fraction(N - 1) / (N - d.P[0])
    assert rate_R(p) == Fraction(p.L) / (N - d.P[0])


def test_rates_worked_example():
    p = validate_params(3, 3, 1)
    assert rate_R(p) == Fraction(4, 5)
    assert rate_Rstar(p) == Fraction(3, 4)
    assert compare_theorem2(p) == (Fraction(4, 5), Fraction(3, 4), Relation.STRICTLY_GREATER)


def test_rates_small_cases():
    for N in range(2, 6):
        p = validate_params(N, 4, 3)
        assert rate_R(p) == 1 and rate_Rstar(p) == 1
    assert rate_R(validate_params(2, 5, 1)) == Fraction(23, 38)
    p = validate_params(2, 4, 1)
    assert rate_Rstar(p) == Fraction(2, 3) == rate_R(p)
    assert compare_theorem2(validate_params(3, 4, 1))[2] is Relation.EQUAL


def test_divisible_binomial_identity():
    # 1 + sum_k C(g-1,k)(N-1)^k = N^(g-1)
    for N in range(2, 7):
        for g in range(1, 7):
            assert 1 + sum(comb(g - 1, k) * (N - 1) ** k for k in range(1, g)) == N ** (g - 1)


def test_rate_relation_sweep():
    for N in range(2, 6):
        for K in range(2, 9):
            for M in range(1, K):
                p = validate_params(N, K, M)
                R, Rs, rel = compare_theorem2(p)
                assert rel is (Relation.EQUAL if K % (M + 1) == 0 else Relation.STRICTLY_GREATER)


def test_rate_RL():
    assert rate_RL(validate_params(4, 3, 1, L=2)) == Fraction(4, 5)
    assert rate_RL(validate_params(5, 2, 1, L=1)) == 1
    assert rate_RL(validate_params(3, 5, 1, L=1)) == Fraction(23, 38)
    with pytest.raises(RangeError):
        rate_RL(validate_params(3, 3, 1))


def test_rate_report():
    r = rate_report(validate_params(3, 3, 1))
    assert r.R == r.B_symbols / r.expected_download_symbols
    assert r.expected_download_symbols == Fraction(5, 2)
    assert not r.divisible and r.R > r.Rstar


def test_classify_support():
    p = validate_params(3, 3, 1)
    assert classify_support(p, [0, 0, 0]) == NULL
    assert classify_support(p, [0, 2, 1]) == SupportClass("partial", 1)
    assert classify_support(p, [1, 2, 1]) == FULL
    with pytest.raises(ClassificationError):
        classify_support(p, [1, 0, 0])
    with pytest.raises(ClassificationError):
        classify_support(p, [3, 0, 0])
    q = validate_params(2, 5, 1)
    with pytest.raises(ClassificationError):
        classify_support(q, [1, 1, 1, 0, 0])
    assert classify_support(q, [1, 1, 1, 1, 0]) == SupportClass("partial", 2)


def test_closed_form_worked_example():
    p = validate_params(3, 3, 1)
    for W in (1, 2, 3):
        assert closed_form_query_prob(p, [0, 2, 1], W) == Fraction(1, 24)
        assert closed_form_query_prob(p, [0, 0, 0], W) == Fraction(1, 6)
        assert closed_form_query_prob(p, [1, 1, 1], W) == Fraction(1, 2) * Fraction(1, 4) * Fraction(1, 3)


def _formula_rows(p, vectors):
    for v in vectors:
        try:
            classify_support(p, v)
        except ClassificationError:
            continue
        yield v, [closed_form_query_prob(p, v, W) for W in range(1, p.K + 1)]


SMALL = [(2, K) for K in range(2, 6)] + [(3, K) for K in range(2, 5)]


@pytest.mark.parametrize("N, K", SMALL)
def test_formula_privacy_exhaustive(N, K):
    for M in range(1, K):
        p = validate_params(N, K, M)
        total = [Fraction(0)] * K
        for v, row in _formula_rows(p, itertools.product(range(N), repeat=K)):
            assert len(set(row)) == 1, (p, v, row)
            total = [t + x for t, x in zip(total, row)]
        assert total == [1] * K


@pytest.mark.parametrize("N, K", [(4, 6), (5, 7), (3, 9), (6, 10)])
def test_formula_privacy_orbits(N, K):
    # one representative per support size; W ranges over members and non-members
    for M in range(1, K):
        p = validate_params(N, K, M)
        sizes = [0, K] + [k * (M + 1) for k in range(1, p.g)]
        for s in sizes:
            v = [1] * s + [0] * (K - s)
            assert len({closed_form_query_prob(p, v, W) for W in range(1, K + 1)}) == 1


@pytest.mark.parametrize("N, K, M", SWEEP)
def test_pk_conditions_hold(N, K, M):
    assert verify_pk_conditions(validate_params(N, K, M))


def test_pk_conditions_controls():
    p = validate_params(3, 3, 1)
    assert verify_pk_conditions(p)
    assert not verify_pk_conditions(p, perturbed_distribution(p))
    assert verify_pk_conditions(validate_params(3, 3, 2))
    assert not verify_pk_conditions(validate_params(2, 5, 1), perturbed_distribution(validate_params(2, 5, 1)))
    with pytest.raises(RangeError):
        perturbed_distribution(validate_params(3, 3, 2))
