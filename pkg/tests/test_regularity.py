from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from constraint_forge.regularity import (bootstrap_exponents,
                                         check_multiplication, hs_feasible)


def reference_ladder(n):
    """Independent recomputation of the exponent recurrence."""
    seq = [Fraction(2)]
    while 2 * seq[-1] < n:
        p = seq[-1]
        seq.append(Fraction(n * p.numerator,
                            p.denominator * n - 2 * p.numerator))
    return seq


@pytest.mark.parametrize("n", range(3, 15))
def test_ladder_matches_reference(n):
    lad = bootstrap_exponents(n)
    ref = reference_ladder(n)
    assert list(lad.sequence) == ref
    assert lad.j_max == len(ref) - 1
    assert lad.borderline == (ref[-1] == Fraction(n, 2))


def test_known_ladders():
    lad3 = bootstrap_exponents(3)
    assert [str(p) for p in lad3.sequence] == ["2"]
    assert lad3.j_max == 0 and not lad3.borderline
    assert bootstrap_exponents(4).borderline  # p0 = 2 = 4/2 exactly
    lad6 = bootstrap_exponents(6)
    assert [str(p) for p in lad6.sequence] == ["2", "6"]
    assert lad6.j_max == 1 and not lad6.borderline
    lad12 = bootstrap_exponents(12)
    assert [str(p) for p in lad12.sequence] == ["2", "3", "6"]
    assert lad12.j_max == 2 and lad12.borderline  # 6 = 12/2 exactly
    assert bootstrap_exponents(8).borderline  # 2 -> 4 = 8/2 exactly


def test_ladder_rejects_low_dimension():
    with pytest.raises(ValueError):
        bootstrap_exponents(2)


@given(st.integers(min_value=3, max_value=40))
def test_ladder_structure(n):
    lad = bootstrap_exponents(n)
    half = Fraction(n, 2)
    seq = lad.sequence
    assert seq[0] == 2
    # strictly increasing, below n/2 until the last entry
    for a, b in zip(seq, seq[1:]):
        assert b > a
        assert a < half
    assert seq[-1] >= half
    assert lad.borderline == (seq[-1] == half)


def frac_st():
    return st.fractions(min_value=-10, max_value=10,
                        max_denominator=8)


@given(frac_st(), frac_st(), frac_st(),
       st.integers(min_value=3, max_value=12))
def test_multiplication_reasons_consistent(r1, r2, sigma, n):
    chk = check_multiplication(r1, r2, sigma, n)
    if sigma > min(r1, r2):
        assert chk.reason == "sigma exceeds min(r1, r2)"
    elif r1 + r2 < 0:
        assert chk.reason == "r1 + r2 negative"
    elif r1 + r2 <= Fraction(n, 2) + sigma:
        assert chk.reason == "r1 + r2 not above n/2 + sigma"
    else:
        assert chk.reason == "admissible"
    assert chk.ok == (chk.reason == "admissible")


def test_multiplication_strict_at_half_integer():
    # r1 + r2 = n/2 + sigma exactly must fail (strict inequality)
    shift = Fraction(1, 100)
    chk = check_multiplication(1, 1, Fraction(1, 2), 3)
    assert not chk.ok
    assert chk.reason == "r1 + r2 not above n/2 + sigma"
    chk = check_multiplication(1 + shift, 1 + shift, Fraction(1, 2), 3)
    assert chk.ok


def test_hs_gate_dimension_cutoff():
    assert hs_feasible(12, 8).ok
    gate = hs_feasible(13, 9)
    assert gate.regularity_ok
    assert not gate.dimension_ok
    assert not gate.ok


def test_hs_gate_regularity_strict():
    # s = n/2 + 1 exactly is not enough
    gate = hs_feasible(4, 3)
    assert not gate.regularity_ok
    assert hs_feasible(4, Fraction(7, 2)).regularity_ok
