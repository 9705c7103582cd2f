"""Exact-arithmetic Sobolev index calculators.

Everything here is pure rational arithmetic: the elliptic bootstrap
exponent ladder p_{j+1} = n p_j / (n - 2 p_j), the multiplication
admissibility test for H^{r1} x H^{r2} -> H^{sigma}, and the dimension
gate for H^s solutions. Strict inequalities at half-integers are why
floats are banned.
"""

from dataclasses import dataclass
from fractions import Fraction


@dataclass(frozen=True)
class ExponentLadder:
    n: int
    sequence: tuple              # Fractions p_0, p_1, ..., p_{j_max}
    j_max: int                   # first index with p_j >= n/2
    borderline: bool             # p_{j_max} == n/2 exactly (epsilon shift
                                 # left to the caller)


def bootstrap_exponents(n):
    """Lebesgue exponent ladder of the elliptic bootstrap, p_0 = 2."""
    if n < 3:
        raise ValueError("dimension must be at least 3")
    half = Fraction(n, 2)
    seq = [Fraction(2)]
    while seq[-1] < half:
        p = seq[-1]
        seq.append(n * p / (n - 2 * p))
    return ExponentLadder(n=n, sequence=tuple(seq), j_max=len(seq) - 1,
                          borderline=seq[-1] == half)


@dataclass(frozen=True)
class MultiplicationCheck:
    ok: bool
    reason: str
    r1: Fraction
    r2: Fraction
    sigma: Fraction
    n: int


def check_multiplication(r1, r2, sigma, n):
    """Admissibility of the product H^{r1} x H^{r2} -> H^{sigma}.

    Requires sigma <= min(r1, r2), r1 + r2 >= 0, and the strict
    inequality r1 + r2 > n/2 + sigma.
    """
    r1, r2, sigma = Fraction(r1), Fraction(r2), Fraction(sigma)
    if sigma > min(r1, r2):
        return MultiplicationCheck(False, "sigma exceeds min(r1, r2)",
                                   r1, r2, sigma, n)
    if r1 + r2 < 0:
        return MultiplicationCheck(False, "r1 + r2 negative",
                                   r1, r2, sigma, n)
    if r1 + r2 <= Fraction(n, 2) + sigma:
        return MultiplicationCheck(
            False, "r1 + r2 not above n/2 + sigma", r1, r2, sigma, n)
    return MultiplicationCheck(True, "admissible", r1, r2, sigma, n)


@dataclass(frozen=True)
class HsGate:
    ok: bool
    regularity_ok: bool          # s > n/2 + 1, strict
    dimension_ok: bool           # n <= 12
    n: int
    s: Fraction


def hs_feasible(n, s):
    """Dimension and regularity gates for an H^s solution."""
    s = Fraction(s)
    reg = s > Fraction(n, 2) + 1
    dim = n <= 12
    return HsGate(ok=reg and dim, regularity_ok=reg, dimension_ok=dim,
                  n=n, s=s)
