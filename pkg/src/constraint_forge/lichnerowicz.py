"""Scalar Lichnerowicz solve by shifted monotone Picard iteration.

The unit-Laplacian equation solved here is Delta phi = h(phi) - G with

    h(phi) = A_R phi - A_K phi^{pK} + (A_tau - A_e1) phi^{pT}
             - A_e2 phi^{-3} - A_e3 phi^{p3}

where A_R = c_n R, A_K = c_n |Ktilde|^2, A_tau = b_n tau^2,
A_e1 = 2 c_n eps1, A_e2 = 2 c_n eps2, A_e3 = 2 c_n eps3, and the
exponents are pK = -(3n-2)/(n-2), pT = (n+2)/(n-2), p3 = (n-6)/(n-2);
G is an optional manufactured-solution source. Each sweep solves

    (Delta - a) phi_{k+1} = h(phi_k) - G - a phi_k

with Dirichlet value u, where the shift a makes phi -> h(phi) - a phi
non-increasing on the bracket [l, m], so the discrete maximum principle
squeezes the iterates monotonically between the barriers.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import BracketingError, NonConvergenceError, PreconditionError

A_FLOOR = 1e-8
SHIFT_SAFETY = 1.1


@dataclass(frozen=True)
class LichnerowiczProblem:
    """Coefficient fields, bracket and boundary data on one domain.

    Coefficient arrays live on the operator's (sub-)grid. ``source`` is
    the optional manufactured forcing G.
    """

    operator: object                 # scalar DiscreteOperator (unshifted)
    constants: object                # ConformalConstants
    A_R: np.ndarray
    A_K: np.ndarray
    A_tau: np.ndarray
    A_e1: np.ndarray
    A_e2: np.ndarray
    A_e3: np.ndarray
    bracket: tuple                   # (l, m), 0 < l <= m
    bc_u: np.ndarray                 # Dirichlet boundary value field
    source: np.ndarray = None

    def __post_init__(self):
        l, m = self.bracket
        if not (0 < l <= m):
            raise PreconditionError(f"invalid bracket [{l}, {m}]")
        for name in ("A_K", "A_e1", "A_e2", "A_e3"):
            if np.min(getattr(self, name)) < -1e-14:
                raise PreconditionError(f"{name} must be non-negative")

    def terms(self):
        """(coefficient, exponent, sign) triples of h, exact exponents."""
        n = self.constants.n
        pT = Fraction(n + 2, n - 2)
        pK = Fraction(-(3 * n - 2), n - 2)
        p3 = Fraction(n - 6, n - 2)
        return [
            (self.A_R, Fraction(1), +1),
            (self.A_K, pK, -1),
            (self.A_tau, pT, +1),
            (self.A_e1, pT, -1),
            (self.A_e2, Fraction(-3), -1),
            (self.A_e3, p3, -1),
        ]

    def h(self, phi):
        out = np.zeros_like(phi)
        for coeff, power, sign in self.terms():
            out = out + sign * coeff * phi ** float(power)
        return out

    def h_shifted(self, phi, a):
        return self.h(phi) - a * phi


def coefficients_from_data(data, constants, ktilde2, domain=None,
                           scalar_curv=None):
    """Build the six coefficient arrays from data, R and |Ktilde|^2."""
    cn = float(constants.c_n)
    bn = float(constants.b_n)

    def get(f):
        if domain is not None and not domain.is_full:
            return domain.extract(f)
        return f

    R = scalar_curv if scalar_curv is not None else 0.0
    tau = get(data.tau)
    return dict(
        A_R=cn * np.broadcast_to(R, tau.shape),
        A_K=cn * ktilde2,
        A_tau=bn * tau ** 2,
        A_e1=2 * cn * get(data.eps1),
        A_e2=2 * cn * get(data.eps2),
        A_e3=2 * cn * get(data.eps3),
    )


def shift_coefficient(problem, lo=None, hi=None):
    """Shift field a(x) dominating |h'| on the bracket.

    a = 1.1 * sum |coeff| * |power| * max(lo^{power-1}, hi^{power-1}),
    floored at 1e-8 so (Delta - a) stays invertible for vanishing
    coefficients. By default lo, hi are the scalar bracket ends; passing
    the barrier fields instead restricts the monotonicity requirement to
    each node's own interval [phi_minus(x), phi_plus(x)], which avoids
    the l^{power-1} blow-up of negative powers when min phi_minus is
    small while keeping the comparison argument nodewise valid.
    """
    l, m = problem.bracket
    lo = np.asarray(l if lo is None else lo, dtype=float)
    hi = np.asarray(m if hi is None else hi, dtype=float)
    a = np.zeros_like(problem.A_R)
    for coeff, power, _ in problem.terms():
        p = float(power)
        if p == 0.0:
            continue
        grow = np.maximum(lo ** (p - 1.0), hi ** (p - 1.0))
        a = a + np.abs(coeff) * abs(p) * grow
    return np.maximum(SHIFT_SAFETY * a, A_FLOOR)


def shifted_monotone_ok(problem, a, samples=7, lo=None, hi=None):
    """Sampled check that h(y) - a y is non-increasing on the bracket.

    With lo/hi fields the samples are nodewise geometric interpolants,
    matching a nodewise shift.
    """
    if lo is not None:
        ts = np.linspace(0.0, 1.0, samples)
        ys = [lo ** (1.0 - t) * hi ** t for t in ts]
    else:
        l, m = problem.bracket
        ys = np.geomspace(l, m, samples) if m > l else np.array([l])
    vals = [problem.h_shifted(y, a) for y in ys]
    for lo, hi in zip(vals, vals[1:]):
        if np.any(hi > lo + 1e-9 * (np.abs(lo) + 1.0)):
            return False
    return True


@dataclass
class PicardTrace:
    iterations: int = 0
    sup_diffs: list = field(default_factory=list)
    bracket_violations: list = field(default_factory=list)
    converged: bool = False

    @property
    def contraction(self):
        """Final ratio of successive sup-differences (< 1 on contraction)."""
        if len(self.sup_diffs) < 2 or self.sup_diffs[-2] == 0:
            return 0.0
        return self.sup_diffs[-1] / self.sup_diffs[-2]


def picard_solve(problem, phi_minus, phi_plus, tol=1e-8, max_iter=200,
                 start=None, linear_tol=1e-11, shift_mode="bracket",
                 callback=None):
    """Monotone Picard iteration bracketed by barriers.

    Starts from phi_minus by default (the monotone-from-below scheme);
    ``start`` overrides the initial iterate (the coupled exhaustion driver
    passes the midpoint). shift_mode "bracket" builds the shift from the
    scalar bracket ends, "barrier" from the barrier fields nodewise (used
    by the coupled drivers for conditioning). ``callback(k, phi)`` is
    invoked after every accepted sweep, for iterate diagnostics.
    Returns (phi, PicardTrace).
    """
    l, m = problem.bracket
    op = problem.operator
    eps_mp = 1e-8 * m
    if np.any(phi_minus > phi_plus + 1e-14):
        raise PreconditionError("phi_minus must not exceed phi_plus")
    if np.min(phi_minus) < l - eps_mp or np.max(phi_plus) > m + eps_mp:
        raise PreconditionError("barriers must lie within the bracket")
    bmask = op.chart.boundary_mask()
    if bmask.any():
        u_b = problem.bc_u[bmask]
        if np.any(u_b > phi_plus[bmask] + eps_mp) \
                or np.any(u_b < phi_minus[bmask] - eps_mp):
            raise PreconditionError(
                "boundary value u outside the barrier bracket")
    if shift_mode == "barrier":
        lo, hi = np.maximum(phi_minus, 1e-300), phi_plus
        a = shift_coefficient(problem, lo=lo, hi=hi)
        mono = shifted_monotone_ok(problem, a, lo=lo, hi=hi)
    else:
        a = shift_coefficient(problem)
        mono = shifted_monotone_ok(problem, a)
    if not mono:
        raise PreconditionError("shifted nonlinearity not non-increasing; "
                                "bracket or coefficients inconsistent")
    op_a = op.shifted(a)
    phi = phi_minus.copy() if start is None else start.copy()
    if bmask.any():
        phi[bmask] = problem.bc_u[bmask]
    trace = PicardTrace()
    src = problem.source
    from .operators import solve_linear
    for k in range(1, max_iter + 1):
        rhs = problem.h_shifted(phi, a)
        if src is not None:
            rhs = rhs - src
        phi_new, _ = solve_linear(op_a, rhs, tol=linear_tol,
                                  boundary=problem.bc_u)
        viol = max(0.0,
                   float((phi_minus - phi_new).max()),
                   float((phi_new - phi_plus).max()))
        sup = float(np.abs(phi_new - phi).max())
        trace.iterations = k
        trace.sup_diffs.append(sup)
        trace.bracket_violations.append(viol)
        if viol > eps_mp:
            gap = np.maximum(phi_minus - phi_new, phi_new - phi_plus)
            node = tuple(int(i) for i in
                         np.unravel_index(np.argmax(gap), gap.shape))
            raise BracketingError(
                f"bracketing violated by {viol:.3e} at node {node} "
                f"(iterate {k})", node=node, iterate=k, trace=trace)
        phi = phi_new
        if callback is not None:
            callback(k, phi)
        if sup <= tol:
            trace.converged = True
            return phi, trace
    raise NonConvergenceError(
        f"Picard iteration did not converge in {max_iter} sweeps "
        f"(last sup-difference {trace.sup_diffs[-1]:.3e})", trace=trace)
