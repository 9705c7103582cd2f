"""Barrier construction, certification, and hypothesis checking.

Two construction routes for the subsolution: the linear nonvacuum route
(auxiliary solve (Delta - a) u = -Lambda_minus driven by the matter
sources) and the Yamabe route (positive solution of Delta u + a u
- b u^sigma = 0 rescaled below 1). The supersolution always comes from
(Delta - a) v = -a, phi_plus = 1 + v, with the cap of the comparison
lemma checked after every solve.

Certification evaluates H(phi) = Delta phi - h(phi) with a worst-case or
a posteriori bound for |Ktilde|^2 and records the sign margins.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .conformal_data import ConformalConstants
from .errors import (HypothesisError, PreconditionError, RouteError,
                     VacuumError)
from .geometry import tensor_norm2, vector_norm2
from .lichnerowicz import (LichnerowiczProblem, coefficients_from_data,
                           picard_solve)
from .momentum import covector_l2
from .operators import (assemble_laplace_beltrami, full_domain,
                        scalar_lp_norm, solve_linear)
from .spectral import lambda1_schrodinger

CAP_SLACK = 1e-8


@dataclass
class BarrierPair:
    phi_minus: np.ndarray
    phi_plus: np.ndarray
    l: float
    m: float
    route: str
    cap_c: float                  # the constant c of the comparison lemma
    margin_minus: float = math.nan
    margin_plus: float = math.nan
    ktilde2_bound: float = math.nan
    certified: bool = False
    mode: str = ""

    def validate(self):
        if np.any(self.phi_minus > self.phi_plus + 1e-12):
            raise PreconditionError("phi_minus exceeds phi_plus")
        if self.phi_minus.min() <= 0:
            raise PreconditionError("phi_minus must be strictly positive")


def barrier_linear_solve(operator, a, lam, c_bc, tol=1e-11):
    """Solve (Delta - a) u = -lam with boundary value c_bc; check the cap.

    Returns (u, cap) where cap = max(sup lam/a, c_bc) bounds u from above
    (comparison lemma for the shifted operator).
    """
    a = np.asarray(a, dtype=float)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), a.shape)
    if a.min() <= 0:
        node = tuple(int(i) for i in
                     np.unravel_index(np.argmin(a), a.shape))
        raise HypothesisError(f"shift a must be positive, fails at {node}")
    op_a = operator.shifted(a)
    bc = np.full(a.shape, float(c_bc))
    u, _ = solve_linear(op_a, -lam, tol=tol, boundary=bc)
    cap = max(float((lam / a).max()), float(c_bc))
    over = float(u.max()) - cap
    if over > CAP_SLACK:
        raise PreconditionError(
            f"barrier cap violated by {over:.3e} (expected u <= {cap})")
    return u, cap


def build_supersolution(metric, data, constants, operator=None,
                        scalar_curv=None, c_plus=0.0):
    """phi_plus = 1 + v with (Delta - a) v = -a, v = c_plus on the boundary.

    a = c_n R + b_n tau^2 must be positive nodewise (the a_0 > 0
    hypothesis); the comparison-lemma cap gives
    phi_plus <= 1 + max(1, c_plus).
    """
    if operator is None:
        operator = assemble_laplace_beltrami(metric)
    cn, bn = float(constants.c_n), float(constants.b_n)
    R = scalar_curv if scalar_curv is not None else np.zeros(data.tau.shape)
    a = cn * R + bn * data.tau ** 2
    if a.min() <= 0:
        node = tuple(int(i) for i in
                     np.unravel_index(np.argmin(a), a.shape))
        raise HypothesisError(
            f"a0 = min(c_n R + b_n tau^2) <= 0 at node {node}")
    v, cap = barrier_linear_solve(operator, a, a, c_plus)
    phi_plus = 1.0 + np.clip(v, 0.0, None)
    return phi_plus, max(cap, 1.0)


def build_subsolution_nonvacuum(metric, data, constants, phi_plus,
                                operator=None, scalar_curv=None,
                                c_minus=1.0):
    """Subsolution from the matter sources: phi_minus = alpha u.

    u solves (Delta - a) u = -Lambda_minus with boundary value c_minus > 0
    (a zero boundary value would make min phi_minus = 0 and break strict
    positivity; the sign argument needs only phi_minus <= 1, enforced by
    the alpha cap, so a boundary value of order one is both valid and
    keeps the bracket well conditioned). Lambda_minus = (eps2 + eps3)/2
    for n <= 6, eps2/2 above; alpha is capped by 1/sup u and by the sign
    condition 2 c_n (eps2 + eps3) >= alpha Lambda_minus.
    """
    if operator is None:
        operator = assemble_laplace_beltrami(metric)
    n = constants.n
    cn, bn = float(constants.c_n), float(constants.b_n)
    eps_sum = data.eps2 + data.eps3
    if n <= 6:
        lam = 0.5 * eps_sum
        positive = eps_sum.min() > 0
    else:
        lam = 0.5 * data.eps2
        positive = data.eps2.min() > 0
    if not positive:
        raise VacuumError(
            "source positivity fails (eps2+eps3 for n<=6, eps2 for n>6); "
            "use the Yamabe subsolution route")
    R = scalar_curv if scalar_curv is not None else np.zeros(data.tau.shape)
    a = cn * R + bn * data.tau ** 2
    if a.min() <= 0:
        node = tuple(int(i) for i in
                     np.unravel_index(np.argmin(a), a.shape))
        raise HypothesisError(f"a0 <= 0 at node {node}")
    u, _ = barrier_linear_solve(operator, a, lam, c_minus)
    if u.min() <= 0:
        raise PreconditionError("auxiliary subsolution u lost positivity")
    alpha_sign = float((2 * cn * eps_sum / lam).min())
    alpha = 0.99 * min(1.0 / float(u.max()), alpha_sign)
    phi_minus = alpha * u
    phi_minus = np.minimum(phi_minus, np.minimum(1.0, phi_plus))
    if phi_minus.min() <= 0:
        raise PreconditionError("built subsolution not strictly positive")
    return phi_minus


def build_subsolution_yamabe(metric, data, constants, choice="R_tau",
                             operator=None, scalar_curv=None,
                             tau_zero_tol=1e-10, tol=1e-10):
    """Subsolution from the Yamabe-type equation Delta u + a u = b u^sigma.

    choice R_tau: a = -c_n R, b = c_n r_n tau^2;
    choice eps3_tau: a = 2 c_n eps3 (requires R <= 0), same b.
    The auxiliary problem is solved on a Dirichlet box with boundary
    value 1, by the shifted Picard machinery started at the constant
    supersolution u_hi; phi_minus = kappa u with kappa <= 0.99.
    """
    if operator is None:
        operator = assemble_laplace_beltrami(metric)
    cn = float(constants.c_n)
    rn = float(constants.r_n)
    R = scalar_curv if scalar_curv is not None else np.zeros(data.tau.shape)
    if np.all(np.abs(data.tau) < tau_zero_tol):
        raise HypothesisError(
            "tau vanishes identically: B0 is the whole domain and the "
            "spectral sign conditions cannot both hold")
    if choice == "R_tau":
        a_aux = -cn * R
    elif choice == "eps3_tau":
        if R.max() > 1e-12:
            raise RouteError("eps3_tau choice requires R <= 0")
        a_aux = 2 * cn * data.eps3
    else:
        raise PreconditionError(f"unknown Yamabe choice {choice!r}")
    b = cn * rn * data.tau ** 2
    sigma = float(constants.p_tau)
    bc = np.ones_like(b)
    # constant supersolution: a y - b y^sigma <= 0 nodewise and y >= bc
    pos = b > 0
    if np.any((a_aux > 0) & ~pos):
        raise RouteError(
            "no constant auxiliary supersolution: a > 0 where b = 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        need = np.where(pos, np.maximum(a_aux, 0.0) / np.where(pos, b, 1.0),
                        0.0)
    u_hi = max(1.0, float(need.max()) ** (1.0 / (sigma - 1.0))) * 1.001
    u_lo = 1e-6
    zeros = np.zeros_like(b)
    prob = LichnerowiczProblem(
        operator=operator, constants=constants,
        A_R=-a_aux, A_K=zeros, A_tau=b, A_e1=zeros, A_e2=zeros,
        A_e3=zeros, bracket=(u_lo, u_hi), bc_u=bc)
    u, _ = picard_solve(prob, np.full(b.shape, u_lo),
                        np.full(b.shape, u_hi), tol=tol,
                        start=np.full(b.shape, u_hi))
    if u.min() <= 0:
        raise RouteError("Yamabe auxiliary solution lost positivity")
    kappa = 0.99 * min(1.0, 1.0 / float(u.max()))
    return kappa * u


def make_barriers(metric, data, constants, route="linear_nonvacuum",
                  operator=None, scalar_curv=None, yamabe_choice="R_tau"):
    """Build a BarrierPair via the requested route (uncertified)."""
    if operator is None:
        operator = assemble_laplace_beltrami(metric)
    phi_plus, cap = build_supersolution(metric, data, constants,
                                        operator=operator,
                                        scalar_curv=scalar_curv)
    if route == "linear_nonvacuum":
        phi_minus = build_subsolution_nonvacuum(
            metric, data, constants, phi_plus, operator=operator,
            scalar_curv=scalar_curv)
    elif route == "yamabe":
        phi_minus = build_subsolution_yamabe(
            metric, data, constants, choice=yamabe_choice,
            operator=operator, scalar_curv=scalar_curv)
        phi_minus = np.minimum(phi_minus, phi_plus)
    else:
        raise PreconditionError(f"unknown barrier route {route!r}")
    pair = BarrierPair(
        phi_minus=phi_minus, phi_plus=phi_plus,
        l=float(phi_minus.min()), m=float(phi_plus.max()),
        route=route, cap_c=cap)
    pair.validate()
    return pair


def lichnerowicz_residual(operator, data, constants, phi, ktilde2,
                          scalar_curv=None, domain=None):
    """H(phi) = Delta phi - h(phi) on interior nodes (0 on the boundary)."""
    coeffs = coefficients_from_data(data, constants, ktilde2, domain=domain,
                                    scalar_curv=scalar_curv)
    prob = LichnerowiczProblem(
        operator=operator, constants=constants, bracket=(1e-10, 1e10),
        bc_u=np.ones_like(phi), **coeffs)
    lap = operator.apply(phi)
    interior = ~operator.chart.boundary_mask()
    out = np.zeros_like(phi)
    out[interior] = lap[interior] - prob.h(phi)[interior]
    return out, interior


def certify_barriers(pair, metric, data, constants, lam1_conf=None,
                     mode="worst_case", X=None, scalar_curv=None,
                     operator=None, C_cert=1.0, p_lebesgue=None):
    """Evaluate the sign margins of H on the barriers; update the pair.

    worst_case replaces |Ktilde|^2 in H(phi_plus) by the momentum-bound
    surrogate 2 (M_bound + |U|^2); posteriori uses the actual
    |L X + U|^2 of a computed momentum solution. Negative margins mean
    certification failure and are reported, not raised.
    """
    if operator is None:
        operator = assemble_laplace_beltrami(metric)
    u2 = tensor_norm2(metric, data.U)
    if mode == "worst_case":
        if lam1_conf is None or lam1_conf <= 0:
            raise PreconditionError(
                "worst_case certification needs lambda1_conf > 0")
        if p_lebesgue is None:
            p_lebesgue = 2 * constants.n
        c = pair.cap_c
        dom = full_domain(metric.chart)

        def mnorm(w):
            return max(covector_l2(metric, w),
                       _covector_lp(metric, w, p_lebesgue))

        p1 = float(constants.p_mom_tau)
        p2 = float(constants.p_mom_omega)
        m_bound = (C_cert / lam1_conf) * (
            mnorm(data.dtau) * (1.0 + c) ** p1
            + mnorm(data.omega1) * (1.0 + c) ** p2
            + mnorm(data.omega2))
        kt2_plus = 2.0 * (m_bound + u2)
        kt2_minus = np.zeros_like(u2)
    elif mode == "posteriori":
        if X is None:
            raise PreconditionError("posteriori certification needs X")
        from .operators import conformal_killing_operator
        lx = conformal_killing_operator(metric, X)
        kt2_plus = tensor_norm2(metric, lx + data.U)
        kt2_minus = kt2_plus
    else:
        raise PreconditionError(f"unknown certification mode {mode!r}")
    h_plus, interior = lichnerowicz_residual(
        operator, data, constants, pair.phi_plus, kt2_plus,
        scalar_curv=scalar_curv)
    h_minus, _ = lichnerowicz_residual(
        operator, data, constants, pair.phi_minus, kt2_minus,
        scalar_curv=scalar_curv)
    pair.margin_plus = -float(h_plus[interior].max())
    pair.margin_minus = float(h_minus[interior].min())
    pair.ktilde2_bound = float(np.max(kt2_plus))
    pair.mode = mode
    pair.certified = pair.margin_plus >= -1e-10 \
        and pair.margin_minus >= -1e-10
    return pair


def _covector_lp(metric, w, p):
    mag = np.sqrt(vector_norm2(metric, w))
    return scalar_lp_norm(metric, mag, p=p)


# ---------------------------------------------------------------------------
# hypothesis report


@dataclass
class HypothesisReport:
    a0: float
    lam1_conf: float
    eps_positive: bool
    smallness_lhs: np.ndarray = field(repr=False, default=None)
    min_C: float = math.inf
    violating_nodes: int = 0
    ricci_lower: float = math.nan
    ricci_ok: bool = False
    r_min: float = math.nan
    r_bound_ok: bool = False
    tau_outside_min: float = math.nan
    tau_outside_ok: bool = False
    lam_B0: float = math.nan
    lam_B0_ok: bool = False
    lam_M: float = math.nan
    lam_M_ok: bool = False

    def as_dict(self):
        return {
            "a0": self.a0, "lam1_conf": self.lam1_conf,
            "eps_positive": self.eps_positive, "min_C": self.min_C,
            "violating_nodes": self.violating_nodes,
            "ricci_lower": self.ricci_lower, "ricci_ok": self.ricci_ok,
            "r_min": self.r_min, "r_bound_ok": self.r_bound_ok,
            "tau_outside_min": self.tau_outside_min,
            "tau_outside_ok": self.tau_outside_ok,
            "lam_B0": self.lam_B0, "lam_B0_ok": self.lam_B0_ok,
            "lam_M": self.lam_M, "lam_M_ok": self.lam_M_ok,
        }


def smallness_field(metric, curv, data, constants, p_lebesgue=None):
    """LHS field of the smallness condition |R| + norms + |U| + eps."""
    if p_lebesgue is None:
        p_lebesgue = 2 * constants.n
    shape = data.tau.shape

    def mnorm(w):
        return max(covector_l2(metric, w),
                   _covector_lp(metric, w, p_lebesgue))

    lhs = np.abs(curv.scalar) if curv is not None else np.zeros(shape)
    lhs = lhs + mnorm(data.dtau) + mnorm(data.omega1) + mnorm(data.omega2)
    lhs = lhs + np.sqrt(tensor_norm2(metric, data.U))
    lhs = lhs + data.eps1 + data.eps2 + data.eps3
    return lhs


def min_smallness_constant(lhs, tau, tau_zero_tol=1e-10):
    """Smallest C with LHS <= C tau^2 nodewise; inf where tau vanishes."""
    zero = np.abs(tau) < tau_zero_tol
    n_violating = int(np.count_nonzero(zero & (lhs > 0)))
    if n_violating:
        return math.inf, n_violating
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(zero, 0.0, lhs / np.where(zero, 1.0, tau ** 2))
    return float(ratio.max()), 0


def check_hypotheses(metric, curv, data, constants, lam1_conf_est=None,
                     exhaustion=None, ricci_H=1.0, r_bound_A=1000.0,
                     tau_floor_B=1e-8, tau_zero_tol=1e-10,
                     p_lebesgue=None):
    """Evaluate the hypothesis sets of the existence theorems on the data."""
    cn, bn = float(constants.c_n), float(constants.b_n)
    R = curv.scalar if curv is not None else np.zeros(data.tau.shape)
    a0 = float((cn * R + bn * data.tau ** 2).min())
    n = constants.n
    eps_positive = bool((data.eps2 + data.eps3).min() > 0) if n <= 6 \
        else bool(data.eps2.min() > 0)
    lhs = smallness_field(metric, curv, data, constants,
                          p_lebesgue=p_lebesgue)
    min_c, viol = min_smallness_constant(lhs, data.tau, tau_zero_tol)

    # Yamabe-route geometric flags
    r2 = metric.chart.radius_field()
    ricci_lower = curv.ricci_lower_bound if curv is not None else 0.0
    ricci_floor = -(metric.chart.dim - 1) * ricci_H ** 2 \
        * float((1.0 + r2 ** 2).min())
    ricci_ok = ricci_lower >= ricci_floor - 1e-10
    r_min = float(R.min())
    r_bound_ok = r_min >= -r_bound_A
    if exhaustion is not None and exhaustion.level_count > 1:
        outside = ~exhaustion.interior_compact
        tau_outside = float(np.abs(data.tau[outside]).min()) \
            if outside.any() else math.inf
    else:
        tau_outside = float(np.abs(data.tau).min())
    tau_outside_ok = tau_outside >= tau_floor_B
    b0_mask = np.abs(data.tau) < tau_zero_tol
    est_b0 = lambda1_schrodinger(metric, cn * R, domain=b0_mask)
    est_m = lambda1_schrodinger(metric, cn * R)
    if lam1_conf_est is None:
        lam1_conf_est = math.nan
    return HypothesisReport(
        a0=a0, lam1_conf=lam1_conf_est, eps_positive=eps_positive,
        smallness_lhs=lhs, min_C=min_c, violating_nodes=viol,
        ricci_lower=ricci_lower, ricci_ok=ricci_ok,
        r_min=r_min, r_bound_ok=r_bound_ok,
        tau_outside_min=tau_outside, tau_outside_ok=tau_outside_ok,
        lam_B0=est_b0.lam, lam_B0_ok=est_b0.lam > 0,
        lam_M=est_m.lam, lam_M_ok=est_m.lam < 0)


def sweep_tau0(metric, curv, data, constants, tau_tilde, tau0_values,
               C_target, p_lebesgue=None, tau_zero_tol=1e-10):
    """Scan tau = tau0 + tau_tilde over tau0 values against C_target.

    Returns a list of (tau0, min_C, passes) rows; asserts the sampled
    min_C trend is nonincreasing (the 1/tau0^2 scaling of the smallness
    condition).
    """
    tau0_values = list(tau0_values)
    if not tau0_values:
        raise PreconditionError("empty tau0 range")
    rows = []
    prev = math.inf
    from .geometry import gradient_covector
    for t0 in tau0_values:
        tau = t0 + tau_tilde
        d2 = data.replace(tau=tau,
                          dtau=gradient_covector(metric.chart, tau))
        lhs = smallness_field(metric, curv, d2, constants,
                              p_lebesgue=p_lebesgue)
        min_c, _ = min_smallness_constant(lhs, tau, tau_zero_tol)
        if min_c > prev + 1e-9 * max(abs(prev), 1.0):
            raise PreconditionError(
                "min C not nonincreasing over the tau0 sweep; "
                "perturbation tau_tilde incompatible with the scan")
        prev = min_c
        rows.append((float(t0), min_c, bool(min_c <= C_target)))
    return rows
