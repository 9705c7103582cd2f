"""Momentum-constraint linear solve for the longitudinal field X.

Given a conformal factor phi, the vector equation

    Delta_conf X = (n-1)/n grad(tau) phi^{2n/(n-2)}
                   + omega1 phi^{2(n+1)/(n-2)} - omega2

is solved with Dirichlet data (zero by default), and the variational L^2
bound ||X|| <= ||RHS|| / lambda_1 is checked a posteriori.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, SpectralError
from .geometry import tensor_trace, vector_norm2
from .operators import (LinearSolveReport, conformal_killing_operator,
                        full_domain, lie_norm2_total, restrict_metric,
                        solve_linear, vector_inner_total)
from .spectral import lambda1_conf


@dataclass
class MomentumSolution:
    X: np.ndarray              # sub-grid covector field, boundary filled
    lie_X: np.ndarray          # (L X)_ij tensor field
    norm_X: float              # W-weighted L2 norm over interior
    norm_lie: float            # quadrature norm of L X
    report: LinearSolveReport
    bound_ok: bool
    bound_slack: float


def momentum_rhs(phi, data, constants, domain=None, forcing=None):
    """Right-hand side covector field of the momentum constraint."""
    if np.min(phi) <= 0:
        raise PreconditionError("phi must be positive for the momentum rhs")
    c = constants
    rn = float(c.r_n)
    p1 = float(c.p_mom_tau)
    p2 = float(c.p_mom_omega)
    dtau, om1, om2 = data.dtau, data.omega1, data.omega2
    if domain is not None and not domain.is_full:
        dtau = domain.extract(dtau)
        om1 = domain.extract(om1)
        om2 = domain.extract(om2)
    rhs = rn * dtau * (phi ** p1)[..., None] \
        + om1 * (phi ** p2)[..., None] - om2
    if forcing is not None:
        rhs = rhs + forcing
    return rhs


def covector_l2(metric, w_field, domain=None):
    """L^2 norm of a covector field with the metric inner product."""
    if domain is None:
        domain = full_domain(metric.chart)
    sub = restrict_metric(metric, domain)
    f = w_field
    if f.shape[:-1] != tuple(domain.chart.nodes):
        f = domain.extract(f)
    dens = vector_norm2(sub, f)
    return float(np.sqrt(np.sum(dens * sub.sqrt_det)
                         * domain.chart.cell_volume))


def solve_momentum(phi, data, metric, operator, constants, boundary_v=None,
                   tol=1e-10, lam1=None, bound_slack=1e-6, forcing=None):
    """Solve the momentum constraint on the operator's domain.

    Parameters
    ----------
    phi : sub-grid scalar field on the operator's domain
    operator : assembled conformal Killing Laplacian (vector block)
    boundary_v : Dirichlet covector data; zero when omitted
    lam1 : known lambda_1 of -Delta_conf; computed on demand when the
        a posteriori bound is to be checked and no value is supplied
    """
    dom = operator.domain
    rhs = momentum_rhs(phi, data, constants, domain=dom, forcing=forcing)
    X, report = solve_linear(operator, rhs, tol=tol, boundary=boundary_v)
    sub_metric = restrict_metric(metric, dom)
    lx = conformal_killing_operator(sub_metric, X)
    tr = tensor_trace(sub_metric, lx)
    if np.abs(tr).max() > 1e-10 * max(np.abs(lx).max(), 1.0):
        raise PreconditionError("trace of L X above tolerance")
    norm_x = float(np.sqrt(max(vector_inner_total(operator, X, X), 0.0)))
    norm_lie = float(np.sqrt(lie_norm2_total(sub_metric, lx)))
    bound_ok = True
    slack = 0.0
    zero_bc = boundary_v is None or not np.any(boundary_v)
    if zero_bc:
        if lam1 is None:
            lam1 = lambda1_conf(metric, domain=dom).lam
        if lam1 <= 0:
            raise SpectralError(
                f"conformal Killing Laplacian near singular (lambda1={lam1})")
        rhs_norm = covector_l2(metric, rhs, domain=dom)
        cap = rhs_norm / lam1 * (1.0 + bound_slack)
        bound_ok = norm_x <= cap + 1e-14
        slack = norm_x - rhs_norm / lam1
    return MomentumSolution(X=X, lie_X=lx, norm_X=norm_x, norm_lie=norm_lie,
                            report=report, bound_ok=bound_ok,
                            bound_slack=slack)
