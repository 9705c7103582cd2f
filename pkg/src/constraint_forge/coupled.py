"""Outer drivers alternating the momentum and Lichnerowicz solves.

Three modes: a fixed compact box, an increasing exhaustion of boxes
(each level is a Dirichlet sub-chart, the solution is extended by the
barrier midpoint outside), and the electromagnetically coupled system,
which adds a triangular potential solve Delta f = qtilde phi^{2n/(n-2)}
feeding the charge terms of the other two equations.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError, PreconditionError, SolverError
from .geometry import gradient_covector, tensor_norm2
from .lichnerowicz import (LichnerowiczProblem, coefficients_from_data,
                           picard_solve)
from .momentum import solve_momentum
from .operators import (assemble_conformal_killing_laplacian,
                        assemble_laplace_beltrami, box_domain, full_domain,
                        restrict_metric, solve_linear)
from .spectral import lambda1_conf

DECOUPLE_TOL = 1e-10


@dataclass
class LevelRecord:
    level: int
    phi: np.ndarray
    X: np.ndarray
    f: np.ndarray = None
    picard_trace: object = None
    momentum_report: object = None
    outer_iterations: int = 0


@dataclass
class SolveSession:
    mode: str
    records: list = field(default_factory=list)
    outer_residuals: list = field(default_factory=list)
    h2_residuals: list = field(default_factory=list)
    cauchy_diffs: list = field(default_factory=list)
    momentum_norms: list = field(default_factory=list)
    converged: bool = False

    @property
    def phi(self):
        return self.records[-1].phi if self.records else None

    @property
    def X(self):
        return self.records[-1].X if self.records else None

    @property
    def f(self):
        return self.records[-1].f if self.records else None

    def contraction(self, start=3):
        """Largest ratio of successive outer residuals from iterate start."""
        r = self.outer_residuals
        ratios = [r[k + 1] / r[k] for k in range(start - 1, len(r) - 1)
                  if r[k] > 0]
        return max(ratios) if ratios else 0.0


def _restrict(field_, dom):
    if dom.is_full:
        return field_
    return dom.extract(field_)


def _check_barriers(barriers, require_certified):
    if barriers is None:
        raise PreconditionError("coupled solve requires a barrier pair")
    barriers.validate()
    if require_certified and not barriers.certified:
        raise PreconditionError(
            "barrier pair not certified; run certify_barriers first or "
            "pass require_certified=False")


def _outer_loop(metric, data, barriers, constants, dom, tol, max_outer,
                session, scalar_curv=None, phi0=None, bc_u=None,
                em_update=None, forcing_phi=None, forcing_X=None,
                level=1, picard_tol=None):
    """Alternate momentum and Lichnerowicz solves on one (sub-)domain.

    em_update, when given, is called with the current phi and returns
    (f, data) with the charge-dependent source fields refreshed; the
    returned data is used for both inner solves of that sweep.
    """
    sub_metric = restrict_metric(metric, dom)
    lap = assemble_laplace_beltrami(metric, domain=dom)
    ckl = assemble_conformal_killing_laplacian(metric, domain=dom)
    lam1 = lambda1_conf(metric, domain=dom).lam
    pm = _restrict(barriers.phi_minus, dom)
    pp = _restrict(barriers.phi_plus, dom)
    R = _restrict(scalar_curv, dom) if scalar_curv is not None else None
    U_sub = _restrict(data.U, dom)
    if bc_u is None:
        bc_u = _restrict(data.bc_u, dom)
    eps_mp = 1e-8 * barriers.m
    if picard_tol is None:
        picard_tol = 0.1 * tol
    phi = pm.copy() if phi0 is None else phi0.copy()
    bmask = dom.chart.boundary_mask()
    phi[bmask] = bc_u[bmask]
    decoupled = em_update is None and forcing_X is None \
        and np.abs(data.dtau).max() == 0.0 \
        and np.abs(data.omega1).max() == 0.0
    X_prev = None
    f = None
    cur = data
    if max_outer <= 0:
        session.records.append(LevelRecord(level=level, phi=phi,
                                           X=None, outer_iterations=0))
        raise NonConvergenceError(
            "outer iteration budget exhausted before the first sweep",
            session=session)
    rec = None
    for j in range(1, max_outer + 1):
        if em_update is not None:
            f, cur = em_update(phi)
        bc_v = _restrict(cur.bc_v, dom)
        ms = solve_momentum(phi, cur, metric, ckl, constants,
                            boundary_v=bc_v if np.any(bc_v) else None,
                            tol=0.01 * picard_tol, lam1=lam1,
                            forcing=forcing_X)
        if decoupled and X_prev is not None:
            drift = float(np.abs(ms.X - X_prev).max())
            if drift > DECOUPLE_TOL * (1.0 + np.abs(ms.X).max()):
                raise SolverError(
                    "decoupled data produced a phi-dependent momentum "
                    f"solution (drift {drift:.3e})")
        kt2 = tensor_norm2(sub_metric, ms.lie_X + _restrict(cur.U, dom))
        coeffs = coefficients_from_data(cur, constants, kt2, domain=dom,
                                        scalar_curv=R)
        prob = LichnerowiczProblem(
            operator=lap, constants=constants,
            bracket=(barriers.l, barriers.m), bc_u=bc_u,
            source=forcing_phi, **coeffs)
        phi_new, trace = picard_solve(prob, pm, pp, tol=picard_tol,
                                      max_iter=5000, start=phi,
                                      shift_mode="barrier")
        d_phi = float(np.abs(phi_new - phi).max())
        d_x = 0.0 if X_prev is None else float(np.abs(ms.X - X_prev).max())
        res = d_phi + (d_x if X_prev is not None else np.abs(ms.X).max())
        h2 = float(np.abs(lap.apply(phi_new - phi)).max())
        session.outer_residuals.append(res)
        session.h2_residuals.append(h2)
        session.momentum_norms.append(ms.norm_X)
        if not np.isfinite(res):
            raise SolverError("outer residual became non-finite",
                              residual=res)
        rec = LevelRecord(level=level, phi=phi_new, X=ms.X, f=f,
                          picard_trace=trace, momentum_report=ms.report,
                          outer_iterations=j)
        phi, X_prev = phi_new, ms.X
        if np.min(phi) < pm.min() - eps_mp or np.max(phi) > pp.max() + eps_mp:
            raise SolverError("outer iterate escaped the barrier bracket")
        if j >= 2 and res <= tol:
            session.records.append(rec)
            return rec
    session.records.append(rec)
    raise NonConvergenceError(
        f"coupled outer iteration did not reach tol={tol} in "
        f"{max_outer} sweeps (last residual "
        f"{session.outer_residuals[-1]:.3e})", session=session)


def solve_coupled_compact(metric, data, barriers, constants, tol=1e-8,
                          max_outer=60, scalar_curv=None, domain=None,
                          require_certified=True, forcing_phi=None,
                          forcing_X=None, picard_tol=None):
    """Alternating solve of the coupled system on a fixed compact box."""
    _check_barriers(barriers, require_certified)
    dom = domain if domain is not None else full_domain(metric.chart)
    session = SolveSession(mode="compact")
    _outer_loop(metric, data, barriers, constants, dom, tol, max_outer,
                session, scalar_curv=scalar_curv, forcing_phi=forcing_phi,
                forcing_X=forcing_X, picard_tol=picard_tol)
    session.converged = True
    return session


def solve_coupled_exhaustion(metric, exhaustion, data, barriers, constants,
                             tol=1e-8, max_outer=60, scalar_curv=None,
                             require_certified=True, picard_tol=None):
    """Solve level by level over an increasing family of boxes.

    Each level gets Dirichlet value (phi_plus + phi_minus)/2 on its
    boundary; the converged level solution is extended by the same
    midpoint outside the level box, and the sup-differences of the
    extended fields over the innermost box are the reported Cauchy
    diagnostics.
    """
    _check_barriers(barriers, require_certified)
    chart = metric.chart
    midpoint = 0.5 * (barriers.phi_plus + barriers.phi_minus)
    session = SolveSession(mode="exhaustion")
    core = exhaustion.interior_compact
    prev_global = None
    for k, mask in enumerate(exhaustion.levels, start=1):
        dom = box_domain(chart, mask)
        bc_u = _restrict(midpoint, dom)
        phi0 = _restrict(midpoint, dom)
        try:
            rec = _outer_loop(metric, data, barriers, constants, dom, tol,
                              max_outer, session, scalar_curv=scalar_curv,
                              phi0=phi0, bc_u=bc_u, level=k,
                              picard_tol=picard_tol)
        except (NonConvergenceError, SolverError) as exc:
            raise type(exc)(f"level {k}: {exc}", **_carry(exc)) from exc
        phi_global = midpoint.copy()
        dom.embed(rec.phi, phi_global)
        if prev_global is not None:
            session.cauchy_diffs.append(
                float(np.abs(phi_global - prev_global)[core].max()))
        prev_global = phi_global
    session.converged = True
    return session


def _carry(exc):
    kw = {}
    if getattr(exc, "session", None) is not None:
        kw["session"] = exc.session
    if getattr(exc, "trace", None) is not None:
        kw["trace"] = exc.trace
    return kw


def solve_coupled_em(metric, data, barriers, constants, tol=1e-8,
                     max_outer=60, scalar_curv=None, domain=None,
                     require_certified=True, picard_tol=None,
                     forcing_phi=None, forcing_X=None, forcing_f=None):
    """Coupled solve with the electromagnetic potential equation.

    Per outer sweep, solve Delta f = qtilde phi^{2n/(n-2)} with the
    Dirichlet data w, form Etilde^k = grad^k f + V^k, and refresh
    eps2 = |Etilde|^2 / 2 and omega2_i = F_ik Etilde^k before the
    momentum and Lichnerowicz updates.
    """
    _check_barriers(barriers, require_certified)
    if data.em is None:
        raise PreconditionError("electromagnetic solve needs an em pack")
    dom = domain if domain is not None else full_domain(metric.chart)
    sub_metric = restrict_metric(metric, dom)
    lap = assemble_laplace_beltrami(metric, domain=dom)
    q = _restrict(data.em.q, dom)
    F = _restrict(data.em.F, dom)
    V = _restrict(data.em.V, dom)
    bc_w = _restrict(data.bc_w, dom) if data.bc_w is not None \
        else np.zeros(dom.chart.nodes)
    p1 = float(constants.p_mom_tau)
    ginv = sub_metric.inverse

    def em_update(phi):
        rhs_f = q * phi ** p1
        if forcing_f is not None:
            rhs_f = rhs_f + forcing_f
        f, _ = solve_linear(lap, rhs_f, tol=1e-12, boundary=bc_w)
        df = gradient_covector(dom.chart, f)
        e_up = np.einsum("...ka,...a->...k", ginv, df) + V
        eps2 = 0.5 * np.einsum("...ab,...a,...b->...",
                               sub_metric.gamma, e_up, e_up)
        omega2 = np.einsum("...ik,...k->...i", F, e_up)
        return f, data.replace(eps2=_pad(eps2, dom, data.eps2),
                               omega2=_pad(omega2, dom, data.omega2))

    session = SolveSession(mode="em")
    _outer_loop(metric, data, barriers, constants, dom, tol, max_outer,
                session, scalar_curv=scalar_curv, em_update=em_update,
                forcing_phi=forcing_phi, forcing_X=forcing_X,
                picard_tol=picard_tol)
    session.converged = True
    return session


def _pad(sub_field, dom, like):
    """Embed a sub-domain field into a full-grid field shaped like."""
    if dom.is_full:
        return sub_field
    out = np.zeros_like(like)
    dom.embed(sub_field, out)
    return out
