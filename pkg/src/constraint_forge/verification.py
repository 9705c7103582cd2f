"""Physical-data reconstruction, constraint residuals, manufactured
solutions, and convergence studies.

The residual check rebuilds the physical metric g = phi^{4/(n-2)} gamma
and all of its curvature quantities directly from g (no conformal
shortcut), so agreement with the constraint equations is an independent
test of the solve. Manufactured forcings are produced symbolically with
sympy and evaluated on the grid, so recovery errors show the pure
discretization order.
"""

import math
from dataclasses import dataclass

import numpy as np
import sympy as sp

from .errors import PreconditionError
from .expressions import to_sympy
from .geometry import (christoffels, covector_divergence, curvature,
                       gradient_covector, metric_from_arrays,
                       tensor_divergence, tensor_norm2, tensor_trace)
from .operators import scalar_lp_norm

CORE_MARGIN = 2


@dataclass
class InitialDataSet:
    metric_g: object               # MetricField of the physical metric
    K: np.ndarray                  # extrinsic curvature, lower indices
    phi: np.ndarray
    X: np.ndarray
    base_metric: object            # gamma
    f: np.ndarray = None
    E_tilde: np.ndarray = None     # Etilde^k = grad^k f + V^k (gamma-raised)
    F: np.ndarray = None
    trace_defect: float = 0.0      # max |tr_g K - tau|


def reconstruct(phi, X, data, metric, constants, f=None):
    """Physical pair (g, K) from a conformal solve.

    g = phi^{4/(n-2)} gamma and
    K = phi^{-2} (L X + U) + (tau/n) g; with an em pack and a potential f
    the field Etilde = grad f + V is attached. Requires the chart
    dimension to equal the constants' n (the split's trace identity
    tr_g K = tau holds only there).
    """
    from .operators import conformal_killing_operator
    n = constants.n
    chart = metric.chart
    if chart.dim != n:
        raise PreconditionError(
            f"reconstruction needs chart dimension {n}, got {chart.dim}")
    if np.min(phi) <= 0:
        raise PreconditionError("phi must be strictly positive")
    p_phi = float(constants.p_phi)
    g = (phi ** p_phi)[..., None, None] * metric.gamma
    lx = conformal_killing_operator(metric, X)
    K = (phi ** -2)[..., None, None] * (lx + data.U) \
        + (data.tau / n)[..., None, None] * g
    metric_g = metric_from_arrays(chart, g)
    tr = np.einsum("...ij,...ij->...", metric_g.inverse, K)
    defect = float(np.abs(tr - data.tau).max())
    e_tilde = None
    if f is not None and data.em is not None:
        df = gradient_covector(chart, f)
        e_tilde = np.einsum("...ka,...a->...k", metric.inverse, df) \
            + data.em.V
    return InitialDataSet(metric_g=metric_g, K=K, phi=phi, X=X,
                          base_metric=metric, f=f, E_tilde=e_tilde,
                          F=data.em.F if data.em is not None else None,
                          trace_defect=defect)


@dataclass
class ResidualReport:
    """Residual fields plus norms.

    The reported L-inf and core L2 norms are taken over the interior
    core (two nodes in from any Dirichlet face): boundary nodes carry
    prescribed data rather than equations, and only in the core are all
    stencils of the twice-differentiated curvature terms centered. The
    *_full norms cover every node for reference.
    """

    hamiltonian: np.ndarray
    momentum: np.ndarray           # covector field
    em: np.ndarray = None
    ham_linf: float = 0.0
    ham_l2: float = 0.0
    mom_linf: float = 0.0
    mom_l2: float = 0.0
    em_linf: float = 0.0
    ham_linf_full: float = 0.0
    mom_linf_full: float = 0.0
    ham_l2_core: float = 0.0
    mom_l2_core: float = 0.0
    order: dict = None             # filled by convergence_study

    def norms(self):
        out = {"ham_linf": self.ham_linf, "ham_l2": self.ham_l2,
               "mom_linf": self.mom_linf, "mom_l2": self.mom_l2,
               "ham_l2_core": self.ham_l2_core,
               "mom_l2_core": self.mom_l2_core}
        if self.em is not None:
            out["em_linf"] = self.em_linf
        return out


def _core_slice(chart, margin=CORE_MARGIN):
    sl = []
    for ax, nn in enumerate(chart.nodes):
        if chart.bcs[ax] == "periodic":
            sl.append(slice(None))
        else:
            m = min(margin, (nn - 1) // 2)
            sl.append(slice(m, nn - m))
    return tuple(sl)


def constraint_residuals(ids, data, constants, cosmological=0.0):
    """Evaluate the physical constraint equations on reconstructed data.

    Hamiltonian: R_g + tau^2 - |K|^2_g - 2 eps - 2 Lambda.
    Momentum:    div_g K - d tau - J, with the momentum density
    J = phi^{-2n/(n-2)} (omega1 phi^{2(n+1)/(n-2)} - omega2 + div_gamma U)
    so that exact conformal solutions have zero residual identically.
    Optional Maxwell: div_g(phi^{-2n/(n-2)} Etilde) - rho with
    rho = qtilde + phi^{-2n/(n-2)} div_gamma V.
    """
    g = ids.metric_g
    base = ids.base_metric
    chart = g.chart
    n = constants.n
    phi = ids.phi
    curv_g = curvature(g)
    k2 = tensor_norm2(g, ids.K)
    p_e2 = -4.0 * (n - 1) / (n - 2)
    p_e3 = -8.0 / (n - 2)
    eps_phys = data.eps1 + data.eps2 * phi ** p_e2 + data.eps3 * phi ** p_e3
    ham = curv_g.scalar + data.tau ** 2 - k2 - 2.0 * eps_phys \
        - 2.0 * cosmological

    gam_base = christoffels(base)
    div_u = tensor_divergence(base, gam_base, data.U)
    p_vol = -2.0 * n / (n - 2)
    p2 = float(constants.p_mom_omega)
    J = (phi ** p_vol)[..., None] * (
        data.omega1 * (phi ** p2)[..., None] - data.omega2 + div_u)
    div_k = tensor_divergence(g, curv_g.christoffel, ids.K)
    mom = div_k - data.dtau - J

    em_res = None
    if ids.E_tilde is not None:
        e_low_g = np.einsum("...ij,...j->...i",
                            g.gamma, (phi ** p_vol)[..., None] * ids.E_tilde)
        div_e = covector_divergence(g, curv_g.christoffel, e_low_g)
        v_low = np.einsum("...ij,...j->...i", base.gamma, data.em.V)
        div_v = covector_divergence(base, gam_base, v_low)
        rho = data.em.q + phi ** p_vol * div_v
        em_res = div_e - rho

    core = _core_slice(chart)
    mom_mag = np.sqrt(np.einsum("...ij,...i,...j->...",
                                g.inverse, mom, mom))
    return ResidualReport(
        hamiltonian=ham, momentum=mom, em=em_res,
        ham_linf=float(np.abs(ham[core]).max()),
        ham_l2=scalar_lp_norm(g, ham, p=2),
        mom_linf=float(mom_mag[core].max()),
        mom_l2=scalar_lp_norm(g, mom_mag, p=2),
        em_linf=float(np.abs(em_res[core]).max())
        if em_res is not None else 0.0,
        ham_linf_full=float(np.abs(ham).max()),
        mom_linf_full=float(mom_mag.max()),
        ham_l2_core=float(np.sqrt(np.mean(ham[core] ** 2))),
        mom_l2_core=float(np.sqrt(np.mean(mom_mag[core] ** 2))))


# ---------------------------------------------------------------------------
# symbolic geometry for manufactured solutions


class SymbolicGeometry:
    """Continuum differential geometry of a chart metric, via sympy."""

    def __init__(self, dim, metric_config=None):
        self.dim = dim
        self.syms = sp.symbols(["x", "y", "z"][:dim])
        cfg = metric_config or {"kind": "flat"}
        kind = cfg.get("kind", "flat")
        if kind == "flat":
            g = sp.eye(dim)
        elif kind == "conformally_flat":
            psi = self._lift(cfg["psi"])
            g = psi ** sp.Rational(4, dim - 2) * sp.eye(dim)
        elif kind == "custom":
            g = sp.Matrix([[self._lift(c) for c in row]
                           for row in cfg["components"]])
            g = (g + g.T) / 2
        else:
            raise PreconditionError(f"unknown metric kind {kind!r}")
        self.g = sp.simplify(g)
        self.ginv = sp.simplify(self.g.inv())
        self.det = sp.simplify(self.g.det())
        self.sqrt_det = sp.sqrt(self.det)
        d = dim
        self.gamma_sym = [[[sum((
            self.ginv[k, l] * (sp.diff(self.g[j, l], self.syms[i])
                               + sp.diff(self.g[i, l], self.syms[j])
                               - sp.diff(self.g[i, j], self.syms[l])) / 2
            for l in range(d)))
            for j in range(d)] for i in range(d)] for k in range(d)]

    def _lift(self, text):
        expr, _ = to_sympy(str(text), self.dim)
        return expr

    def scalar_curvature(self):
        d = self.dim
        s = self.syms
        gam = self.gamma_sym
        ric = []
        for i in range(d):
            row = []
            for j in range(d):
                term = sum(sp.diff(gam[k][i][j], s[k]) for k in range(d)) \
                    - sum(sp.diff(gam[k][i][k], s[j]) for k in range(d)) \
                    + sum(gam[k][k][l] * gam[l][i][j]
                          for k in range(d) for l in range(d)) \
                    - sum(gam[k][j][l] * gam[l][i][k]
                          for k in range(d) for l in range(d))
                row.append(term)
            ric.append(row)
        return sp.simplify(sum(self.ginv[i, j] * ric[i][j]
                               for i in range(d) for j in range(d)))

    def gradient(self, f):
        return [sp.diff(f, v) for v in self.syms]

    def laplacian(self, f):
        d = self.dim
        out = 0
        for i in range(d):
            flux = sum(self.ginv[i, j] * sp.diff(f, self.syms[j])
                       for j in range(d))
            out += sp.diff(self.sqrt_det * flux, self.syms[i])
        return out / self.sqrt_det

    def lie_conformal(self, X):
        """(L X)_ij for a covector X, trace-free part of the deformation."""
        d = self.dim
        s = self.syms
        gam = self.gamma_sym
        nabla = [[sp.diff(X[j], s[i])
                  - sum(gam[k][i][j] * X[k] for k in range(d))
                  for j in range(d)] for i in range(d)]
        div = sum(self.ginv[i, j] * nabla[i][j]
                  for i in range(d) for j in range(d))
        return sp.Matrix([[nabla[i][j] + nabla[j][i]
                           - sp.Rational(2, d) * self.g[i, j] * div
                           for j in range(d)] for i in range(d)])

    def tensor_divergence(self, S):
        """(div S)_j = nabla^i S_ij for a symmetric covariant 2-tensor."""
        d = self.dim
        s = self.syms
        gam = self.gamma_sym
        out = []
        for j in range(d):
            acc = 0
            for i in range(d):
                for k in range(d):
                    cov = sp.diff(S[k, j], s[i]) \
                        - sum(gam[l][i][k] * S[l, j] for l in range(d)) \
                        - sum(gam[l][i][j] * S[k, l] for l in range(d))
                    acc += self.ginv[i, k] * cov
            out.append(acc)
        return out

    def tensor_norm2(self, S):
        d = self.dim
        return sum(self.ginv[i, a] * self.ginv[j, b] * S[i, j] * S[a, b]
                   for i in range(d) for j in range(d)
                   for a in range(d) for b in range(d))

    def evaluate(self, expr, chart):
        fn = sp.lambdify(self.syms, expr, "numpy")
        vals = np.asarray(fn(*chart.coords()), dtype=float)
        return np.broadcast_to(vals, tuple(chart.nodes)).copy()


@dataclass
class MMSForcing:
    geo: SymbolicGeometry
    phi_star: object
    X_star: list
    f_star: object
    forcing_phi: object
    forcing_X: list
    forcing_f: object
    fields: dict                  # symbolic data fields actually used
    eps2_absorbed: object = None  # eps2 + G phi*^3 / (2 c_n)
    omega2_absorbed: list = None  # omega2 - forcing_X

    def evaluate(self, chart):
        """Grid arrays of targets and forcings for a given chart."""
        geo = self.geo
        out = {
            "phi_star": geo.evaluate(self.phi_star, chart),
            "forcing_phi": geo.evaluate(self.forcing_phi, chart),
            "X_star": np.stack([geo.evaluate(c, chart)
                                for c in self.X_star], axis=-1),
            "forcing_X": np.stack([geo.evaluate(c, chart)
                                   for c in self.forcing_X], axis=-1),
        }
        if self.f_star is not None:
            out["f_star"] = geo.evaluate(self.f_star, chart)
            out["forcing_f"] = geo.evaluate(self.forcing_f, chart)
        return out

    def evaluate_absorbed(self, chart):
        """Data field arrays with the forcings folded into the sources.

        With eps2 and omega2 replaced by these fields the targets are an
        exact continuum solution of the unforced system, so constraint
        residuals on them measure pure discretization error. The caller
        must check the returned eps2 is nonnegative (amplitude choice).
        """
        geo = self.geo
        f = self.fields
        out = {
            "tau": geo.evaluate(f["tau"], chart),
            "eps1": geo.evaluate(f["eps1"], chart),
            "eps2": geo.evaluate(self.eps2_absorbed, chart),
            "eps3": geo.evaluate(f["eps3"], chart),
            "omega1": np.stack([geo.evaluate(c, chart)
                                for c in f["omega1"]], axis=-1),
            "omega2": np.stack([geo.evaluate(c, chart)
                                for c in self.omega2_absorbed], axis=-1),
            "U": np.stack(
                [np.stack([geo.evaluate(f["U"][i, j], chart)
                           for j in range(geo.dim)], axis=-1)
                 for i in range(geo.dim)], axis=-2),
            "scalar_curvature": geo.evaluate(f["scalar_curvature"], chart),
        }
        return out


def mms_forcing(dim, constants, targets, metric_config=None,
                data_config=None):
    """Symbolic forcings making the targets exact continuum solutions.

    targets: {"phi": expr, "X": [exprs], optional "f": expr}. The data
    fields (tau, sources, U, em pack) are read from data_config as
    expressions; with an em pack and an f target the charge-derived
    eps2 and omega2 replace the configured ones, mirroring the coupled
    electromagnetic driver.
    """
    geo = SymbolicGeometry(dim, metric_config)
    cfg = dict(data_config or {})
    d = dim
    lift = geo._lift
    phi_s = lift(targets["phi"])
    X_s = [lift(c) for c in targets.get("X", ["0"] * d)]
    f_s = lift(targets["f"]) if "f" in targets else None

    tau = lift(cfg.get("tau", "0"))
    eps1 = lift(cfg.get("eps1", "0"))
    eps2 = lift(cfg.get("eps2", "0"))
    eps3 = lift(cfg.get("eps3", "0"))
    om1 = [lift(c) for c in cfg.get("omega1", ["0"] * d)]
    om2 = [lift(c) for c in cfg.get("omega2", ["0"] * d)]
    U = sp.Matrix([[lift(c) for c in row]
                   for row in cfg.get("u", [["0"] * d] * d)])
    U = (U + U.T) / 2

    forcing_f = None
    if f_s is not None:
        q = lift(cfg.get("em_q", "0"))
        V = [lift(c) for c in cfg.get("em_v", ["0"] * d)]
        Fem = sp.Matrix([[lift(c) for c in row]
                         for row in cfg.get("em_f", [["0"] * d] * d)])
        p1 = sp.Rational(constants.p_mom_tau.numerator,
                         constants.p_mom_tau.denominator)
        forcing_f = geo.laplacian(f_s) - q * phi_s ** p1
        e_up = [sum(geo.ginv[k, a] * sp.diff(f_s, geo.syms[a])
                    for a in range(d)) + V[k] for k in range(d)]
        eps2 = sum(geo.g[a, b] * e_up[a] * e_up[b]
                   for a in range(d) for b in range(d)) / 2
        om2 = [sum(Fem[i, k] * e_up[k] for k in range(d)) for i in range(d)]

    # Lichnerowicz forcing: the solver's equation is Delta phi = h - G
    cn = sp.Rational(constants.c_n.numerator, constants.c_n.denominator)
    bn = sp.Rational(constants.b_n.numerator, constants.b_n.denominator)
    rn = sp.Rational(constants.r_n.numerator, constants.r_n.denominator)
    n = constants.n

    def rat(fr):
        return sp.Rational(fr.numerator, fr.denominator)

    R = geo.scalar_curvature()
    lx = geo.lie_conformal(X_s)
    kt2 = geo.tensor_norm2(lx + U)
    pT = rat(constants.p_tau)
    pK = rat(constants.p_K)
    p3 = rat(constants.p_eps3)
    h = cn * R * phi_s - cn * kt2 * phi_s ** pK \
        + (bn * tau ** 2 - 2 * cn * eps1) * phi_s ** pT \
        - 2 * cn * eps2 * phi_s ** -3 - 2 * cn * eps3 * phi_s ** p3
    forcing_phi = h - geo.laplacian(phi_s)

    # momentum forcing: operator equation div(L X) = rhs + forcing
    p1 = rat(constants.p_mom_tau)
    p2 = rat(constants.p_mom_omega)
    div_lx = geo.tensor_divergence(lx)
    dtau = geo.gradient(tau)
    forcing_X = [div_lx[b] - (rn * dtau[b] * phi_s ** p1
                              + om1[b] * phi_s ** p2 - om2[b])
                 for b in range(d)]

    fields = dict(tau=tau, eps1=eps1, eps2=eps2, eps3=eps3, omega1=om1,
                  omega2=om2, U=U, scalar_curvature=R, ktilde2=kt2)
    eps2_abs = eps2 + forcing_phi * phi_s ** 3 / (2 * cn)
    om2_abs = [om2[b] - forcing_X[b] for b in range(d)]
    return MMSForcing(geo=geo, phi_star=phi_s, X_star=X_s, f_star=f_s,
                      forcing_phi=forcing_phi, forcing_X=forcing_X,
                      forcing_f=forcing_f, fields=fields,
                      eps2_absorbed=eps2_abs, omega2_absorbed=om2_abs)


def convergence_study(runner, resolutions):
    """Observed convergence orders from errors at successive resolutions.

    runner(resolution) returns a dict of error norms; the order per field
    uses the actual spacing ratio h_1/h_2 = (n_2-1)/(n_1-1), which is
    log 2 for exactly nested grids.
    """
    resolutions = list(resolutions)
    if len(resolutions) < 2:
        raise PreconditionError("need at least two resolutions")
    if len(set(resolutions)) != len(resolutions):
        raise PreconditionError("resolutions must be distinct")
    errors = [dict(runner(r)) for r in resolutions]
    rows = []
    for (r1, e1), (r2, e2) in zip(zip(resolutions, errors),
                                  zip(resolutions[1:], errors[1:])):
        ratio = (r2 - 1) / (r1 - 1)
        row = {"coarse": r1, "fine": r2}
        for key in e1:
            if e2[key] == 0 or e1[key] == 0:
                row[key] = math.inf
            else:
                row[key] = math.log(e1[key] / e2[key]) / math.log(ratio)
        rows.append(row)
    return {"resolutions": resolutions, "errors": errors, "orders": rows}
