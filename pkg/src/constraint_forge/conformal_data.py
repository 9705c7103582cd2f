"""Free conformal data, dimensional constants, and charged-fluid sources.

The dimensional constants are kept as exact rationals so that identities
like a_n * c_n = 1 hold without roundoff and the exponent bookkeeping of
the scalar equation stays exact (the (n-6)/(n-2) exponent vanishes exactly
at n = 6).
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, DataError
from .expressions import evaluate
from .geometry import (gradient_covector, tensor_norm2, tensor_trace,
                       tensor_divergence, vector_norm2, christoffels)

TT_TOL = 1e-8


@dataclass(frozen=True)
class ConformalConstants:
    """Exact rational constants of the conformal system in dimension n.

    a_n = 4(n-1)/(n-2) is the Laplacian coefficient of the conformal
    transformation law; c_n = 1/a_n converts to the unit-Laplacian form;
    b_n = c_n (n-1)/n is the tau^2 coefficient there; r_n = (n-1)/n is
    chosen so c_n r_n = b_n, which closes the subsolution sign algebra
    kappa(1 - kappa^{4/(n-2)}) >= 0 of the Yamabe route.
    """

    n: int

    def __post_init__(self):
        if self.n < 3:
            raise ConfigurationError("symbolic dimension n must be >= 3")

    @property
    def a_n(self):
        return Fraction(4 * (self.n - 1), self.n - 2)

    @property
    def c_n(self):
        return Fraction(self.n - 2, 4 * (self.n - 1))

    @property
    def b_n(self):
        return self.c_n * Fraction(self.n - 1, self.n)

    @property
    def r_n(self):
        return Fraction(self.n - 1, self.n)

    # exponents of the unit-Laplacian Lichnerowicz equation
    @property
    def p_tau(self):
        """Exponent (n+2)/(n-2) of the tau^2 and eps1 terms."""
        return Fraction(self.n + 2, self.n - 2)

    @property
    def p_K(self):
        """Exponent -(3n-2)/(n-2) of the |Ktilde|^2 term."""
        return Fraction(-(3 * self.n - 2), self.n - 2)

    @property
    def p_eps3(self):
        """Exponent (n-6)/(n-2) of the eps3 term (vanishes at n = 6)."""
        return Fraction(self.n - 6, self.n - 2)

    @property
    def p_phi(self):
        """Conformal-factor exponent 4/(n-2) in g = phi^{4/(n-2)} gamma."""
        return Fraction(4, self.n - 2)

    @property
    def p_mom_tau(self):
        """Exponent 2n/(n-2) of phi in the dtau part of the momentum rhs."""
        return Fraction(2 * self.n, self.n - 2)

    @property
    def p_mom_omega(self):
        """Exponent 2(n+1)/(n-2) of phi in the omega1 part."""
        return Fraction(2 * (self.n + 1), self.n - 2)


@dataclass(frozen=True)
class EMPack:
    """Electromagnetic free data: Faraday 2-form, charge, vector potential."""

    F: np.ndarray        # antisymmetric, nodes + (d, d)
    q: np.ndarray        # scalar field q_tilde
    V: np.ndarray        # background vector potential offset


@dataclass(frozen=True)
class ConformalData:
    """Free data of the coupled system on a chart.

    All vector-like quantities are stored as covariant components with
    respect to the background metric gamma.
    """

    tau: np.ndarray
    dtau: np.ndarray
    U: np.ndarray
    eps1: np.ndarray
    eps2: np.ndarray
    eps3: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    bc_u: np.ndarray           # Dirichlet value for phi, full-grid field
    bc_v: np.ndarray           # Dirichlet value for X
    bc_w: np.ndarray           # Dirichlet value for f
    em: EMPack = None
    trace_residual: float = 0.0
    div_residual: float = 0.0
    non_tt: bool = False

    def replace(self, **kw):
        from dataclasses import replace as _replace
        return _replace(self, **kw)


def assemble_data(chart, metric, config, tt_tol=TT_TOL, tt_hard_cap=1e-2):
    """Assemble ConformalData from a dict of field expressions.

    Recognized keys (all optional, defaulting to zero fields): ``tau``,
    ``u`` (matrix of expressions for U), ``eps1``..``eps3``, ``omega1``,
    ``omega2`` (lists of expressions), ``bc_u``, ``bc_v``, ``bc_w``,
    ``em_f`` (matrix), ``em_q``, ``em_v`` (list).

    dtau is always computed from tau by central differences so the pair
    stays consistent.
    """
    d = chart.dim
    shape = tuple(chart.nodes)
    coords = chart.coords()

    def scal(key, default="0"):
        return evaluate(config.get(key, default), coords)

    def vec(key):
        exprs = config.get(key, ["0"] * d)
        if len(exprs) != d:
            raise ConfigurationError(f"{key} needs {d} components")
        out = np.zeros(shape + (d,))
        for i, e in enumerate(exprs):
            out[..., i] = evaluate(e, coords)
        return out

    def mat(key, antisym=False):
        exprs = config.get(key)
        out = np.zeros(shape + (d, d))
        if exprs is None:
            return out
        for i in range(d):
            for j in range(d):
                out[..., i, j] = evaluate(exprs[i][j], coords)
        if antisym:
            out = 0.5 * (out - np.swapaxes(out, -1, -2))
        else:
            out = 0.5 * (out + np.swapaxes(out, -1, -2))
        return out

    tau = scal("tau")
    dtau = gradient_covector(chart, tau)
    U = mat("u")
    eps1 = scal("eps1")
    eps2 = scal("eps2")
    eps3 = scal("eps3")
    for name, f in (("eps1", eps1), ("eps2", eps2), ("eps3", eps3)):
        if f.min() < 0:
            node = tuple(np.argwhere(f < 0)[0])
            raise DataError(f"{name} negative at node {node}")
    omega1 = vec("omega1")
    omega2 = vec("omega2")
    bc_u = scal("bc_u", "1")
    if bc_u.min() <= 0:
        raise DataError("boundary value u for phi must be strictly positive")
    bc_v = vec("bc_v")
    bc_w = scal("bc_w")

    tr = tensor_trace(metric, U)
    trace_res = float(np.abs(tr).max())
    if trace_res > tt_hard_cap:
        raise DataError(f"trace residual of U is {trace_res}, above hard cap")
    gam = christoffels(metric)
    divU = tensor_divergence(metric, gam, U)
    div_res = float(np.sqrt(vector_norm2(metric, divU)).max())
    non_tt = trace_res > tt_tol or div_res > tt_tol

    em = None
    if "em_f" in config or "em_q" in config or "em_v" in config:
        em = EMPack(F=mat("em_f", antisym=True), q=scal("em_q"), V=vec("em_v"))

    return ConformalData(tau=tau, dtau=dtau, U=U, eps1=eps1, eps2=eps2,
                         eps3=eps3, omega1=omega1, omega2=omega2,
                         bc_u=bc_u, bc_v=bc_v, bc_w=bc_w, em=em,
                         trace_residual=trace_res, div_residual=div_res,
                         non_tt=non_tt)


def data_from_arrays(chart, metric, tau=None, U=None, eps1=None, eps2=None,
                     eps3=None, omega1=None, omega2=None, bc_u=1.0,
                     bc_v=None, bc_w=0.0, em=None):
    """Assemble ConformalData directly from numpy arrays (library use)."""
    d = chart.dim
    shape = tuple(chart.nodes)

    def as_scal(v, default=0.0):
        if v is None:
            v = default
        return np.broadcast_to(np.asarray(v, dtype=float), shape).copy()

    def as_vec(v):
        if v is None:
            return np.zeros(shape + (d,))
        return np.asarray(v, dtype=float)

    tau = as_scal(tau)
    U = np.zeros(shape + (d, d)) if U is None else np.asarray(U, dtype=float)
    eps1, eps2, eps3 = as_scal(eps1), as_scal(eps2), as_scal(eps3)
    for name, f in (("eps1", eps1), ("eps2", eps2), ("eps3", eps3)):
        if f.min() < 0:
            raise DataError(f"{name} negative")
    bc_u = as_scal(bc_u, 1.0)
    if bc_u.min() <= 0:
        raise DataError("boundary value u for phi must be strictly positive")
    tr = tensor_trace(metric, U)
    gam = christoffels(metric)
    divU = tensor_divergence(metric, gam, U)
    trace_res = float(np.abs(tr).max())
    div_res = float(np.sqrt(vector_norm2(metric, divU)).max())
    return ConformalData(
        tau=tau, dtau=gradient_covector(chart, tau), U=U,
        eps1=eps1, eps2=eps2, eps3=eps3,
        omega1=as_vec(omega1), omega2=as_vec(omega2),
        bc_u=bc_u, bc_v=as_vec(bc_v), bc_w=as_scal(bc_w), em=em,
        trace_residual=trace_res, div_residual=div_res,
        non_tt=trace_res > TT_TOL or div_res > TT_TOL)


def sources_from_fluid(mu, u_vec, q, E, F, metric):
    """Charged-fluid source fields from rest density, velocity and EM data.

    eps1 = mu (1 + |u|^2), omega1_k = mu (1 + |u|^2)^{1/2} u_k,
    eps2 = |E|^2 / 2, eps3 = |F|^2 / 4, omega2_k = F_ik E^i,
    q_tilde = q (1 + |u|^2)^{1/2}.

    u_vec and E are covector fields; F an antisymmetric 2-tensor.
    """
    if np.asarray(mu).min() < 0:
        raise DataError("fluid rest density mu must be non-negative")
    asym = np.abs(F + np.swapaxes(F, -1, -2)).max()
    if asym > 1e-12 * max(np.abs(F).max(), 1.0):
        raise DataError("F must be antisymmetric")
    u2 = vector_norm2(metric, u_vec)
    lift = np.sqrt(1.0 + u2)
    eps1 = mu * (1.0 + u2)
    omega1 = (mu * lift)[..., None] * u_vec
    E_up = np.einsum("...ij,...j->...i", metric.inverse, E)
    eps2 = 0.5 * vector_norm2(metric, E)
    eps3 = 0.25 * tensor_norm2(metric, F)
    omega2 = np.einsum("...ik,...i->...k", F, E_up)
    q_tilde = q * lift
    return eps1, omega1, eps2, eps3, omega2, q_tilde


def tt_project(U, metric):
    """Remove the gamma-trace of U (no York transverse projection).

    U' = U - (tr_gamma U / d) gamma, idempotent within roundoff.
    """
    d = metric.chart.dim
    tr = tensor_trace(metric, U)
    return U - (tr / d)[..., None, None] * metric.gamma
