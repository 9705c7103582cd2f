"""Discretized single-chart Riemannian domains.

Structured uniform grids with periodic or Dirichlet axes, node-wise metric
fields with cached inverse and volume element, curvature derived by
second-order differences of the metric components, and nested exhaustion
subdomains (masked boxes) for the complete-manifold approximation.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MetricError
from .expressions import evaluate

PERIODIC = "periodic"
DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class GridChart:
    """A uniform structured grid on a coordinate box.

    Spacing convention: ``h = extent/(nodes-1)`` on Dirichlet axes (nodes
    include both endpoints) and ``h = extent/nodes`` on periodic axes
    (the last node is identified with the first).
    """

    dim: int
    extents: tuple
    nodes: tuple
    bcs: tuple

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigurationError("chart dimension must be >= 2")
        if len(self.extents) != self.dim or len(self.nodes) != self.dim \
                or len(self.bcs) != self.dim:
            raise ConfigurationError("per-axis lists must match dim")
        for e in self.extents:
            if not e > 0:
                raise ConfigurationError(f"extent {e} must be positive")
        for c in self.nodes:
            if c < 3:
                raise ConfigurationError(f"node count {c} must be >= 3")
        for bc in self.bcs:
            if bc not in (PERIODIC, DIRICHLET):
                raise ConfigurationError(f"unknown boundary kind {bc!r}")

    @property
    def spacings(self):
        return tuple(
            e / n if bc == PERIODIC else e / (n - 1)
            for e, n, bc in zip(self.extents, self.nodes, self.bcs))

    @property
    def node_count(self):
        return int(np.prod(self.nodes))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacings))

    def axes(self):
        """1D coordinate arrays per axis."""
        return [np.arange(n) * h for n, h in zip(self.nodes, self.spacings)]

    def coords(self):
        """Meshgrid coordinate arrays (ij indexing), one per axis."""
        return np.meshgrid(*self.axes(), indexing="ij")

    def center(self):
        return tuple(
            (n - 1) * h / 2 if bc == DIRICHLET else e / 2
            for n, h, e, bc in zip(self.nodes, self.spacings,
                                   self.extents, self.bcs))

    def radius_field(self):
        """Euclidean coordinate distance to the chart center."""
        c = self.center()
        r2 = sum((xi - ci) ** 2 for xi, ci in zip(self.coords(), c))
        return np.sqrt(r2)

    def boundary_mask(self):
        """True at nodes lying on a Dirichlet boundary face."""
        mask = np.zeros(self.nodes, dtype=bool)
        for ax, bc in enumerate(self.bcs):
            if bc != DIRICHLET:
                continue
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask

    def is_periodic(self):
        return all(bc == PERIODIC for bc in self.bcs)


def build_chart(dim, extents, nodes, bcs):
    """Construct a GridChart; bcs may be a single kind applied to all axes."""
    if isinstance(bcs, str):
        bcs = [bcs] * dim
    return GridChart(dim, tuple(float(e) for e in extents),
                     tuple(int(n) for n in nodes), tuple(bcs))


def partial_derivative(chart, f, axis):
    """Second-order partial derivative of a node field along one axis.

    Centered differences; periodic wrap on periodic axes, one-sided
    second-order stencils at Dirichlet boundaries.
    """
    h = chart.spacings[axis]
    if chart.bcs[axis] == PERIODIC:
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * h)
    return np.gradient(f, h, axis=axis, edge_order=2)


@dataclass(frozen=True)
class MetricField:
    """Node-wise SPD metric with cached inverse and volume element."""

    chart: GridChart
    gamma: np.ndarray        # shape nodes + (d, d)
    inverse: np.ndarray      # shape nodes + (d, d)
    sqrt_det: np.ndarray     # shape nodes
    generator: str

    def validate(self, tol=1e-12):
        d = self.chart.dim
        g = self.gamma
        asym = np.abs(g - np.swapaxes(g, -1, -2)).max()
        if asym > 0:
            raise MetricError(f"metric not symmetric, max asymmetry {asym}")
        eye = np.eye(d)
        prod = np.einsum("...ij,...jk->...ik", self.inverse, g)
        err = np.abs(prod - eye).max()
        scale = max(np.abs(g).max(), 1.0)
        if err > tol * scale * 10:
            raise MetricError(f"cached inverse inconsistent, error {err}")

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.gamma).min())


def _finish_metric(chart, g, generator):
    w = np.linalg.eigvalsh(g)
    bad = np.argwhere(w[..., 0] <= 0)
    if bad.size:
        raise MetricError(f"metric not SPD at node {tuple(bad[0])}")
    inv = np.linalg.inv(g)
    inv = 0.5 * (inv + np.swapaxes(inv, -1, -2))
    sdet = np.sqrt(np.linalg.det(g))
    m = MetricField(chart, g, inv, sdet, generator)
    m.validate()
    return m


def metric_from_generator(chart, kind, psi=None, components=None):
    """Build a MetricField from a generator description.

    Parameters
    ----------
    kind : {"flat", "conformally_flat", "custom"}
    psi : str, optional
        Conformal factor expression for the conformally flat generator,
        realizing gamma = psi^{4/(d-2)} delta (d = chart dimension >= 3).
    components : list of list of str, optional
        Expression matrix for the custom generator; symmetrized on input.
    """
    d = chart.dim
    shape = tuple(chart.nodes)
    if kind == "flat":
        g = np.zeros(shape + (d, d))
        for i in range(d):
            g[..., i, i] = 1.0
        return _finish_metric(chart, g, "flat")
    coords = chart.coords()
    if kind == "conformally_flat":
        if d < 3:
            raise ConfigurationError(
                "conformally_flat generator needs chart dim >= 3 "
                "(exponent 4/(d-2)); use a custom generator in 2D")
        if psi is None:
            raise ConfigurationError("conformally_flat generator needs psi")
        p = evaluate(psi, coords)
        if p.min() <= 0:
            raise MetricError("conformal factor psi must be positive")
        conf = p ** (4.0 / (d - 2))
        g = np.zeros(shape + (d, d))
        for i in range(d):
            g[..., i, i] = conf
        return _finish_metric(chart, g, f"conformally_flat({psi})")
    if kind == "custom":
        if components is None:
            raise ConfigurationError("custom generator needs components")
        g = np.zeros(shape + (d, d))
        for i in range(d):
            for j in range(d):
                g[..., i, j] = evaluate(components[i][j], coords)
        g = 0.5 * (g + np.swapaxes(g, -1, -2))
        return _finish_metric(chart, g, "custom")
    raise ConfigurationError(f"unknown metric generator {kind!r}")


def metric_from_arrays(chart, gamma, generator="custom"):
    """Wrap explicit node-wise metric components (used by verification)."""
    g = 0.5 * (gamma + np.swapaxes(gamma, -1, -2))
    return _finish_metric(chart, g, generator)


@dataclass(frozen=True)
class CurvaturePack:
    """Christoffel symbols, scalar curvature, Ricci, and a lower bound."""

    christoffel: np.ndarray        # shape nodes + (d, d, d), Gamma^k_ij
    scalar: np.ndarray             # R_gamma, shape nodes
    ricci: np.ndarray              # R_ij, shape nodes + (d, d)
    ricci_lower_bound: float       # min over nodes of min gen. eigenvalue


def christoffels(metric):
    """Gamma^k_ij = (1/2) gamma^{kl} (d_i g_jl + d_j g_il - d_l g_ij)."""
    chart = metric.chart
    d = chart.dim
    g = metric.gamma
    dg = np.stack([partial_derivative(chart, g, ax) for ax in range(d)],
                  axis=-3)  # dg[..., l, i, j] = d_l g_ij
    shape = g.shape[:-2]
    gam = np.zeros(shape + (d, d, d))
    for k in range(d):
        for i in range(d):
            for j in range(d):
                acc = np.zeros(shape)
                for l in range(d):
                    acc += metric.inverse[..., k, l] * (
                        dg[..., i, j, l] + dg[..., j, i, l] - dg[..., l, i, j])
                gam[..., k, i, j] = 0.5 * acc
    return gam


def curvature(metric):
    """Curvature fields of a metric via second-order differences.

    R_ij = d_k Gamma^k_ij - d_j Gamma^k_ik
           + Gamma^k_kl Gamma^l_ij - Gamma^k_jl Gamma^l_ik
    """
    chart = metric.chart
    d = chart.dim
    gam = christoffels(metric)
    dgam = np.stack([partial_derivative(chart, gam, ax) for ax in range(d)],
                    axis=-4)  # dgam[..., m, k, i, j] = d_m Gamma^k_ij
    shape = metric.gamma.shape[:-2]
    ric = np.zeros(shape + (d, d))
    trace_gam = np.einsum("...kki->...i", gam)  # Gamma^k_ki
    for i in range(d):
        for j in range(d):
            term = np.zeros(shape)
            for k in range(d):
                term += dgam[..., k, k, i, j] - dgam[..., j, k, i, k]
                for l in range(d):
                    term += gam[..., k, k, l] * gam[..., l, i, j] \
                        - gam[..., k, j, l] * gam[..., l, i, k]
            ric[..., i, j] = term
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    scal = np.einsum("...ij,...ij->...", metric.inverse, ric)
    # generalized eigenvalue lower bound: eig(L^{-1} Ric L^{-T}), g = L L^T
    chol = np.linalg.cholesky(metric.gamma)
    inv_chol = np.linalg.inv(chol)
    mat = np.einsum("...ia,...ab,...jb->...ij", inv_chol, ric, inv_chol)
    mat = 0.5 * (mat + np.swapaxes(mat, -1, -2))
    low = float(np.linalg.eigvalsh(mat)[..., 0].min())
    return CurvaturePack(gam, scal, ric, low)


def gradient_covector(chart, f):
    """Covector field (df)_i by second-order differences."""
    d = chart.dim
    out = np.zeros(tuple(chart.nodes) + (d,))
    for ax in range(d):
        out[..., ax] = partial_derivative(chart, f, ax)
    return out


def vector_norm2(metric, w):
    """Pointwise |w|^2_gamma for a covector field w (indices raised)."""
    return np.einsum("...ij,...i,...j->...", metric.inverse, w, w)


def tensor_norm2(metric, s):
    """Pointwise |S|^2_gamma for a covariant 2-tensor field S."""
    return np.einsum("...ia,...jb,...ij,...ab->...",
                     metric.inverse, metric.inverse, s, s)


def tensor_trace(metric, s):
    """Pointwise tr_gamma S for a covariant 2-tensor field S."""
    return np.einsum("...ij,...ij->...", metric.inverse, s)


def tensor_divergence(metric, christoffel, s):
    """(div S)_j = gamma^{ik} (d_i S_kj - Gamma^l_ik S_lj - Gamma^l_ij S_kl)."""
    chart = metric.chart
    d = chart.dim
    ds = np.stack([partial_derivative(chart, s, ax) for ax in range(d)],
                  axis=-3)  # ds[..., i, k, j] = d_i S_kj
    cov = ds \
        - np.einsum("...lik,...lj->...ikj", christoffel, s) \
        - np.einsum("...lij,...kl->...ikj", christoffel, s)
    return np.einsum("...ik,...ikj->...j", metric.inverse, cov)


def covector_divergence(metric, christoffel, w):
    """div w = gamma^{ij} (d_i w_j - Gamma^k_ij w_k) for a covector w."""
    chart = metric.chart
    d = chart.dim
    dw = np.stack([partial_derivative(chart, w, ax) for ax in range(d)],
                  axis=-2)  # dw[..., i, j] = d_i w_j
    cov = dw - np.einsum("...kij,...k->...ij", christoffel, w)
    return np.einsum("...ij,...ij->...", metric.inverse, cov)


@dataclass(frozen=True)
class Exhaustion:
    """Nested centered boxes Omega_1 cc Omega_2 cc ... cc Omega_K."""

    chart: GridChart
    levels: tuple = field(default=())   # tuple of boolean masks, inner first

    @property
    def level_count(self):
        return len(self.levels)

    @property
    def interior_compact(self):
        return self.levels[0]


def build_exhaustion(chart, K, shrink=0.25):
    """Build K nested box masks; the outermost equals the full domain.

    Margins shrink linearly level by level; raises when a level would
    collapse below 3 nodes on some axis.
    """
    if any(bc != DIRICHLET for bc in chart.bcs):
        raise ConfigurationError("exhaustion requires Dirichlet on all axes")
    if K < 1:
        raise ConfigurationError("exhaustion needs K >= 1")
    steps = []
    for n in chart.nodes:
        s = max(1, round(shrink * (n - 1) / 2 / max(K - 1, 1)))
        steps.append(s)
    levels = []
    for k in range(1, K + 1):
        mask = np.zeros(chart.nodes, dtype=bool)
        sl = []
        for n, s in zip(chart.nodes, steps):
            margin = (K - k) * s
            if n - 2 * margin < 3:
                raise ConfigurationError(
                    f"exhaustion level {k} collapses below 3 nodes per axis")
            sl.append(slice(margin, n - margin))
        mask[tuple(sl)] = True
        levels.append(mask)
    for inner, outer in zip(levels, levels[1:]):
        if not (outer & ~inner).any() or not np.all(outer[inner]):
            raise ConfigurationError("exhaustion nesting failed")
    if not levels[-1].all():
        raise ConfigurationError("outermost level must be the full domain")
    return Exhaustion(chart, tuple(levels))
