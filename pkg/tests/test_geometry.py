import numpy as np
import pytest

from constraint_forge.errors import ConfigurationError, MetricError
from constraint_forge.geometry import (build_chart, build_exhaustion,
                                       christoffels, curvature,
                                       metric_from_arrays,
                                       metric_from_generator,
                                       partial_derivative)
from constraint_forge.verification import SymbolicGeometry

from conftest import flat_setup


def test_chart_spacings_and_axes():
    chart = build_chart(dim=2, extents=(1.0, 2.0), nodes=(5, 9),
                        bcs="dirichlet")
    assert chart.spacings == pytest.approx((0.25, 0.25))
    assert chart.axes()[1][-1] == pytest.approx(2.0)


def test_periodic_chart_has_no_boundary():
    chart = build_chart(dim=3, extents=(1.0,) * 3, nodes=(6, 6, 6),
                        bcs="periodic")
    assert not chart.boundary_mask().any()


def test_partial_derivative_second_order():
    errs = []
    for n in (17, 33):
        chart, _, _ = flat_setup(n, dim=2)
        x, y = chart.coords()
        f = np.sin(np.pi * x) * np.cos(np.pi * y) * np.ones(chart.nodes)
        df = partial_derivative(chart, f, 0)
        ref = np.pi * np.cos(np.pi * x) * np.cos(np.pi * y)
        errs.append(np.abs(df - ref).max())
    assert errs[0] / errs[1] > 3.0


def test_flat_metric_curvature_vanishes():
    _, metric, curv = flat_setup(9)
    assert np.abs(curv.scalar).max() == 0.0
    assert np.abs(christoffels(metric)).max() == 0.0


def test_conformally_flat_scalar_curvature_converges():
    """Discrete scalar curvature approaches the symbolic value at O(h^2)."""
    psi = "1 + 0.1*sin(pi*x)*sin(pi*y)*sin(pi*z)"
    geo = SymbolicGeometry(3, {"kind": "conformally_flat",
                               "psi": "1 + 1/10*sin(pi*x)*sin(pi*y)*sin(pi*z)"})
    R_sym = geo.scalar_curvature()
    errs = []
    for n in (9, 17):
        chart = build_chart(dim=3, extents=(1.0,) * 3, nodes=(n,) * 3,
                            bcs="dirichlet")
        metric = metric_from_generator(chart, "conformally_flat", psi=psi)
        R = curvature(metric).scalar
        ref = geo.evaluate(R_sym, chart)
        core = (slice(2, -2),) * 3
        errs.append(np.abs((R - ref)[core]).max())
    assert errs[0] / errs[1] > 3.0


def test_metric_must_be_spd():
    chart, _, _ = flat_setup(5)
    g = np.zeros(tuple(chart.nodes) + (3, 3))
    g[..., 0, 0] = -1.0
    g[..., 1, 1] = 1.0
    g[..., 2, 2] = 1.0
    with pytest.raises(MetricError):
        metric_from_arrays(chart, g)


def test_conformally_flat_needs_dim_three():
    chart = build_chart(dim=2, extents=(1.0, 1.0), nodes=(5, 5),
                        bcs="dirichlet")
    with pytest.raises(ConfigurationError):
        metric_from_generator(chart, "conformally_flat", psi="1")


def test_exhaustion_nesting():
    chart, _, _ = flat_setup(17)
    ex = build_exhaustion(chart, 3)
    assert ex.level_count == 3
    for a, b in zip(ex.levels, ex.levels[1:]):
        assert np.all(b[a])          # each level contains the previous
    assert ex.levels[-1].all()       # outermost level is the full box
    assert ex.interior_compact.sum() == ex.levels[0].sum()


def test_exhaustion_too_many_levels_rejected():
    chart, _, _ = flat_setup(7)
    with pytest.raises(Exception):
        build_exhaustion(chart, 12)
