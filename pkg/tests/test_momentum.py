import numpy as np
import pytest
import sympy as sp

from constraint_forge.conformal_data import data_from_arrays
from constraint_forge.errors import PreconditionError
from constraint_forge.momentum import momentum_rhs, solve_momentum
from constraint_forge.operators import assemble_conformal_killing_laplacian
from constraint_forge.verification import SymbolicGeometry

from conftest import flat_setup


def test_rhs_scaling_with_phi(constants):
    chart, metric, _ = flat_setup(7)
    shp = tuple(chart.nodes)
    om1 = np.zeros(shp + (3,))
    om1[..., 0] = 1.0
    data = data_from_arrays(chart, metric, tau=np.zeros(shp), omega1=om1)
    phi = np.full(shp, 2.0)
    rhs = momentum_rhs(phi, data, constants)
    # with dtau = 0 the rhs is omega1 phi^8 (n = 3)
    assert np.allclose(rhs[..., 0], 2.0 ** 8)
    assert np.abs(rhs[..., 1:]).max() == 0.0


def test_rhs_requires_positive_phi(constants):
    chart, metric, _ = flat_setup(5)
    data = data_from_arrays(chart, metric)
    with pytest.raises(PreconditionError):
        momentum_rhs(np.zeros(chart.nodes), data, constants)


def test_zero_sources_give_zero_field(constants):
    chart, metric, _ = flat_setup(9)
    data = data_from_arrays(chart, metric)
    op = assemble_conformal_killing_laplacian(metric)
    ms = solve_momentum(np.ones(chart.nodes), data, metric, op, constants)
    assert np.abs(ms.X).max() < 1e-12
    assert ms.bound_ok


def test_manufactured_momentum_solve_second_order(constants):
    geo = SymbolicGeometry(3)
    x, y, z = geo.syms
    comp = sp.Rational(1, 20) * sp.sin(sp.pi * x) * sp.sin(sp.pi * y) \
        * sp.sin(sp.pi * z)
    X_sym = [comp, comp, 0]
    rhs_sym = geo.tensor_divergence(geo.lie_conformal(X_sym))
    errs = []
    for n in (9, 17):
        chart, metric, _ = flat_setup(n)
        shp = tuple(chart.nodes)
        om2 = -np.stack([geo.evaluate(c, chart) for c in rhs_sym], axis=-1)
        data = data_from_arrays(chart, metric, tau=np.zeros(shp),
                                omega2=om2)
        op = assemble_conformal_killing_laplacian(metric)
        ms = solve_momentum(np.ones(shp), data, metric, op, constants)
        X_star = np.stack([geo.evaluate(c, chart) for c in X_sym], axis=-1)
        errs.append(np.abs(ms.X - X_star).max())
    assert errs[0] / errs[1] > 3.0


def test_variational_bound_reported(constants):
    chart, metric, _ = flat_setup(9)
    shp = tuple(chart.nodes)
    om2 = np.zeros(shp + (3,))
    om2[..., 1] = 0.3
    data = data_from_arrays(chart, metric, tau=np.zeros(shp), omega2=om2)
    op = assemble_conformal_killing_laplacian(metric)
    ms = solve_momentum(np.ones(shp), data, metric, op, constants)
    assert ms.bound_ok
    assert ms.norm_X > 0.0
    assert ms.norm_lie > 0.0


def test_lie_field_is_traceless(constants):
    chart, metric, _ = flat_setup(9)
    shp = tuple(chart.nodes)
    om1 = np.zeros(shp + (3,))
    om1[..., 0] = 0.2
    data = data_from_arrays(chart, metric, tau=np.zeros(shp), omega1=om1)
    op = assemble_conformal_killing_laplacian(metric)
    ms = solve_momentum(np.ones(shp), data, metric, op, constants)
    tr = np.einsum("...ij,...ij->...", metric.inverse, ms.lie_X)
    assert np.abs(tr).max() < 1e-10
