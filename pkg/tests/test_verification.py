import math

import numpy as np
import pytest

from constraint_forge.conformal_data import (ConformalConstants,
                                             assemble_data,
                                             data_from_arrays)
from constraint_forge.errors import PreconditionError
from constraint_forge.verification import (constraint_residuals,
                                           convergence_study, mms_forcing,
                                           reconstruct)

from conftest import flat_setup

_CONST = ConformalConstants(3)


def trivial_ids(nodes=9):
    chart, metric, _ = flat_setup(nodes)
    shp = tuple(chart.nodes)
    data = data_from_arrays(chart, metric, tau=np.zeros(shp))
    ids = reconstruct(np.ones(shp), np.zeros(shp + (3,)), data, metric,
                      _CONST)
    return ids, data


def test_reconstruct_trace_identity():
    chart, metric, _ = flat_setup(9)
    shp = tuple(chart.nodes)
    x = np.broadcast_to(chart.coords()[0], shp)
    data = data_from_arrays(chart, metric, tau=0.5 + 0.1 * x)
    phi = 1.0 + 0.1 * np.sin(np.pi * x) * np.ones(shp)
    ids = reconstruct(phi, np.zeros(shp + (3,)), data, metric, _CONST)
    assert ids.trace_defect < 1e-12


def test_reconstruct_rejects_wrong_dimension():
    chart, metric, _ = flat_setup(9, dim=2)
    shp = tuple(chart.nodes)
    data = data_from_arrays(chart, metric, tau=np.zeros(shp))
    with pytest.raises(PreconditionError):
        reconstruct(np.ones(shp), np.zeros(shp + (2,)), data, metric,
                    _CONST)


def test_reconstruct_rejects_nonpositive_phi():
    chart, metric, _ = flat_setup(5)
    shp = tuple(chart.nodes)
    data = data_from_arrays(chart, metric, tau=np.zeros(shp))
    with pytest.raises(PreconditionError):
        reconstruct(np.zeros(shp), np.zeros(shp + (3,)), data, metric,
                    _CONST)


def test_flat_vacuum_residuals_vanish():
    """phi = 1, X = 0, flat slice: both constraints are exactly zero."""
    ids, data = trivial_ids()
    rep = constraint_residuals(ids, data, _CONST)
    assert rep.ham_linf_full == 0.0
    assert rep.mom_linf_full == 0.0


def test_cosmological_constant_shifts_hamiltonian():
    ids, data = trivial_ids()
    rep = constraint_residuals(ids, data, _CONST, cosmological=0.7)
    assert rep.ham_linf == pytest.approx(1.4)
    assert rep.mom_linf == 0.0


def test_residual_norms_dict_keys():
    ids, data = trivial_ids()
    rep = constraint_residuals(ids, data, _CONST)
    norms = rep.norms()
    assert {"ham_linf", "mom_linf", "ham_l2_core"} <= set(norms)
    assert "em_linf" not in norms


def test_mms_trivial_targets_have_zero_forcing():
    mf = mms_forcing(3, _CONST, {"phi": "1", "x": ["0", "0", "0"]},
                     data_config={"tau": "0"})
    chart, _, _ = flat_setup(5)
    out = mf.evaluate(chart)
    assert np.abs(out["forcing_phi"]).max() < 1e-12
    assert np.abs(out["forcing_X"]).max() < 1e-12


def test_mms_absorbed_targets_solve_unforced_system():
    """Residuals on the absorbed data shrink at second order."""
    mf = mms_forcing(
        3, _CONST,
        {"phi": "1 + 0.1*sin(pi*x)*sin(pi*y)*sin(pi*z)",
         "x": ["0.05*sin(pi*x)*sin(pi*y)*sin(pi*z)", "0", "0"]},
        data_config={"tau": "0.6 + 0.1*x", "eps1": "0.001",
                     "eps2": "0.6", "eps3": "0.1"})

    def runner(nodes):
        chart, metric, _ = flat_setup(nodes)
        out = mf.evaluate(chart)
        absorbed = mf.evaluate_absorbed(chart)
        assert absorbed["eps2"].min() >= 0.0
        data = data_from_arrays(chart, metric, tau=absorbed["tau"],
                                eps1=absorbed["eps1"],
                                eps2=absorbed["eps2"],
                                eps3=absorbed["eps3"],
                                omega1=absorbed["omega1"],
                                omega2=absorbed["omega2"])
        ids = reconstruct(out["phi_star"], out["X_star"], data, metric,
                          _CONST)
        rep = constraint_residuals(ids, data, _CONST)
        return {"ham": rep.ham_linf, "mom": rep.mom_linf}

    study = convergence_study(runner, [9, 17])
    orders = study["orders"][0]
    assert orders["ham"] > 1.7
    assert orders["mom"] > 1.7


def test_convergence_study_guards():
    with pytest.raises(PreconditionError):
        convergence_study(lambda r: {"e": 1.0}, [9])
    with pytest.raises(PreconditionError):
        convergence_study(lambda r: {"e": 1.0}, [9, 9])


def test_convergence_study_exact_order():
    def runner(nodes):
        h = 1.0 / (nodes - 1)
        return {"e2": h ** 2, "e1": h, "zero": 0.0}

    study = convergence_study(runner, [9, 17, 33])
    for row in study["orders"]:
        assert row["e2"] == pytest.approx(2.0)
        assert row["e1"] == pytest.approx(1.0)
        assert row["zero"] == math.inf
