import numpy as np
import pytest

from constraint_forge import ConformalConstants
from constraint_forge.geometry import (build_chart, curvature,
                                       metric_from_generator)


@pytest.fixture
def constants():
    return ConformalConstants(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)


def flat_setup(nodes, dim=3, bcs="dirichlet", extents=None):
    """Chart, flat metric and curvature pack on the unit box."""
    if isinstance(nodes, int):
        nodes = (nodes,) * dim
    if extents is None:
        extents = (1.0,) * dim
    chart = build_chart(dim=dim, extents=extents, nodes=nodes, bcs=bcs)
    metric = metric_from_generator(chart, "flat")
    return chart, metric, curvature(metric)


def random_dirichlet_vector(rng, chart):
    """Random covector field vanishing on all Dirichlet faces."""
    X = rng.standard_normal(tuple(chart.nodes) + (chart.dim,))
    mask = chart.boundary_mask()
    X[mask] = 0.0
    return X
