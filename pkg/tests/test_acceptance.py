"""Acceptance suite: one test per criterion, tolerances pinned.

Each test states its pass/fail condition explicitly and uses frozen
problem configurations, so a failure localizes a regression rather than
a flaky setup.
"""

import time
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from scipy.optimize import bisect

from constraint_forge.barriers import (BarrierPair, barrier_linear_solve,
                                       certify_barriers, make_barriers)
from constraint_forge.cli import main
from constraint_forge.conformal_data import (ConformalConstants,
                                             assemble_data,
                                             data_from_arrays)
from constraint_forge.coupled import (solve_coupled_compact,
                                      solve_coupled_exhaustion)
from constraint_forge.geometry import (build_chart, build_exhaustion,
                                       curvature, metric_from_generator)
from constraint_forge.lichnerowicz import LichnerowiczProblem, picard_solve
from constraint_forge.operators import (assemble_conformal_killing_laplacian,
                                        assemble_laplace_beltrami,
                                        conformal_killing_operator,
                                        lie_norm2_total, solve_linear,
                                        vector_inner_total)
from constraint_forge.regularity import (bootstrap_exponents,
                                         check_multiplication, hs_feasible)
from constraint_forge.spectral import (_weight_matrix, lambda1_conf,
                                       lambda1_schrodinger)
from constraint_forge.verification import (SymbolicGeometry,
                                           constraint_residuals,
                                           mms_forcing, reconstruct)

_N3 = ConformalConstants(3)
EPS_MP = 1e-8


def manual_pair(shape, lo=0.5, hi=2.0):
    return BarrierPair(phi_minus=np.full(shape, lo),
                       phi_plus=np.full(shape, hi), l=lo, m=hi,
                       route="manual", cap_c=hi, margin_minus=0.0,
                       margin_plus=0.0, ktilde2_bound=0.0,
                       certified=False, mode="manual")


def test_criterion_01_operator_accuracy_periodic_torus():
    """Scalar Laplacian MMS on a periodic 3-torus: order in [1.7, 2.3],
    runtime under 30 s for resolutions 17/33/65."""
    t0 = time.time()
    geo = SymbolicGeometry(3, {
        "kind": "conformally_flat",
        "psi": "1 + 1/10*sin(2*pi*x)*sin(2*pi*y)*sin(2*pi*z)"})
    x, y, z = geo.syms
    u_star = sp.sin(2 * sp.pi * x) * sp.cos(2 * sp.pi * y) \
        * sp.sin(2 * sp.pi * z)
    f_sym = geo.laplacian(u_star)
    errs = []
    for nodes in (17, 33, 65):
        chart = build_chart(3, (1.0,) * 3, (nodes,) * 3, "periodic")
        metric = metric_from_generator(
            chart, "conformally_flat",
            psi="1 + 0.1*sin(2*pi*x)*sin(2*pi*y)*sin(2*pi*z)")
        op = assemble_laplace_beltrami(metric)
        u = geo.evaluate(u_star, chart)
        f = geo.evaluate(f_sym, chart)
        sol, rep = solve_linear(op, f)
        assert rep.converged
        sol = sol - sol.mean() + u.mean()   # fix the constant mode
        errs.append(np.abs(sol - u).max())
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(1.7 <= o <= 2.3 for o in orders), orders
    assert time.time() - t0 < 30.0


def test_criterion_02_ckl_structure(rng):
    """Symmetry defect <= 1e-10 relative; energy identity
    |0.5 ||L X||^2 + <X, A X>| <= 1e-8 (||L X||^2 + 1) on 20 random
    Dirichlet fields; conformal Killing kernel at second order."""
    chart = build_chart(3, (1.0,) * 3, (9,) * 3, "dirichlet")
    metric = metric_from_generator(
        chart, "conformally_flat",
        psi="1 + 0.1*sin(pi*x)*sin(pi*y)*sin(pi*z)")
    op = assemble_conformal_killing_laplacian(metric)
    S = op.S_ii
    assert abs(S - S.T).max() <= 1e-10 * abs(S).max()
    for _ in range(20):
        X = rng.standard_normal(tuple(chart.nodes) + (3,))
        for ax in range(3):
            sl = [slice(None)] * 3
            for end in (0, -1):
                sl[ax] = end
                X[tuple(sl)] = 0.0
        lx = conformal_killing_operator(metric, X)
        n2 = lie_norm2_total(metric, lx)
        inner = vector_inner_total(op, X, op.apply(X))
        assert abs(0.5 * n2 + inner) <= 1e-8 * (n2 + 1.0)
    errs = []
    for nodes in (17, 33):
        m2 = metric_from_generator(
            build_chart(3, (1.0,) * 3, (nodes,) * 3, "dirichlet"),
            "conformally_flat",
            psi="1 + 0.1*sin(pi*x)*sin(pi*y)*sin(pi*z)")
        ch = m2.chart
        coords = [np.broadcast_to(c, ch.nodes) for c in ch.coords()]
        core = (slice(2, -2),) * 3
        zero = np.zeros(ch.nodes)
        Xt = np.stack([m2.gamma[..., 0, 0], zero, zero], axis=-1)
        assert np.abs(conformal_killing_operator(m2, Xt)[core]).max() \
            < 1e-12
        Xd = np.stack([m2.gamma[..., i, i] * coords[i]
                       for i in range(3)], axis=-1)
        errs.append(np.abs(conformal_killing_operator(m2, Xd)[core]).max())
    assert errs[0] / errs[1] > 3.0          # O(h^2) on halving


def test_criterion_03_spectral_oracles():
    """lambda1 matches a dense eigensolve to 1e-8 relative on 7^3 for
    both operators; flat-box Dirichlet lambda1 within 5% of n pi^2."""
    import scipy.linalg as sla

    chart = build_chart(3, (1.0,) * 3, (7,) * 3, "dirichlet")
    metric = metric_from_generator(
        chart, "conformally_flat",
        psi="1 + 0.1*sin(pi*x)*sin(pi*y)*sin(pi*z)")
    curv = curvature(metric)

    def dense(op, pot=None):
        S = (-op.S_ii).toarray()
        if pot is not None:
            S = S + np.diag(op.w_interior * pot)
        return float(sla.eigh(S, _weight_matrix(op).toarray(),
                              eigvals_only=True)[0])

    est = lambda1_conf(metric)
    ref = dense(assemble_conformal_killing_laplacian(metric))
    assert abs(est.lam - ref) <= 1e-8 * abs(ref)

    pot = float(_N3.c_n) * curv.scalar
    op = assemble_laplace_beltrami(metric)
    ref = dense(op, pot.ravel()[op.interior_nodes])
    est = lambda1_schrodinger(metric, pot)
    assert abs(est.lam - ref) <= 1e-8 * max(abs(ref), 1.0)

    chart = build_chart(3, (1.0,) * 3, (33,) * 3, "dirichlet")
    metric = metric_from_generator(chart, "flat")
    est = lambda1_schrodinger(metric, 0.0)
    target = 3 * np.pi ** 2
    assert abs(est.lam - target) / target < 0.05


def _random_constant_problem(rng):
    chart = build_chart(3, (1.0,) * 3, (5,) * 3, "dirichlet")
    metric = metric_from_generator(chart, "flat")
    a_k = rng.uniform(0.1, 1.0)
    a_t = rng.uniform(0.3, 1.5)
    root = bisect(lambda p: a_t * p ** 5 - a_k * p ** -7,
                  1e-3, 50.0, xtol=1e-14)
    shp = tuple(chart.nodes)
    zeros = np.zeros(shp)
    prob = LichnerowiczProblem(
        operator=assemble_laplace_beltrami(metric), constants=_N3,
        bracket=(0.7, 1.4), bc_u=np.full(shp, root),
        A_R=zeros, A_K=np.full(shp, a_k), A_tau=np.full(shp, a_t),
        A_e1=zeros, A_e2=zeros, A_e3=zeros)
    return chart, prob, root


def test_criterion_04_constant_coefficient_roots(rng):
    """10 randomized constant-coefficient problems: converged phi within
    1e-7 of the bisection root; bracket violations within eps_mp."""
    for _ in range(10):
        chart, prob, root = _random_constant_problem(rng)
        phi, trace = picard_solve(prob, np.full(chart.nodes, 0.7),
                                  np.full(chart.nodes, 1.4), tol=1e-12)
        assert trace.converged
        assert np.abs(phi - root).max() <= 1e-7
        assert max(trace.bracket_violations) <= EPS_MP * 1.4


def test_criterion_05_monotone_iteration(rng):
    """Iterates from phi_minus are nodewise nondecreasing within eps_mp
    and the final sup-difference ratio rho is below 1."""
    for _ in range(3):
        chart, prob, root = _random_constant_problem(rng)
        iterates = []
        _, trace = picard_solve(
            prob, np.full(chart.nodes, 0.7), np.full(chart.nodes, 1.4),
            tol=1e-12,
            callback=lambda k, p: iterates.append(p.copy()))
        for a, b in zip(iterates, iterates[1:]):
            assert np.min(b - a) >= -EPS_MP * 1.4
        diffs = trace.sup_diffs
        rho = diffs[-1] / diffs[-2]
        assert rho < 1.0


def test_criterion_06_coupled_mms_2d():
    """Manufactured (phi*, X*) on a 2D Dirichlet box, 17/33 nodes:
    recovery orders in [1.7, 2.3]; outer contraction < 0.9 after
    iterate 3; runtime < 2 min."""
    t0 = time.time()
    targets = {"phi": "1 + 0.2*sin(pi*x)*sin(pi*y)",
               "x": ["0.05*sin(pi*x)*sin(pi*y)",
                     "0.05*sin(pi*x)*sin(pi*y)"]}
    dconf = {"tau": "0.5 + 0.1*x", "eps1": "0.001", "eps2": "0.05",
             "eps3": "0.02"}
    mf = mms_forcing(2, _N3, targets, data_config=dconf)
    errs = []
    for nodes in (17, 33):
        chart = build_chart(2, (1.0, 1.0), (nodes, nodes), "dirichlet")
        metric = metric_from_generator(chart, "flat")
        curv = curvature(metric)
        ev = mf.evaluate(chart)
        data = assemble_data(chart, metric, dict(dconf, bc_u="1.0"))
        session = solve_coupled_compact(
            metric, data, manual_pair(tuple(chart.nodes)), _N3,
            scalar_curv=curv.scalar, require_certified=False,
            forcing_phi=ev["forcing_phi"], forcing_X=ev["forcing_X"])
        assert session.contraction(start=3) < 0.9
        errs.append((np.abs(session.phi - ev["phi_star"]).max(),
                     np.abs(session.X - ev["X_star"]).max()))
    o_phi = np.log2(errs[0][0] / errs[1][0])
    o_x = np.log2(errs[0][1] / errs[1][1])
    assert 1.7 <= o_phi <= 2.3, o_phi
    assert 1.7 <= o_x <= 2.3, o_x
    assert time.time() - t0 < 120.0


def test_criterion_07_constraint_residual_convergence():
    """Hamiltonian and momentum residual L-inf norms drop by a factor
    of at least 3 per h halving on a converged nonvacuum CMC-perturbed
    solve; the trivial flat-vacuum residuals are <= 1e-10."""
    targets = {"phi": "1 + 0.1*sin(pi*x)*sin(pi*y)*sin(pi*z)",
               "x": ["0.02*sin(pi*x)*sin(pi*y)*sin(pi*z)"] * 3}
    dconf = {"tau": "0.6 + 0.1*x", "eps1": "0.001", "eps2": "0.6",
             "eps3": "0.1"}
    mf = mms_forcing(3, _N3, targets, data_config=dconf)
    reports = []
    for nodes in (9, 17, 33):
        chart = build_chart(3, (1.0,) * 3, (nodes,) * 3, "dirichlet")
        metric = metric_from_generator(chart, "flat")
        curv = curvature(metric)
        ab = mf.evaluate_absorbed(chart)
        shp = tuple(chart.nodes)
        assert ab["eps2"].min() >= 0.0
        data = data_from_arrays(
            chart, metric, tau=ab["tau"], eps1=ab["eps1"],
            eps2=ab["eps2"], eps3=ab["eps3"],
            omega1=np.asarray(ab["omega1"], float),
            omega2=np.asarray(ab["omega2"], float),
            bc_u=np.full(shp, 1.0))
        session = solve_coupled_compact(
            metric, data, manual_pair(shp), _N3,
            scalar_curv=curv.scalar, require_certified=False)
        ids = reconstruct(session.phi, session.X, data, metric, _N3)
        reports.append(constraint_residuals(ids, data, _N3))
    for a, b in zip(reports, reports[1:]):
        assert a.ham_linf / b.ham_linf >= 3.0
        assert a.mom_linf / b.mom_linf >= 3.0

    chart = build_chart(3, (1.0,) * 3, (9,) * 3, "dirichlet")
    metric = metric_from_generator(chart, "flat")
    shp = tuple(chart.nodes)
    data = data_from_arrays(chart, metric, tau=np.zeros(shp))
    ids = reconstruct(np.ones(shp), np.zeros(shp + (3,)), data, metric,
                      _N3)
    rep = constraint_residuals(ids, data, _N3)
    assert rep.ham_linf_full <= 1e-10
    assert rep.mom_linf_full <= 1e-10


def test_criterion_08_barrier_lemmas(rng):
    """Linear-solve cap v <= max(sup Lambda/a, c) + 1e-8 on 10 random
    configurations; comparison u <= v within 1e-10; a posteriori
    margins within 1e-6 on a converged solve."""
    chart = build_chart(3, (1.0,) * 3, (9,) * 3, "dirichlet")
    metric = metric_from_generator(chart, "flat")
    op = assemble_laplace_beltrami(metric)
    shp = tuple(chart.nodes)
    for _ in range(10):
        a = rng.uniform(0.1, 5.0, shp)
        lam = rng.uniform(0.0, 2.0, shp)
        c = rng.uniform(0.0, 1.5)
        v, cap = barrier_linear_solve(op, a, lam, c)
        assert v.max() <= max(float((lam / a).max()), c) + 1e-8
        u, _ = barrier_linear_solve(op, a, 0.5 * lam, 0.5 * c)
        assert np.min(v - u) >= -1e-10

    curv = curvature(metric)
    data = assemble_data(chart, metric, {
        "tau": "0.6", "eps1": "0.002", "eps2": "0.1", "eps3": "0.05",
        "bc_u": "1.0"})
    pair = make_barriers(metric, data, _N3, scalar_curv=curv.scalar)
    session = solve_coupled_compact(metric, data, pair, _N3,
                                    scalar_curv=curv.scalar,
                                    require_certified=False)
    pair = certify_barriers(pair, metric, data, _N3,
                            lam1_conf=lambda1_conf(metric).lam,
                            mode="posteriori", X=session.X,
                            scalar_curv=curv.scalar)
    assert pair.margin_plus >= -1e-6       # H(phi_plus) <= 1e-6
    assert pair.margin_minus >= -1e-6      # H(phi_minus) >= -1e-6
    assert pair.certified


def test_criterion_09_exhaustion_stability():
    """3-level exhaustion on homogeneous data: interior-compact Cauchy
    differences strictly decreasing."""
    chart = build_chart(3, (1.0,) * 3, (25,) * 3, "dirichlet")
    metric = metric_from_generator(chart, "flat")
    curv = curvature(metric)
    data = assemble_data(chart, metric, {
        "tau": "12.0", "eps2": "0.1", "eps3": "0.05", "bc_u": "1.0"})
    pair = make_barriers(metric, data, _N3, scalar_curv=curv.scalar)
    ex = build_exhaustion(chart, 3, shrink=0.3)
    session = solve_coupled_exhaustion(metric, ex, data, pair, _N3,
                                       scalar_curv=curv.scalar,
                                       require_certified=False)
    d = session.cauchy_diffs
    assert len(d) == 2
    assert d[0] > d[1] > 0.0


def test_criterion_10_index_calculators():
    """Ladders for n in 3..14 match the recurrence recomputed here;
    hs_feasible flips exactly at n = 13 and s = n/2 + 1."""
    expected = {3: [2], 4: [2], 6: [2, 6], 12: [2, 3, 6]}
    for n in range(3, 15):
        lad = bootstrap_exponents(n)
        seq = [Fraction(2)]
        while 2 * seq[-1] < n:
            p = seq[-1]
            seq.append(n * p / (n - 2 * p))
        assert list(lad.sequence) == seq
        assert lad.j_max == len(seq) - 1
        if n in expected:
            assert [int(p) for p in lad.sequence] == expected[n]
    assert hs_feasible(12, 8).ok
    assert not hs_feasible(13, 9).ok       # dimension gate flips at 13
    assert not hs_feasible(4, 3).regularity_ok       # s = n/2 + 1
    assert hs_feasible(4, Fraction(7, 2)).regularity_ok
    assert check_multiplication(2, 2, 1, 3).ok
    assert not check_multiplication(1, 1, Fraction(1, 2), 3).ok


SOLVE_INI = """\
[chart]
dim = 3
extents = 1.0 | 1.0 | 1.0
nodes = 9 | 9 | 9
bcs = dirichlet | dirichlet | dirichlet

[metric]
kind = conformally_flat
psi = 1 + 0.05*sin(pi*x)*sin(pi*y)*sin(pi*z)

[data]
tau = 0.5 + 0.05*x
eps1 = 0.002
eps2 = 0.1
eps3 = 0.05
omega1 = 0.01 | 0 | 0
bc_u = 1.0

[solver]
require_certified = false
"""

MMS_INI = """\
[chart]
dim = 3
extents = 1.0 | 1.0 | 1.0
nodes = 7 | 7 | 7
bcs = dirichlet | dirichlet | dirichlet

[metric]
kind = flat

[data]
tau = 0.5
eps2 = 0.1
eps3 = 0.05
bc_u = 1.0

[mms]
phi = 1 + 0.1*sin(pi*x)*sin(pi*y)*sin(pi*z)
x = 0.02*sin(pi*x)*sin(pi*y)*sin(pi*z) | 0 | 0
"""


def test_criterion_11_determinism(tmp_path):
    """Two runs with identical seeds produce byte-identical artifacts."""
    solve_cfg = tmp_path / "solve.ini"
    solve_cfg.write_text(SOLVE_INI)
    mms_cfg = tmp_path / "mms.ini"
    mms_cfg.write_text(MMS_INI)
    outs = []
    for tag in ("a", "b"):
        so = tmp_path / f"solve_{tag}"
        mo = tmp_path / f"mms_{tag}"
        assert main(["solve", "--config", str(solve_cfg),
                     "--out", str(so), "--seed", "7"]) == 0
        assert main(["mms", "--config", str(mms_cfg),
                     "--out", str(mo), "--seed", "7"]) == 0
        outs.append((so, mo))
    (sa, ma), (sb, mb) = outs
    for da, db in ((sa, sb), (ma, mb)):
        names_a = sorted(p.name for p in da.iterdir())
        names_b = sorted(p.name for p in db.iterdir())
        assert names_a == names_b
        for name in names_a:
            assert (da / name).read_bytes() == (db / name).read_bytes(), \
                name
