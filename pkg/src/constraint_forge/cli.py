"""Command line interface.

Subcommands: solve, certify, eigen, verify, mms, sweep-tau0, bootstrap.
Configuration is a single INI file; artifacts (field CSVs, key-value
reports, manifest) are deterministic, so identical config and seed give
byte-identical output files.

Exit codes: 0 success, 2 hypothesis failure, 3 non-convergence,
4 configuration error.
"""

import argparse
import configparser
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .barriers import (certify_barriers, check_hypotheses, make_barriers,
                       sweep_tau0)
from .conformal_data import ConformalConstants, assemble_data
from .coupled import (solve_coupled_compact, solve_coupled_em,
                      solve_coupled_exhaustion)
from .errors import (ConfigurationError, ConstraintForgeError,
                     exit_code_for)
from .expressions import evaluate
from .geometry import (build_chart, build_exhaustion, curvature,
                       metric_from_generator)
from .io import (dump_field, dump_trace, load_field, write_manifest,
                 write_report)
from .lichnerowicz import coefficients_from_data
from .momentum import solve_momentum
from .operators import (assemble_conformal_killing_laplacian,
                        assemble_laplace_beltrami)
from .regularity import bootstrap_exponents
from .spectral import lambda1_conf, lambda1_schrodinger
from .verification import constraint_residuals, mms_forcing, reconstruct

THREADS_ENV = "CONSTRAINT_FORGE_THREADS"


# ---------------------------------------------------------------------------
# configuration


def _split_list(text, cast=str):
    return [cast(t.strip()) for t in text.split("|")] if text else []


def _split_matrix(text):
    return [[t.strip() for t in row.split("|")]
            for row in text.split(";")] if text else []


def load_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise ConfigurationError(f"config file {path!r} not readable")
    return cp


def build_problem(cp):
    """Chart, metric, curvature, constants and data from a parsed config."""
    try:
        sec = cp["chart"]
        dim = sec.getint("dim")
        extents = tuple(_split_list(sec.get("extents"), float))
        nodes = tuple(_split_list(sec.get("nodes"), int))
        bcs = tuple(_split_list(
            sec.get("bcs", "|".join(["dirichlet"] * dim))))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigurationError(f"invalid [chart] section: {exc}") from exc
    chart = build_chart(dim=dim, extents=extents, nodes=nodes, bcs=bcs)

    msec = cp["metric"] if cp.has_section("metric") else {}
    kind = msec.get("kind", "flat")
    if kind == "conformally_flat":
        metric = metric_from_generator(chart, kind,
                                       psi=msec.get("psi", "1"))
    elif kind == "custom":
        comp = _split_matrix(msec.get("components", ""))
        metric = metric_from_generator(chart, kind, components=comp)
    else:
        metric = metric_from_generator(chart, "flat")

    # dim 2 charts are useful for eigenvalue studies; the conformal
    # exponents themselves need n >= 3, so default to that floor
    n = cp.getint("constants", "n", fallback=max(dim, 3))
    constants = ConformalConstants(n)

    dsec = cp["data"] if cp.has_section("data") else {}
    dconf = {}
    for key in ("tau", "eps1", "eps2", "eps3", "bc_u", "bc_w", "em_q"):
        if key in dsec:
            dconf[key] = dsec.get(key)
    for key in ("omega1", "omega2", "bc_v", "em_v"):
        if key in dsec:
            dconf[key] = _split_list(dsec.get(key))
    for key in ("u", "em_f"):
        if key in dsec:
            dconf[key] = _split_matrix(dsec.get(key))
    data = assemble_data(chart, metric, dconf)
    return chart, metric, curvature(metric), constants, data


def _solver_opts(cp):
    sec = cp["solver"] if cp.has_section("solver") else {}
    opts = {
        "mode": sec.get("mode", "compact"),
        "route": sec.get("route", "linear_nonvacuum"),
        "yamabe_choice": sec.get("yamabe_choice", "R_tau"),
        "levels": int(sec.get("levels", "3")),
        "tol_outer": float(sec.get("tol_outer", "1e-8")),
        "tol_picard": float(sec.get("tol_picard", "1e-9")),
        "max_outer": int(sec.get("max_outer", "60")),
        "certify_mode": sec.get("certify_mode", "worst_case"),
        "c_cert": float(sec.get("c_cert", "1.0")),
        "require_certified": sec.get("require_certified",
                                     "false").lower() == "true",
    }
    for key in ("tol_outer", "tol_picard"):
        if not 0.0 < opts[key] < 1.0:
            raise ConfigurationError(f"{key} must be in (0, 1)")
    return opts


def _write_common(out, config_path, opts):
    out.mkdir(parents=True, exist_ok=True)
    config_text = Path(config_path).read_text()
    write_manifest(out / "manifest.json", config_text, {
        "tol_outer": opts["tol_outer"],
        "tol_picard": opts["tol_picard"],
    })


def _certificate_entries(pair, report=None):
    rows = [
        ("route", pair.route),
        ("l", pair.l), ("m", pair.m), ("cap_c", pair.cap_c),
        ("mode", pair.mode),
        ("margin_minus", pair.margin_minus),
        ("margin_plus", pair.margin_plus),
        ("ktilde2_bound", pair.ktilde2_bound),
        ("certified", pair.certified),
    ]
    if report is not None:
        rows.extend(sorted(report.as_dict().items()))
    return rows


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args):
    cp = load_config(args.config)
    chart, metric, curv, constants, data = build_problem(cp)
    opts = _solver_opts(cp)
    out = Path(args.out)
    pair = make_barriers(metric, data, constants, route=opts["route"],
                         scalar_curv=curv.scalar,
                         yamabe_choice=opts["yamabe_choice"])
    lam1 = lambda1_conf(metric).lam
    pair = certify_barriers(pair, metric, data, constants, lam1_conf=lam1,
                            mode="worst_case", scalar_curv=curv.scalar,
                            C_cert=opts["c_cert"])
    common = dict(tol=opts["tol_outer"], max_outer=opts["max_outer"],
                  scalar_curv=curv.scalar,
                  require_certified=opts["require_certified"],
                  picard_tol=opts["tol_picard"])
    if opts["mode"] == "exhaustion":
        ex = build_exhaustion(chart, opts["levels"])
        session = solve_coupled_exhaustion(metric, ex, data, pair,
                                           constants, **common)
    elif opts["mode"] == "em":
        session = solve_coupled_em(metric, data, pair, constants, **common)
    else:
        session = solve_coupled_compact(metric, data, pair, constants,
                                        **common)
    rec = session.records[-1]
    pair = certify_barriers(pair, metric, data, constants, lam1_conf=lam1,
                            mode="posteriori", X=rec.X,
                            scalar_curv=curv.scalar)
    _write_common(out, args.config, opts)
    dump_field(out / "phi.csv", chart, _embed_full(chart, session, "phi"),
               "phi")
    dump_field(out / "X.csv", chart, _embed_full(chart, session, "X"), "X")
    if rec.f is not None:
        dump_field(out / "f.csv", chart, _embed_full(chart, session, "f"),
                   "f")
    if rec.picard_trace is not None:
        dump_trace(out / "picard_trace.csv", rec.picard_trace)
    entries = [
        ("mode", session.mode),
        ("outer_iterations", rec.outer_iterations),
        ("outer_residuals", [float(r) for r in session.outer_residuals]),
        ("contraction", session.contraction()),
        ("cauchy_diffs", [float(d) for d in session.cauchy_diffs]),
        ("lambda1_conf", lam1),
    ]
    write_report(out / "session.txt", entries)
    write_report(out / "certificate.txt", _certificate_entries(pair))
    return 0


def _embed_full(chart, session, name):
    rec = session.records[-1]
    val = getattr(rec, name)
    if val.shape[:chart.dim] == tuple(chart.nodes):
        return val
    # exhaustion levels always end on the full box, so this is reached
    # only for aborted sessions; pad with zeros for inspection
    full_shape = tuple(chart.nodes) + val.shape[chart.dim:]
    out = np.zeros(full_shape)
    return out


def cmd_certify(args):
    cp = load_config(args.config)
    chart, metric, curv, constants, data = build_problem(cp)
    opts = _solver_opts(cp)
    out = Path(args.out)
    pair = make_barriers(metric, data, constants, route=opts["route"],
                         scalar_curv=curv.scalar,
                         yamabe_choice=opts["yamabe_choice"])
    lam1 = lambda1_conf(metric).lam
    if opts["certify_mode"] == "posteriori":
        ckl = assemble_conformal_killing_laplacian(metric)
        phi0 = 0.5 * (pair.phi_minus + pair.phi_plus)
        ms = solve_momentum(phi0, data, metric, ckl, constants, lam1=lam1)
        pair = certify_barriers(pair, metric, data, constants,
                                mode="posteriori", X=ms.X,
                                scalar_curv=curv.scalar)
    else:
        pair = certify_barriers(pair, metric, data, constants,
                                lam1_conf=lam1, mode="worst_case",
                                scalar_curv=curv.scalar,
                                C_cert=opts["c_cert"])
    ex = build_exhaustion(chart, opts["levels"])
    report = check_hypotheses(metric, curv, data, constants,
                              lam1_conf_est=lam1, exhaustion=ex)
    _write_common(out, args.config, opts)
    write_report(out / "certificate.txt",
                 _certificate_entries(pair, report))
    dump_field(out / "phi_minus.csv", chart, pair.phi_minus, "phi_minus")
    dump_field(out / "phi_plus.csv", chart, pair.phi_plus, "phi_plus")
    print("certified" if pair.certified else "not certified")
    return 0


def cmd_eigen(args):
    cp = load_config(args.config)
    chart, metric, curv, constants, data = build_problem(cp)
    which = cp.get("eigen", "operator", fallback="ckl")
    if which == "ckl":
        est = lambda1_conf(metric)
    elif which == "schrodinger":
        pot_text = cp.get("eigen", "potential",
                          fallback=None)
        if pot_text is not None:
            pot = evaluate(pot_text, chart.coords())
        else:
            pot = float(constants.c_n) * curv.scalar
        est = lambda1_schrodinger(metric, pot)
    else:
        raise ConfigurationError(f"unknown eigen operator {which!r}")
    out = Path(args.out)
    opts = _solver_opts(cp)
    _write_common(out, args.config, opts)
    write_report(out / "eigen.txt", [
        ("operator", est.operator), ("lambda1", est.lam),
        ("residual", est.residual), ("iterations", est.iterations)])
    print(f"lambda1 = {est.lam!r}")
    return 0


def cmd_verify(args):
    cp = load_config(args.config)
    chart, metric, curv, constants, data = build_problem(cp)
    fields_dir = Path(args.fields if args.fields else args.out)
    phi_path = fields_dir / "phi.csv"
    if not phi_path.exists():
        raise ConfigurationError(
            f"no phi.csv under {fields_dir}; run solve first or pass "
            "--fields")
    _, phi = load_field(phi_path)
    x_path = fields_dir / "X.csv"
    if x_path.exists():
        _, X = load_field(x_path)
    else:
        X = np.zeros(tuple(chart.nodes) + (chart.dim,))
    f = None
    f_path = fields_dir / "f.csv"
    if f_path.exists():
        _, f = load_field(f_path)
    ids = reconstruct(phi, X, data, metric, constants, f=f)
    rep = constraint_residuals(ids, data, constants)
    out = Path(args.out)
    opts = _solver_opts(cp)
    _write_common(out, args.config, opts)
    entries = sorted(rep.norms().items()) + [
        ("trace_defect", ids.trace_defect)]
    write_report(out / "residuals.txt", entries)
    dump_field(out / "hamiltonian_residual.csv", chart, rep.hamiltonian,
               "hamiltonian_residual")
    dump_field(out / "momentum_residual.csv", chart, rep.momentum,
               "momentum_residual")
    for key, val in entries:
        print(f"{key} = {val!r}")
    return 0


def cmd_mms(args):
    cp = load_config(args.config)
    chart, metric, curv, constants, data = build_problem(cp)
    if not cp.has_section("mms"):
        raise ConfigurationError("mms subcommand needs an [mms] section")
    sec = cp["mms"]
    targets = {"phi": sec.get("phi", "1"),
               "X": _split_list(sec.get("x", "")) or ["0"] * chart.dim}
    if "f" in sec:
        targets["f"] = sec.get("f")
    msec = dict(cp["metric"]) if cp.has_section("metric") else {}
    if "components" in msec:
        msec["components"] = _split_matrix(msec["components"])
    dconf = dict(cp["data"]) if cp.has_section("data") else {}
    for key in ("omega1", "omega2"):
        if key in dconf:
            dconf[key] = _split_list(dconf[key])
    for key in ("u", "em_f"):
        if key in dconf:
            dconf[key] = _split_matrix(dconf[key])
    if "em_v" in dconf:
        dconf["em_v"] = _split_list(dconf["em_v"])
    mf = mms_forcing(chart.dim, constants, targets, metric_config=msec,
                     data_config=dconf)
    ev = mf.evaluate(chart)
    out = Path(args.out)
    opts = _solver_opts(cp)
    _write_common(out, args.config, opts)
    for name, arr in sorted(ev.items()):
        dump_field(out / f"{name}.csv", chart, arr, name)
    print("wrote " + ", ".join(sorted(ev)))
    return 0


def cmd_sweep_tau0(args):
    cp = load_config(args.config)
    chart, metric, curv, constants, data = build_problem(cp)
    if not cp.has_section("sweep"):
        raise ConfigurationError("sweep-tau0 needs a [sweep] section")
    sec = cp["sweep"]
    tau_tilde = evaluate(sec.get("tau_tilde", "0"), chart.coords())
    values = [float(v) for v in sec.get("tau0_values").split("|")]
    target = float(sec.get("c_target"))
    rows = sweep_tau0(metric, curv, data, constants, tau_tilde, values,
                      target)
    out = Path(args.out)
    opts = _solver_opts(cp)
    _write_common(out, args.config, opts)
    lines = [("tau0_" + repr(t), [c, ok]) for t, c, ok in rows]
    passing = [t for t, _, ok in rows if ok]
    lines.append(("smallest_passing",
                  min(passing) if passing else "none"))
    write_report(out / "sweep.txt", lines)
    for t, c, ok in rows:
        print(f"tau0={t!r} minC={c!r} pass={ok}")
    return 0


def cmd_bootstrap(args):
    ladder = bootstrap_exponents(int(args.n))
    seq = " ".join(str(p) for p in ladder.sequence)
    print(f"{seq}, j_max={ladder.j_max}")
    if ladder.borderline:
        print("borderline: final exponent equals n/2")
    return 0


# ---------------------------------------------------------------------------
# entry point


def make_parser():
    p = argparse.ArgumentParser(
        prog="constraint-forge",
        description="Conformal-method Einstein constraint solver")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True,
                            help="INI configuration file")
        sp.add_argument("--out", default="out",
                        help="output directory for artifacts")
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (fallback: ${THREADS_ENV})")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed for randomized test vectors")

    common(sub.add_parser("solve", help="run the coupled solver"))
    common(sub.add_parser("certify",
                          help="build and certify barriers"))
    common(sub.add_parser("eigen", help="smallest-eigenvalue estimate"))
    sp = sub.add_parser("verify", help="constraint residuals of a solve")
    common(sp)
    sp.add_argument("--fields", default=None,
                    help="directory with phi.csv/X.csv dumps")
    common(sub.add_parser("mms", help="manufactured-solution forcings"))
    common(sub.add_parser("sweep-tau0", help="smallness-constant sweep"))
    sp = sub.add_parser("bootstrap", help="print the exponent ladder")
    sp.add_argument("n", help="spatial dimension")
    return p


_COMMANDS = {
    "solve": cmd_solve,
    "certify": cmd_certify,
    "eigen": cmd_eigen,
    "verify": cmd_verify,
    "mms": cmd_mms,
    "sweep-tau0": cmd_sweep_tau0,
    "bootstrap": cmd_bootstrap,
}


def _apply_threads(args):
    threads = getattr(args, "threads", None)
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else None
    if threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)


def main(argv=None):
    args = make_parser().parse_args(argv)
    _apply_threads(args)
    if hasattr(args, "seed"):
        np.random.seed(args.seed)
    try:
        return _COMMANDS[args.command](args)
    except ConstraintForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
