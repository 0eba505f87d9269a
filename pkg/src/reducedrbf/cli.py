"""Command-line interface: ``reducedrbf <subcommand> [--config cfg.json] [flags]``.

Settings come from the optional JSON config file, then from explicit flags,
which win.  Exit status is 0 on success, 1 on a solver failure and 2 on a
configuration or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness as H
from .geometry import GeometryError, get_domain
from .modelio import ModelFormatError, load_model, save_model
from .nodes import NodeSet, SelectionError, select_nodes
from .numerics import NoConvergence, NotPositiveDefinite, Singular
from .problems import PROBLEMS, ParameterError, get_case, get_problem
from .rbffd import StencilError, TruthSolveError, truth_solve
from .reduced import DegenerateBasis

SOLVER_ERRORS = (TruthSolveError, StencilError, NotPositiveDefinite, Singular, NoConvergence,
                 DegenerateBasis, SelectionError, H.BoundViolation, H.SweepError,
                 np.linalg.LinAlgError, ArithmeticError)
CONFIG_ERRORS = (H.ConfigError, ParameterError, ModelFormatError, GeometryError, KeyError, OSError, ValueError)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _grid(text: str) -> list[int]:
    try:
        return [int(v) for v in text.lower().split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a grid like 33x33, got {text!r}") from None


# flag dest -> ExperimentConfig field
_CONFIG_FLAGS = {
    "problem": "problem", "domain": "domain", "kernel": "kernel", "eps": "eps",
    "n_nodes": "n_nodes", "boundary_fraction": "boundary_fraction", "n_boundary_nodes": "n_boundary_nodes",
    "candidate_factor": "candidate_factor", "nloc": "n_loc", "selection": "selection",
    "xi_grid": "xi_grid", "test_grid": "test_grid", "validation_grid": "validation_grid",
    "n_max": "n_max", "tol": "tol", "seed": "seed", "case": "case", "out_dir": "out_dir",
}


def _add_common(p, *names):
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    opts = {
        "problem": dict(help="awave2d | diff2d | awave3d | diff3d"),
        "domain": dict(help="flower2d | blob3d (defaults to the problem's domain)"),
        "kernel": dict(help="imq | ga | mq | cubic | tps"),
        "eps": dict(type=float, help="kernel shape parameter"),
        "n_nodes": dict(type=int, help="total number of nodes N"),
        "boundary_fraction": dict(type=float, help="fraction of boundary nodes (default 0.15)"),
        "n_boundary_nodes": dict(type=int, help="number of boundary nodes; overrides boundary_fraction"),
        "candidate_factor": dict(type=float, help="candidates per selected node (default 3)"),
        "nloc": dict(type=int, help="stencil size (default 50 in 2D, 125 in 3D)"),
        "selection": dict(choices=["independent", "conditioned"], help="node selection mode (default independent)"),
        "xi_grid": dict(type=_grid, help="training grid, e.g. 33x33"),
        "test_grid": dict(type=_grid, help="independent test grid, e.g. 20x20"),
        "validation_grid": dict(type=_grid, help="truth validation grid, e.g. 50x50"),
        "n_max": dict(type=int, help="maximum reduced basis size"),
        "tol": dict(type=float, help="greedy stopping tolerance on max error estimate"),
        "seed": dict(type=int, help="random seed"),
        "case": dict(help="manufactured solution: test1 | test2 | zero"),
        "out_dir": dict(help="directory for CSV outputs"),
    }
    for n in names:
        p.add_argument("--" + n.replace("_", "-"), dest=n, **opts[n])


def _config(args) -> H.ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise H.ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise H.ConfigError("config file must hold a JSON object")
    for dest, key in _CONFIG_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            data[key] = v
    if "problem" not in data and data.get("domain"):
        # node selection only needs a domain; pick any problem posed on it
        match = [n for n, p in PROBLEMS.items() if p.domain == data["domain"]]
        if match:
            data["problem"] = match[0]
    return H.ExperimentConfig.from_dict(data).validate()


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, default=float))


def cmd_select_nodes(args) -> int:
    cfg = _config(args)
    ni = args.n_interior if args.n_interior is not None else cfg.n_interior
    nb = args.n_boundary if args.n_boundary is not None else cfg.n_boundary
    dom = get_domain(cfg.domain)
    f = cfg.candidate_factor
    cand = dom.generate_candidates(int(np.ceil(f * ni)), int(np.ceil(f * nb)))
    if args.candidates_out:
        cand.to_csv(args.candidates_out)
    nodes = select_nodes(cand, cfg.kernel_obj(), ni, nb, mode=cfg.selection)
    nodes.to_csv(args.out, header="config " + json.dumps(cfg.to_dict(), sort_keys=True))
    _print({"n_interior": ni, "n_boundary": nb, "candidates": len(cand.points), "out": args.out})
    return 0


def _load_nodes(cfg, path):
    if not path:
        return H.make_nodes(cfg)
    nodes = NodeSet.from_csv(path)
    cfg.n_nodes = nodes.n
    cfg.boundary_fraction = nodes.n_boundary / nodes.n
    cfg.n_boundary_nodes = nodes.n_boundary
    return nodes


def cmd_truth_solve(args) -> int:
    cfg = _config(args)
    prob = get_problem(cfg.problem)
    mu = prob.check_mu(args.mu)
    nodes = _load_nodes(cfg, args.nodes)
    if nodes.dim != prob.dim:
        raise H.ConfigError(f"nodes are {nodes.dim}D but {prob.name} is {prob.dim}D")
    setup = H.truth_setup(cfg, nodes)
    if args.manufactured:
        case = get_case(cfg.case, prob.dim)
        forcing = prob.manufactured_forcing(case, nodes)
    else:
        forcing = prob.rb_forcing(nodes)
    sol = truth_solve(prob.truth_system(mu, setup.bank, forcing, nodes.n_interior))
    info = {"mu": mu.tolist(), "n_nodes": nodes.n, "residual": sol.residual}
    if args.manufactured:
        info["rms_error"] = H.rms(sol.values - case.u(nodes.points))
    H.write_solution(args.out, nodes.points, sol.values,
                     header="config " + json.dumps({**cfg.to_dict(), "mu": mu.tolist()}, sort_keys=True))
    _print(info)
    return 0


def cmd_truth_convergence(args) -> int:
    cfg = _config(args)
    recs = H.run_truth_convergence(cfg, args.sweep, args.values)
    _print([r.__dict__ for r in recs])
    return 0


def cmd_offline(args) -> int:
    cfg = _config(args)
    nodes = _load_nodes(cfg, args.nodes)
    model = H.build_model(cfg, H.truth_setup(cfg, nodes))
    save_model(model, args.out)
    _print({"n": model.n, "max_delta": model.max_delta.tolist(),
            "selected_mu": model.selected_mus.tolist(), "out": args.out,
            "t_beta": model.config["t_beta"], "t_offline": model.config["t_offline"]})
    return 0


def cmd_online(args) -> int:
    model = load_model(args.model)
    mu = model.problem.check_mu(args.mu)
    sol = model.online_solve(mu, args.n, reconstruct=bool(args.out))
    if args.out:
        if model.nodes is None:
            raise H.ConfigError("model file carries no nodes; cannot write a nodal solution")
        H.write_solution(args.out, model.nodes.points, sol.values,
                         header="model " + json.dumps({"model": args.model, "mu": mu.tolist(), "n": len(sol.coefficients)}))
    _print({"mu": mu.tolist(), "coefficients": sol.coefficients.tolist(),
            "residual": sol.residual, "estimate": sol.estimate})
    return 0


def cmd_rb_convergence(args) -> int:
    cfg = _config(args)
    res = H.run_rb_convergence(cfg)
    _print({"max_delta": res.model.max_delta.tolist(), "max_true_error": res.true_error.tolist(),
            "selected_mu": res.model.selected_mus.tolist()})
    return 0


def _model_setup(args):
    model = load_model(args.model)
    fields = {k: v for k, v in model.config.items() if k in _CONFIG_FLAGS.values()}
    cfg = H.ExperimentConfig.from_dict(fields)
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    cfg.validate()
    return model, cfg, H.truth_setup(cfg, model.nodes)


def cmd_timing(args) -> int:
    if args.model:
        model, cfg, setup = _model_setup(args)
    else:
        cfg = _config(args)
        setup, model = H.truth_setup(cfg), None
    t = H.run_timing(cfg, args.n_use, model=model, setup=setup, n_truth=args.n_truth, n_online=args.n_online)
    _print(t.row())
    return 0


def cmd_bound_check(args) -> int:
    cfg = _config(args)
    recs = H.run_bound_check(cfg, args.samples)
    eff = [r.delta2 / r.error for r in recs if r.error > 0]
    _print({"checked": len(recs), "violations": 0,
            "effectivity_min": min(eff) if eff else None, "effectivity_max": max(eff) if eff else None})
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reducedrbf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    truth_flags = ("problem", "domain", "kernel", "eps", "n_nodes", "boundary_fraction", "n_boundary_nodes",
                   "candidate_factor", "nloc", "selection", "seed")
    rb_flags = truth_flags + ("xi_grid", "n_max", "tol")

    s = sub.add_parser("select-nodes", help="generate candidates and select nodes")
    _add_common(s, "domain", "kernel", "eps", "n_nodes", "boundary_fraction", "candidate_factor", "selection")
    s.add_argument("--n-interior", type=int, help="interior nodes (default from n_nodes)")
    s.add_argument("--n-boundary", type=int, help="boundary nodes (default from n_nodes)")
    s.add_argument("--candidates-out", help="also write the candidate set (x,y[,z],class)")
    s.add_argument("--out", required=True, help="nodes CSV (index,x,y[,z],class)")
    s.set_defaults(func=cmd_select_nodes)

    s = sub.add_parser("truth-solve", help="solve the RBF-FD truth system at one parameter")
    _add_common(s, *truth_flags, "case")
    s.add_argument("--mu", type=_floats, required=True, help="parameter, e.g. 1.0,0.5")
    s.add_argument("--nodes", help="nodes CSV; selected from the config when omitted")
    s.add_argument("--manufactured", action="store_true",
                   help="use the forcing of the manufactured case and report its error")
    s.add_argument("--out", required=True, help="solution CSV (index,x,y[,z],u)")
    s.set_defaults(func=cmd_truth_solve)

    s = sub.add_parser("truth-convergence", help="manufactured-solution error under N or n_loc refinement")
    _add_common(s, *truth_flags, "case", "validation_grid", "out_dir")
    s.add_argument("--sweep", choices=["N", "n_loc"], required=True)
    s.add_argument("--values", type=_ints, required=True, help="ascending values, e.g. 250,500,1000")
    s.set_defaults(func=cmd_truth_convergence)

    s = sub.add_parser("offline", help="greedy offline stage; writes a model file")
    _add_common(s, *rb_flags)
    s.add_argument("--nodes", help="nodes CSV; selected from the config when omitted")
    s.add_argument("--out", required=True, help="model file")
    s.set_defaults(func=cmd_offline)

    s = sub.add_parser("online", help="online solve from a model file")
    s.add_argument("--model", required=True)
    s.add_argument("--mu", type=_floats, required=True)
    s.add_argument("--n", type=int, help="basis functions to use (default all)")
    s.add_argument("--out", help="reconstructed solution CSV (index,x,y[,z],u)")
    s.set_defaults(func=cmd_online)

    s = sub.add_parser("rb-convergence", help="error estimate history and true error on a test grid")
    _add_common(s, *rb_flags, "test_grid", "out_dir")
    s.set_defaults(func=cmd_rb_convergence)

    s = sub.add_parser("timing", help="truth versus online wall times")
    _add_common(s, *rb_flags, "out_dir")
    s.add_argument("--model", help="model file; trained from the config when omitted")
    s.add_argument("--n-use", type=int, default=12)
    s.add_argument("--n-truth", type=int, default=30)
    s.add_argument("--n-online", type=int, default=1000)
    s.set_defaults(func=cmd_timing)

    s = sub.add_parser("bound-check", help="verify the certified bound at random parameters (N <= 400)")
    _add_common(s, *rb_flags, "out_dir")
    s.add_argument("--samples", type=int, default=50)
    s.set_defaults(func=cmd_bound_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
