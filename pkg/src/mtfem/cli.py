"""Command line interface: ``mtfem verify | convergence | adaptive``."""

import argparse
import configparser
import logging
import os
import sys

from .errors import InvalidArgumentError

log = logging.getLogger("mtfem")

# flags that may also come from a config file ([mtfem] section or bare keys)
_CONFIG_KEYS = {
    "quad_degree": int,
    "solver": str,
    "out": str,
    "element": str,
    "levels": int,
    "theta": float,
    "budget": int,
    "iota": float,
    "no_timings": lambda s: s.strip().lower() in ("1", "true", "yes", "on"),
    "log_level": str,
}


def read_config(path):
    """Read ``key = value`` pairs; a missing section header is allowed."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        text = fh.read()
    if not text.lstrip().startswith("["):
        text = "[mtfem]\n" + text
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            k = key.replace("-", "_")
            if k not in _CONFIG_KEYS:
                raise InvalidArgumentError(f"unknown config key {key!r} in {path}")
            out[k] = _CONFIG_KEYS[k](raw)
    return out


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quad-degree", type=int, help="volume quadrature degree (default: 2 x shape degree)")
    common.add_argument("--solver", choices=("direct", "iterative"), help="linear solver (default: direct)")
    common.add_argument("--out", help="output directory (default: results)")
    common.add_argument("--config", help="key=value file providing defaults for the flags")
    common.add_argument("--log-level", help="logging level (default: INFO)")

    p = argparse.ArgumentParser(prog="mtfem", description="Hessian-exact continuous finite elements: certification and experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", parents=[common], help="run the element and space certification suite")
    v.add_argument("--quick", action="store_true", help="fewer random trials and quadrature degrees")

    c = sub.add_parser("convergence", parents=[common], help="uniform refinement study")
    c.add_argument("experiment")
    c.add_argument("--levels", type=int, help="number of meshes")
    c.add_argument("--element", help="element name, e.g. specht2, v2d3, v2d4, v3d5")
    c.add_argument("--no-timings", action="store_true", default=None, help="leave the seconds column empty")

    a = sub.add_parser("adaptive", parents=[common], help="adaptive refinement run (2D)")
    a.add_argument("experiment")
    a.add_argument("--theta", type=float, help="Dörfler parameter (default: 0.5)")
    a.add_argument("--budget", type=int, help="stop after this many DOFs (default: 50000)")
    a.add_argument("--element", help="element name (default: v2d3)")
    a.add_argument("--iota", type=float, help="boundary-layer parameter of the singular problem")
    a.add_argument("--no-timings", action="store_true", default=None, help="leave the seconds column empty")
    return p


def _resolve(args):
    conf = read_config(args.config) if args.config else {}
    resolved = dict(conf)
    for k, v in vars(args).items():
        if v is not None:
            resolved[k] = v
    resolved.setdefault("solver", "direct")
    resolved.setdefault("out", "results")
    resolved.setdefault("log_level", "INFO")
    return argparse.Namespace(**resolved)


def _cmd_verify(args):
    from . import certify

    results = certify.run_all(quick=getattr(args, "quick", False))
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _cmd_convergence(args):
    from .experiments import run_convergence

    rec = run_convergence(
        args.experiment,
        element=getattr(args, "element", None),
        levels=getattr(args, "levels", None),
        solver=args.solver,
        quad_degree=getattr(args, "quad_degree", None),
    )
    os.makedirs(args.out, exist_ok=True)
    name = f"{rec.experiment}_{rec.element.replace('(', '').replace(')', '')}.csv"
    path = rec.to_csv(os.path.join(args.out, name), timings=not getattr(args, "no_timings", False))
    _print_record(rec)
    print(f"wrote {path}")
    return 1 if rec.failed else 0


def _cmd_adaptive(args):
    from .experiments import get_experiment, run_adaptive

    exp = get_experiment(args.experiment)
    kw = {}
    if getattr(args, "iota", None) is not None:
        if exp.name != "nondiv-2d-singular":
            raise InvalidArgumentError("--iota only applies to nondiv-2d-singular")
        kw["iota"] = args.iota
    snap_dir = os.path.join(args.out, f"{exp.name}_vtk")
    os.makedirs(snap_dir, exist_ok=True)
    rec, files = run_adaptive(
        exp,
        theta=getattr(args, "theta", None) or 0.5,
        budget=getattr(args, "budget", None) or 50000,
        element=getattr(args, "element", None) or "v2d3",
        solver=args.solver,
        quad_degree=getattr(args, "quad_degree", None),
        out_dir=snap_dir,
        problem_kw=kw,
    )
    path = rec.to_csv(os.path.join(args.out, f"{exp.name}_adaptive.csv"), timings=not getattr(args, "no_timings", False))
    _print_record(rec)
    print(f"wrote {path} and {len(files)} VTK snapshots in {snap_dir}")
    return 1 if rec.failed else 0


def _print_record(rec):
    print(f"{rec.experiment} / {rec.element}")
    print(f"{'level':>5} {'h_or_dof':>12} {'ndof':>8} {'eL2':>11} {'rate':>6} {'eH2':>11} {'rate':>6} {'eta':>11}")
    for r in rec.rows:
        print(
            f"{r['level']:>5} {r['h_or_dof']:>12.5g} {r['ndof']:>8} {r['eL2']:>11.3e} {r['rateL2']:>6.2f}"
            f" {r['eH2']:>11.3e} {r['rateH2']:>6.2f} {r['eta']:>11.3e}"
        )


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args = _resolve(args)
        logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO), format="%(levelname)s %(name)s: %(message)s")
        handler = {"verify": _cmd_verify, "convergence": _cmd_convergence, "adaptive": _cmd_adaptive}[args.command]
        return handler(args)
    except InvalidArgumentError as exc:
        print(f"mtfem: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
