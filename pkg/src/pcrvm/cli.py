"""Command-line entry point: ``pcrvm <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data or format error,
3 non-convergence when ``--strict`` is given.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys

import numpy as np

from . import cs, rvm
from .basis import RULES, build_index_set, evaluate_design
from .bench import DEFAULT_GRIDS, StudyConfig, make_dataset, make_instance, run_study, study_seeds
from .io import DataError, dump_json, load_model, read_dataset, read_inputs, write_dataset, write_text
from .metrics import l2_distance, moments, predict, r_squared, relative_mse, sparsity_index

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_basis_args(p):
    p.add_argument("--order", "-P", type=int, default=4, help="truncation order P (default 4)")
    p.add_argument("--dim", "-K", type=int, default=None, help="input dimension; defaults to the data's")
    p.add_argument("--truncation", choices=RULES, default="TD", type=str.upper)
    p.add_argument("--q", type=float, default=None, help="quasi-norm exponent for LQ truncation")


def _add_prior_args(p):
    d = rvm.PriorConfig()
    f = rvm.FitConfig()
    for name in ("a", "b", "c", "d", "u", "w"):
        p.add_argument(f"--{name}", type=float, default=getattr(d, name))
    p.add_argument("--tol", type=float, default=f.delta, help="relative change tolerance")
    p.add_argument("--pi-tol", type=float, default=f.delta_pi, help="success-probability tolerance gating pruning")
    p.add_argument("--pi-threshold", type=float, default=f.eps_pi, help="pruning threshold on success probabilities")
    p.add_argument("--max-sweeps", type=_positive_int, default=f.max_sweeps)
    p.add_argument("--warm-start", type=int, default=f.warm_start, help="warm-up sweep budget (0 disables)")


def _add_cs_args(p, prefix=""):
    d = cs.CsConfig()
    p.add_argument(f"--{prefix}gamma", type=float, default=d.gamma)
    p.add_argument(f"--{prefix}max-iters", type=_positive_int, default=d.max_iters)
    p.add_argument(f"--{prefix}cs-tol" if prefix else "--tol", type=float, default=d.tol, dest="cs_tol")
    p.add_argument(f"--{prefix}epsilon", type=float, default=d.epsilon, help="residual ball radius (0: equality)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcrvm", description="Sparse polynomial chaos surrogates")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("synth", help="sample a seeded O'Hagan benchmark dataset")
    p.add_argument("--dim", "-K", type=_positive_int, default=10)
    p.add_argument("--n", "-N", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, default=0, help="instance seed")
    p.add_argument("--data-seed", type=int, default=None, help="input sampling seed (default: derived from --seed)")
    p.add_argument("--out", "-o", default="-")
    p.add_argument("--instance-out", default=None, help="sidecar JSON with the instance (default: OUT.instance.json)")

    p = sub.add_parser("fit-rvm", help="fit a sparse PCE by variational RVM")
    p.add_argument("--data", required=True)
    _add_basis_args(p)
    _add_prior_args(p)
    p.add_argument("--strict", action="store_true", help="exit 3 if the fit does not converge")
    p.add_argument("--out", "-o", default="-")

    p = sub.add_parser("fit-cs", help="fit a PCE by l1 basis pursuit")
    p.add_argument("--data", required=True)
    _add_basis_args(p)
    _add_cs_args(p)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", "-o", default="-")

    p = sub.add_parser("predict", help="evaluate a fitted model")
    p.add_argument("--model", required=True)
    p.add_argument("--inputs", required=True)
    p.add_argument("--out", "-o", default="-")

    p = sub.add_parser("compare", help="compare two models on validation data")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--validation", required=True)
    p.add_argument("--pi-threshold", type=float, default=0.95, help="success probability counted as significant")
    p.add_argument("--out", "-o", default="-")

    p = sub.add_parser("moments", help="first four moments of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--n-mc", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", default="-")

    p = sub.add_parser("study", help="run a vary_c / vary_P / vary_N study")
    p.add_argument("--kind", required=True, choices=sorted(DEFAULT_GRIDS))
    p.add_argument("--grid", default=None, help="comma-separated grid values")
    p.add_argument("--dim", "-K", type=_positive_int, default=10)
    p.add_argument("--order", "-P", type=int, default=4)
    p.add_argument("--truncation", choices=RULES, default="TD", type=str.upper)
    p.add_argument("--n", "-N", type=_positive_int, default=600)
    p.add_argument("--c", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-valid", type=_positive_int, default=10_000)
    p.add_argument("--n-mc", type=int, default=100_000)
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--methods", default="rvm,cs")
    p.add_argument("--max-sweeps", type=_positive_int, default=rvm.FitConfig().max_sweeps)
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out", "-o", default="-", help="StudyReport JSON")
    p.add_argument("--csv", default=None, help="also write a flat CSV here")
    p.add_argument("--table", default=None, help="also write the rendered table here")
    return parser


def _basis_for(args, K):
    if args.dim is not None and args.dim != K:
        raise DataError(f"--dim {args.dim} does not match the data's {K} input columns")
    if args.order < 0:
        raise UsageError("--order must be >= 0")
    try:
        return build_index_set(K, args.order, args.truncation, args.q)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_synth(args):
    if args.n < 1:
        raise UsageError("--n must be >= 1")
    inst = make_instance(args.dim, args.seed)
    data_seed = study_seeds(args.seed)["train"] if args.data_seed is None else args.data_seed
    Xi, y = make_dataset(inst, args.n, data_seed)
    buf = io.StringIO()
    write_dataset(buf, Xi, y)
    write_text(buf.getvalue(), args.out)
    sidecar = args.instance_out or (None if args.out == "-" else args.out + ".instance.json")
    if sidecar:
        dump_json({**inst.to_dict(), "data_seed": int(data_seed), "N": int(args.n)}, sidecar, indent=1)
    return EXIT_OK


def cmd_fit_rvm(args):
    data = read_dataset(args.data)
    spec = _basis_for(args, data.K)
    try:
        prior = rvm.PriorConfig(a=args.a, b=args.b, c=args.c, d=args.d, u=args.u, w=args.w)
        config = rvm.FitConfig(
            delta=args.tol,
            delta_pi=args.pi_tol,
            eps_pi=args.pi_threshold,
            max_sweeps=args.max_sweeps,
            warm_start=args.warm_start,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    res = rvm.fit_design(evaluate_design(spec, data.Xi), data.y, prior, config)
    out = res.to_dict()
    out["metadata"]["data"] = data.provenance()
    dump_json(out, args.out)
    if args.strict and not res.converged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_fit_cs(args):
    data = read_dataset(args.data)
    spec = _basis_for(args, data.K)
    try:
        config = cs.CsConfig(gamma=args.gamma, max_iters=args.max_iters, tol=args.cs_tol, epsilon=args.epsilon)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    try:
        pce = cs.fit_cs_design(evaluate_design(spec, data.Xi), data.y, config)
    except np.linalg.LinAlgError as exc:
        raise DataError(str(exc)) from exc
    pce.metadata["data"] = data.provenance()
    dump_json(pce.to_dict(), args.out)
    if args.strict and not pce.metadata["converged"]:
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_predict(args):
    pce = load_model(args.model)
    Xi = read_inputs(args.inputs, pce.spec.K)
    pred = predict(pce, Xi)
    write_text("y\n" + "".join(f"{float(v)!r}\n" for v in pred), args.out)
    return EXIT_OK


def _sparsity(pce, threshold):
    return sparsity_index(pce) if pce.source == "cs" else sparsity_index(pce, threshold)


def cmd_compare(args):
    a, b = load_model(args.model_a), load_model(args.model_b)
    if a.spec != b.spec:
        raise DataError("models are defined on different bases")
    data = read_dataset(args.validation)
    if data.K != a.spec.K:
        raise DataError(f"validation data has {data.K} inputs, models expect {a.spec.K}")
    pa, pb = predict(a, data.Xi), predict(b, data.Xi)
    out = {
        "mse_A": relative_mse(a, data.Xi, data.y),
        "mse_B": relative_mse(b, data.Xi, data.y),
        "l2_sq_distance": l2_distance(a, b),
        "r2_A": r_squared(pa, data.y),
        "r2_B": r_squared(pb, data.y),
        "sparsity_A": _sparsity(a, args.pi_threshold),
        "sparsity_B": _sparsity(b, args.pi_threshold),
    }
    dump_json(out, args.out, indent=1)
    return EXIT_OK


def cmd_moments(args):
    pce = load_model(args.model)
    dump_json(moments(pce, n_mc=args.n_mc, seed=args.seed), args.out, indent=1)
    return EXIT_OK


def cmd_study(args):
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    if not methods or set(methods) - {"rvm", "cs"}:
        raise UsageError("--methods takes a comma list of rvm and cs")
    grid = None
    if args.grid:
        try:
            grid = [float(v) for v in args.grid.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --grid: {exc}") from exc
    config = StudyConfig(
        K=args.dim,
        seed=args.seed,
        N=args.n,
        P=args.order,
        c=args.c,
        rule=args.truncation,
        n_valid=args.n_valid,
        n_mc=args.n_mc,
        n_boot=args.n_boot,
        methods=methods,
        fit={"max_sweeps": args.max_sweeps},
    )
    report = run_study(args.kind, grid, config, jobs=args.jobs)
    write_text(report.to_json(indent=1) + "\n", args.out)
    if args.csv:
        write_text(report.to_csv(), args.csv)
    if args.table:
        write_text(report.render() + "\n", args.table)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "fit-rvm": cmd_fit_rvm,
    "fit-cs": cmd_fit_cs,
    "predict": cmd_predict,
    "compare": cmd_compare,
    "moments": cmd_moments,
    "study": cmd_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"pcrvm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, rvm.NumericalError) as exc:
        print(f"pcrvm: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"pcrvm: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
