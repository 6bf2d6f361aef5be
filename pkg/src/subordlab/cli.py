"""Command line entry point.

Subcommands print JSON to stdout; experiment subcommands also write a CSV
(``t, mean, se, n``) and a JSON summary into ``--out-dir``.  The exit status
is nonzero exactly when a verdict fails.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bernstein, harness, pathlab, spectral, subordinator
from .diffusion import TWO_PI, model_from_dict


def _family(args):
    return bernstein.from_tag(args.family, args.alpha)


def _model_from_args(args) -> dict:
    spec = {"kind": args.model, "d": args.d}
    if args.model == "circle":
        spec["circumference"] = args.circumference
    elif args.model == "torus":
        spec["side"] = args.circumference
    elif args.model == "interval":
        spec["length"] = args.length
    else:
        spec.update(kappa=args.kappa, q=args.q)
    return spec


def _config(args) -> harness.ExperimentConfig:
    if args.config:
        cfg = harness.ExperimentConfig.load(args.config)
    else:
        cfg = harness.ExperimentConfig()
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
    cfg = harness.ExperimentConfig.from_dict(d)
    return cfg.fast() if args.fast else cfg


def _emit(obj, args, name=None):
    text = json.dumps(harness.finite_json(obj), indent=2, default=harness._jsonable, allow_nan=False)
    print(text)
    if name and args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        with open(os.path.join(args.out_dir, name), "w") as fh:
            fh.write(text)


def cmd_classify(args) -> int:
    B = _family(args)
    rep = bernstein.classify(B, args.class_alpha if args.class_alpha is not None else (args.alpha or 0.0),
                             pairs=[(args.d, args.t)])
    _emit(rep.to_dict(), args, "classify.json")
    return 0


def cmd_validate(args) -> int:
    B = _family(args)
    rng = subordinator.replica_rng(args.seed or 0)
    chk = subordinator.validate_laplace(B, args.lam, args.t, args.n, rng)
    out = chk.to_dict()
    out["pass"] = bool(abs(chk.z) <= 4.0)
    _emit(out, args, "validate.json")
    return 0 if out["pass"] else 1


def cmd_spectral(args) -> int:
    model = model_from_dict(_model_from_args(args))
    spec = spectral.spectral_data(model)
    res = spectral.limit_sum(spec, _family(args), float(args.coef), args.tol)
    _emit(res.to_dict(), args, "spectral.json")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    model = cfg.build_model()
    B = cfg.build_bernstein()
    T = float(args.horizon or max(cfg.t_grid))
    rng = subordinator.replica_rng(cfg.seed, 0, 0)
    path = pathlab.subordinated_path(model, B, T, cfg.obs_dt, cfg.fine_dt, cfg.initial, rng)
    out_dir = args.out_dir or cfg.output or "."
    os.makedirs(out_dir, exist_ok=True)
    file = os.path.join(out_dir, f"path.{args.format}")
    pathlab.save_path(path, file)
    _emit({"path": file, "points": int(path.obs_times.size), "horizon": T,
           "S_T": float(path.sub_path.values[-1])}, args)
    return 0


def cmd_rates(args) -> int:
    cfg = _config(args)
    cfg.validate(for_fit=True)
    table = harness.run_experiment(cfg)
    verdicts = {}
    extra = {}
    try:
        fit = harness.fit_exponent(table)
        table.slope, table.slope_se = fit.slope, fit.stderr
        table.diagnostics = fit.to_dict()
        model = cfg.build_model()
        if model.kind in ("euclidean", "ou"):
            B = cfg.build_bernstein()
            expo, regime, logf = harness.theoretical_exponent(model.d, model.q, harness.upper_index(B))
            lo, hi = cfg.slope_bracket or (expo - 0.35, expo + 0.25)
            extra["theory"] = {"exponent": expo, "regime": regime, "log_factor": logf, "bracket": [lo, hi]}
            verdicts["slope_in_bracket"] = bool(lo <= fit.slope <= hi)
    except ValueError as exc:
        verdicts["fit"] = False
        extra["fit_error"] = str(exc)
    if any(r.error for r in table.rows):
        verdicts["rows_ok"] = False
    harness.write_outputs(table, args.out_dir or cfg.output or ".", "rates", verdicts, extra)
    _emit(table.summary(verdicts) | extra, args)
    return 0 if all(verdicts.values()) else 1


def cmd_sandwich(args) -> int:
    cfg = _config(args)
    rep = harness.sandwich_check(cfg)
    _emit(rep, args, "sandwich.json")
    return 0 if rep["verdict"] in ("inside", "divergent") else 1


def cmd_lower_bounds(args) -> int:
    cfg = _config(args)
    rep = harness.lower_bound_suite(cfg)
    _emit(rep, args, "lower_bounds.json")
    return 0 if all(rep["verdicts"].values()) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--fast", action="store_true", help="reduced replica budget")
    common.add_argument("--out-dir", default=None)

    fam = argparse.ArgumentParser(add_help=False)
    fam.add_argument("--family", "--B", dest="family", required=True, help="linear, stable, b1, b2, gamma or e.g. 'stable(0.5)'")
    fam.add_argument("--alpha", type=float, default=None)

    p = argparse.ArgumentParser(prog="subordlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", parents=[common, fam], help="class membership report")
    c.add_argument("--class-alpha", type=float, default=None,
                   help="exponent for the class tests (defaults to --alpha)")
    c.add_argument("--d", type=int, default=1)
    c.add_argument("--t", type=float, default=1.0)
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("validate", help="conformance checks")
    vs = v.add_subparsers(dest="target", required=True)
    vv = vs.add_parser("subordinator", parents=[common, fam], help="Laplace transform z-score")
    vv.add_argument("--lambda", dest="lam", type=float, required=True)
    vv.add_argument("--t", type=float, required=True)
    vv.add_argument("-n", type=int, default=100_000)
    vv.set_defaults(func=cmd_validate)

    s = sub.add_parser("spectral", parents=[common, fam], help="limit sum with certified tail")
    s.add_argument("--model", default="circle", choices=["circle", "torus", "interval", "ou", "euclidean"])
    s.add_argument("--d", type=int, default=1)
    s.add_argument("--circumference", type=float, default=TWO_PI)
    s.add_argument("--length", type=float, default=1.0)
    s.add_argument("--kappa", type=float, default=1.0)
    s.add_argument("--q", type=float, default=2.0)
    s.add_argument("--coef", type=int, choices=[2, 8], default=2)
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_spectral)

    for name, fn, helptext in [("simulate", cmd_simulate, "write one subordinated path"),
                               ("rates", cmd_rates, "rate table and fitted exponent"),
                               ("sandwich", cmd_sandwich, "limit-sum bracket check"),
                               ("lower-bounds", cmd_lower_bounds, "lower-bound suite")]:
        e = sub.add_parser(name, parents=[common], help=helptext)
        e.add_argument("--config", default=None, help="experiment config (JSON)")
        if name == "simulate":
            e.add_argument("--horizon", type=float, default=None)
            e.add_argument("--format", choices=["csv", "npz"], default="csv")
        e.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
