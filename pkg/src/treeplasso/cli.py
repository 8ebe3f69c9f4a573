"""Command-line front end.

Exit status: 0 on success, 2 on invalid input or configuration, 3 when a
solver did not converge (all artifacts are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .model import DesignData, DimensionError, Hyperparameters, RhoRule, Standardizer, objective, predict
from .path import (
    PathSpec,
    evaluate,
    fit_cv,
    fit_model,
    fit_path,
    lambda_max,
    lambda_path,
)
from .simulate import Scenario, SimConfig, simulate
from .tree import ResponseTree, TreeError, cluster_responses

log = logging.getLogger("treeplasso")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 2, 3

# every tunable with its default; config files and flags address these keys
DEFAULTS = {
    "x": None,
    "z": None,
    "y": None,
    "tree": None,
    "out": ".",
    "config": None,
    "seed": 0,
    "threads": 1,
    "alpha": 0.5,
    "c1": 1.0,
    "c2": 1.0,
    "lam": None,
    "lambda_ratio": None,
    "n_lambda": 50,
    "lambda_min_ratio": 0.01,
    "folds": 5,
    "rule": "min",
    "rho_init": 1.0,
    "rho_adapt": "residual_balance",
    "eps_abs": 1e-4,
    "eps_rel": 1e-3,
    "max_iter": 5000,
    "dense_theta": False,
    "test_x": None,
    "test_z": None,
    "test_y": None,
    "truth": None,
    "coef": None,
    "scenario": "single",
    "n": None,
    "p": None,
    "noise": None,
    "test_n": 500,
    "val_n": 0,
    "verbose": False,
}


class UsageError(Exception):
    pass


def _add(parser, *flags, key, help, **kw):
    default = DEFAULTS[key]
    if not kw.get("action"):
        help = f"{help} (default: {default})"
    parser.add_argument(*flags, dest=key, default=argparse.SUPPRESS, help=help, **kw)


def _common(p):
    _add(p, "--config", key="config", help="flat JSON object of option values; flags override it")
    _add(p, "--out", key="out", help="output directory")
    _add(p, "--seed", key="seed", type=int, help="random seed (folds)")
    _add(p, "--threads", key="threads", type=int, help="worker threads for CV folds")
    _add(p, "-v", "--verbose", key="verbose", action="store_true", help="log progress to stderr")


def _data(p, need_y=True):
    _add(p, "--x", key="x", help="X.csv (N x p, header row)")
    _add(p, "--z", key="z", help="Z.csv (N x K, header row)")
    if need_y:
        _add(p, "--y", key="y", help="Y.csv (N x D, header row)")


def _model(p):
    _add(p, "--tree", key="tree", help="response tree JSON; clusters Y when omitted")
    _add(p, "--alpha", key="alpha", type=float, help="mixing between group and l1 interaction penalties")
    _add(p, "--c1", key="c1", type=float, help="lambda1 = c1 * lambda (internal tree nodes)")
    _add(p, "--c2", key="c2", type=float, help="lambda2 = c2 * lambda (leaves)")
    _add(p, "--rho-init", key="rho_init", type=float, help="initial ADMM penalty")
    _add(p, "--rho-adapt", key="rho_adapt", choices=[r.value for r in RhoRule], help="penalty update rule")
    _add(p, "--eps-abs", key="eps_abs", type=float, help="absolute stopping tolerance")
    _add(p, "--eps-rel", key="eps_rel", type=float, help="relative stopping tolerance")
    _add(p, "--max-iter", key="max_iter", type=int, help="ADMM iteration cap")
    _add(p, "--dense-theta", key="dense_theta", action="store_true", help="write every interaction, zeros included")


def _path(p):
    _add(p, "--n-lambda", key="n_lambda", type=int, help="length of the lambda path")
    _add(p, "--lambda-min-ratio", key="lambda_min_ratio", type=float, help="smallest lambda as a fraction of lambda_max")


def _test(p):
    _add(p, "--test-x", key="test_x", help="held-out X.csv for test metrics")
    _add(p, "--test-z", key="test_z", help="held-out Z.csv")
    _add(p, "--test-y", key="test_y", help="held-out Y.csv")
    _add(p, "--truth", key="truth", help="true coefficients JSON (sensitivity/specificity)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treeplasso", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit at one lambda")
    _data(p), _model(p), _common(p), _test(p)
    _add(p, "--lambda", key="lam", type=float, help="penalty level lambda")
    _add(p, "--lambda-ratio", key="lambda_ratio", type=float, help="lambda as a fraction of lambda_max (used when --lambda is absent)")

    p = sub.add_parser("path", help="fit the whole lambda path with warm starts")
    _data(p), _model(p), _path(p), _common(p)

    p = sub.add_parser("cv", help="k-fold cross-validation and refit at the selected lambda")
    _data(p), _model(p), _path(p), _common(p), _test(p)
    _add(p, "--folds", key="folds", type=int, help="number of folds")
    _add(p, "--rule", key="rule", choices=["min", "1se"], help="lambda selection rule")

    p = sub.add_parser("simulate", help="write a simulated data set")
    _common(p)
    _add(p, "--scenario", key="scenario", choices=[s.value for s in Scenario], help="simulation design")
    _add(p, "--n", key="n", type=int, help="training rows (scenario default when omitted)")
    _add(p, "--p", key="p", type=int, help="covariates (scenario default when omitted)")
    _add(p, "--noise", key="noise", type=float, help="noise scale (scenario default when omitted)")
    _add(p, "--test-n", key="test_n", type=int, help="test rows")
    _add(p, "--val-n", key="val_n", type=int, help="validation rows")

    p = sub.add_parser("predict", help="predict from a coefficients.json")
    _data(p, need_y=False), _common(p)
    _add(p, "--coef", key="coef", help="coefficients.json written by fit or cv")
    return ap


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (flags win)."""
    flags = {k: v for k, v in vars(args).items() if k != "command"}
    cfg = {}
    path = flags.get("config")
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise UsageError(f"{path}: cannot open config ({exc.strerror})") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}, line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        if not isinstance(cfg, dict):
            raise UsageError(f"{path}: config must be a flat JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        bad = sorted(set(cfg) - set(DEFAULTS))
        if bad:
            raise UsageError(f"{path}: unknown config keys {bad}")
        nested = [k for k, v in cfg.items() if isinstance(v, (dict, list))]
        if nested:
            raise UsageError(f"{path}: config values must be scalars, not {nested}")
    opts = {**DEFAULTS, **cfg, **flags}
    opts["command"] = args.command
    return opts


def _require(opts, *keys):
    missing = [k for k in keys if opts.get(k) in (None, "")]
    if missing:
        raise UsageError(f"{opts['command']}: missing required option(s) " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _hyper(opts) -> Hyperparameters:
    return Hyperparameters(
        alpha=float(opts["alpha"]),
        rho_init=float(opts["rho_init"]),
        eps_abs=float(opts["eps_abs"]),
        eps_rel=float(opts["eps_rel"]),
        max_iter=int(opts["max_iter"]),
        rho_adapt=RhoRule(opts["rho_adapt"]),
    )


def _spec(opts) -> PathSpec:
    return PathSpec(
        n_lambda=int(opts["n_lambda"]),
        lambda_min_ratio=float(opts["lambda_min_ratio"]),
        alpha=float(opts["alpha"]),
        c1=float(opts["c1"]),
        c2=float(opts["c2"]),
    )


def _tree(opts, std: DesignData) -> ResponseTree | None:
    if std.D == 1:
        if opts["tree"]:
            raise UsageError("a response tree was given but Y has a single column")
        return None
    if opts["tree"]:
        tree = io.read_tree(opts["tree"])
        if tree.D != std.D:
            raise UsageError(f"tree covers {tree.D} responses but Y has {std.D} columns")
        return tree
    return cluster_responses(std.Y)


def _outdir(opts) -> Path:
    out = Path(opts["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out} ({exc.strerror})") from None
    return out


def _test_metrics(opts, coef, ds: io.Dataset) -> dict:
    out = {}
    if opts["test_x"] or opts["test_z"] or opts["test_y"]:
        _require(opts, "test_x", "test_z", "test_y")
        test = io.ingest(opts["test_x"], opts["test_z"], opts["test_y"]).data
        coef.check_against(test)
        truth = io.read_coefficients(opts["truth"])[0] if opts["truth"] else None
        out["test"] = evaluate(truth, coef, test).to_dict()
    elif opts["truth"]:
        truth = io.read_coefficients(opts["truth"])[0]
        nz_t, nz_f = truth.beta != 0, coef.beta != 0
        out["truth_recovery"] = {
            "sensitivity": float((nz_f & nz_t).sum() / max(nz_t.sum(), 1)),
            "specificity": float((~nz_f & ~nz_t).sum() / max((~nz_t).sum(), 1)),
        }
    return out


def _write_fit(out: Path, opts, ds: io.Dataset, coef, tree, meta: dict):
    io.write_json(out / "coefficients.json", io.coef_to_dict(
        coef, ds.x_names, ds.z_names, ds.y_names,
        tree=None if tree is None else tree.to_dict(), **meta,
    ))
    io.write_interactions(out / "interactions.csv", coef, ds.x_names, ds.z_names, ds.y_names, dense=bool(opts["dense_theta"]))
    if tree is not None:
        tree.to_json(out / "tree.json")


_PATH_HEADER = ["lambda", "objective", "nonzero_main", "nonzero_interactions", "r_norm", "s_norm", "iterations", "converged"]


def _path_rows(points):
    return [
        [p.lam, p.objective, p.nonzero_main, p.nonzero_interactions, p.report.r_norm, p.report.s_norm,
         p.report.iterations, int(p.report.converged)]
        for p in points
    ]


def cmd_fit(opts) -> int:
    _require(opts, "x", "z", "y")
    ds = io.ingest(opts["x"], opts["z"], opts["y"])
    scaler = Standardizer.fit(ds.data)
    std = scaler.transform(ds.data)
    tree = _tree(opts, std)
    spec = _spec(opts)
    lmax = lambda_max(std, spec, tree)
    if opts["lam"] is not None:
        lam = float(opts["lam"])
    elif opts["lambda_ratio"] is not None:
        lam = float(opts["lambda_ratio"]) * lmax
    else:
        raise UsageError("fit: give --lambda or --lambda-ratio")
    if lam <= 0:
        raise UsageError("fit: lambda must be positive")
    out = _outdir(opts)
    hp = spec.hyperparameters(lam, _hyper(opts), single=std.D == 1)
    coef_s, rep = fit_model(std, hp, tree)
    coef = scaler.coef_to_original(coef_s)
    meta = {"lambda": lam, "lambda_max": lmax, "alpha": hp.alpha, "lambda1": hp.lambda1,
            "lambda2": hp.lambda2, "lambda3": hp.lambda3, "standardization": scaler.to_dict()}
    _write_fit(out, opts, ds, coef, tree, meta)
    resid = ds.data.Y - predict(ds.data, coef)
    metrics = {
        "command": "fit",
        "lambda": lam,
        "converged": bool(rep.converged),
        "iterations": int(rep.iterations),
        "r_norm": rep.r_norm, "s_norm": rep.s_norm, "eps_pri": rep.eps_pri, "eps_dual": rep.eps_dual,
        "objective": objective(std, coef_s, hp, tree),
        "train_mse": float(np.mean(resid ** 2)),
        "nonzero_count": int(np.count_nonzero(coef.beta)),
        "nonzero_interactions": int(np.count_nonzero(coef.theta)),
    }
    metrics.update(_test_metrics(opts, coef, ds))
    io.write_json(out / "metrics.json", metrics)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def cmd_path(opts) -> int:
    _require(opts, "x", "z", "y")
    ds = io.ingest(opts["x"], opts["z"], opts["y"])
    std = Standardizer.fit(ds.data).transform(ds.data)
    tree = _tree(opts, std)
    out = _outdir(opts)
    points = fit_path(std, _spec(opts), tree, _hyper(opts))
    io.write_table(out / "path.csv", _PATH_HEADER, _path_rows(points))
    conv = all(p.report.converged for p in points)
    io.write_json(out / "metrics.json", {
        "command": "path",
        "n_lambda": len(points),
        "lambda_max": points[0].lam,
        "all_converged": conv,
    })
    if tree is not None:
        tree.to_json(out / "tree.json")
    return EXIT_OK if conv else EXIT_NOT_CONVERGED


def cmd_cv(opts) -> int:
    _require(opts, "x", "z", "y")
    ds = io.ingest(opts["x"], opts["z"], opts["y"])
    tree = None
    if ds.data.D > 1 and opts["tree"]:
        tree = _tree(opts, ds.standardized())
    elif ds.data.D == 1 and opts["tree"]:
        raise UsageError("a response tree was given but Y has a single column")
    out = _outdir(opts)
    res = fit_cv(
        ds.data, _spec(opts), tree, folds=int(opts["folds"]), seed=int(opts["seed"]),
        hp=_hyper(opts), threads=int(opts["threads"]), rule=opts["rule"],
    )
    cv = res.cv
    header = ["lambda", "cv_mean", "cv_sd"] + [f"fold{f + 1}" for f in range(cv.fold_errors.shape[0])]
    rows = [[cv.lambdas[i], cv.cv_mean[i], cv.cv_sd[i], *cv.fold_errors[:, i]] for i in range(len(cv.lambdas))]
    io.write_table(out / "cv.csv", header, rows)
    io.write_table(out / "path.csv", _PATH_HEADER, _path_rows(res.path))
    sel = res.path[res.selected_index]
    meta = {"lambda": res.lam, "lambda_min": cv.best_lambda, "lambda_1se": cv.lambda_1se, "rule": opts["rule"],
            "alpha": float(opts["alpha"]), "c1": float(opts["c1"]), "c2": float(opts["c2"]),
            "standardization": res.scaler.to_dict()}
    _write_fit(out, opts, ds, res.coef, res.tree, meta)
    conv = bool(sel.report.converged) and all(p.report.converged for p in res.path) and bool(cv.converged.all())
    resid = ds.data.Y - predict(ds.data, res.coef)
    metrics = {
        "command": "cv",
        "lambda": res.lam,
        "lambda_min": cv.best_lambda,
        "lambda_1se": cv.lambda_1se,
        "selected_index": res.selected_index,
        "cv_mse": float(cv.cv_mean[res.selected_index]),
        "train_mse": float(np.mean(resid ** 2)),
        "nonzero_count": int(np.count_nonzero(res.coef.beta)),
        "nonzero_interactions": int(np.count_nonzero(res.coef.theta)),
        "all_converged": conv,
    }
    metrics.update(_test_metrics(opts, res.coef, ds))
    io.write_json(out / "metrics.json", metrics)
    return EXIT_OK if conv else EXIT_NOT_CONVERGED


def cmd_simulate(opts) -> int:
    kw = {"scenario": opts["scenario"], "seed": int(opts["seed"]), "test_N": int(opts["test_n"]), "val_N": int(opts["val_n"])}
    for key, field in (("n", "N"), ("p", "p"), ("noise", "noise_scale")):
        if opts[key] is not None:
            kw[field] = opts[key]
    cfg = SimConfig(**kw)
    sim = simulate(cfg)
    out = _outdir(opts)
    names = (io.default_names("x", cfg.p), io.default_names("z", cfg.K), io.default_names("y", cfg.D))
    for label, part in (("train", sim.train), ("validation", sim.validation), ("test", sim.test)):
        if part is not None:
            io.write_dataset(out / label, io.Dataset(part, *names))
    io.write_json(out / "truth.json", io.coef_to_dict(
        sim.truth, *names, scenario=cfg.scenario.value, seed=cfg.seed, noise_scale=float(cfg.noise_scale),
    ))
    return EXIT_OK


def cmd_predict(opts) -> int:
    _require(opts, "x", "z", "coef")
    coef, doc = io.read_coefficients(opts["coef"])
    ds = io.ingest(opts["x"], opts["z"])
    if ds.data.p != coef.p or ds.data.K != coef.K:
        raise DimensionError(
            f"coefficients expect p={coef.p}, K={coef.K} but inputs have p={ds.data.p}, K={ds.data.K}", "X"
        )
    data = DesignData(ds.data.X, ds.data.Z, np.zeros((ds.data.N, coef.D)))
    out = _outdir(opts)
    names = doc.get("y_names") or io.default_names("y", coef.D)
    io.write_matrix(out / "predictions.csv", names, predict(data, coef))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "path": cmd_path, "cv": cmd_cv, "simulate": cmd_simulate, "predict": cmd_predict}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = resolve(args)
        logging.basicConfig(level=logging.INFO if opts["verbose"] else logging.WARNING, format="%(message)s")
        return COMMANDS[opts["command"]](opts)
    except (UsageError, io.IngestError, DimensionError, TreeError, ValueError) as exc:
        print(f"treeplasso {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
