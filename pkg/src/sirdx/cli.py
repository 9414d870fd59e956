"""Command-line pipeline: simulate, generate, cv, train, classify, sobol, scenario.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical or data error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import svg
from .classifiers import (
    KernelSpec, confusion, default_gamma, logistic_predict, logistic_train, svm_predict, svm_train,
    write_confusion_csv,
)
from .config import ConfigError, load_config
from .core import (
    BASELINE_PARAMS, COMPARTMENTS, INITIAL_STATE, POPULATION, IntegratorConfig, Params,
    analytic_peak, integrate, integrate_oracle, outcome,
)
from .dataset import OUTCOME_NAMES, generate, minmax_apply, minmax_fit, read_csv, split_train_test, write_csv
from .exceptions import SirdxError
from .sobol import SobolPlan, sobol_run
from .surrogate import (
    ACTIVATIONS, MLPSurrogate, cross_validate, load_model, predict, r2_score, save_model, train,
)

logger = logging.getLogger("sirdx")

# values quoted for the reference runs, kept next to ours in reports
REFERENCE = {
    "dataset_mean": {"d_final": 254.0, "i_max": 1541.0},
    "baseline": {"d_final": 6552.0, "i_max": 8002.0},
    "policy": {"d_final": 1053.0, "i_max": 4752.0},
}
SWEEP_VALUES = {"layers": [1, 2, 3, 4], "activation": list(ACTIVATIONS)}
TASKS = ("mortality", "control")
CLASSIFIER_NAMES = ("logistic", "svm_linear", "svm_polynomial", "svm_rbf")


class UsageError(Exception):
    """Bad flags or configuration (exit code 1)."""


class DataError(Exception):
    """Numerical failure or unusable data (exit code 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def nonnegative_float(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a finite value >= 0, got {text}")
    return v


# ----------------------------------------------------------------- helpers


def _fmt(v):
    return format(float(v), ".17g")


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out_dir(args, cfg):
    out = Path(args.out or cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def _load_cfg(args):
    overrides = {
        "seed": getattr(args, "seed", None),
        "n": getattr(args, "n", None),
        "k_folds": getattr(args, "k_folds", None),
        "ranges": getattr(args, "ranges", None),
        "integrator.dt": getattr(args, "dt", None),
        "integrator.t_max": getattr(args, "tmax", None),
        "sobol.n_base": getattr(args, "n_base", None),
        "sobol.target": getattr(args, "target", None),
    }
    try:
        return load_config(args.config, **overrides)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _params_from(args, base: Params, prefix=""):
    changes = {}
    for name in ("alpha", "beta", "mu", "kappa", "kappa0"):
        v = getattr(args, prefix + name, None)
        if v is not None:
            changes[name] = v
    return base.replace(**changes)


def _dataset(args, cfg):
    if getattr(args, "dataset", None):
        path = Path(args.dataset)
        if not path.is_file():
            raise UsageError(f"dataset not found: {path}")
        try:
            return read_csv(path, cfg.label_rule())
        except SirdxError as exc:
            raise UsageError(f"{path}: {exc}") from None
    logger.info("no --dataset given; generating %d rows with seed %d", cfg.n, cfg.seed_for("dataset"))
    return generate(cfg.n, cfg.param_ranges(), cfg.integrator_config(), cfg.seed_for("dataset"),
                    rule=cfg.label_rule())


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    cfg = _load_cfg(args)
    params = _params_from(args, BASELINE_PARAMS)
    icfg = cfg.integrator_config()
    traj = integrate(params, INITIAL_STATE, icfg)
    res = outcome(traj)
    out = _out_dir(args, cfg)
    traj.to_csv(out / "trajectory.csv")
    print(f"d_final {_fmt(res.d_final)}")
    print(f"i_max {_fmt(res.i_max)}")
    print(f"steps {len(traj) - 1} t_end {_fmt(traj.t[-1])} clamped {traj.n_clamped}")
    if params.kappa == 0 and params.kappa0 == 0 and params.alpha > 0:
        try:
            peak = analytic_peak(params, INITIAL_STATE.s, INITIAL_STATE.i, POPULATION)
            print(f"analytic_peak {_fmt(peak)}")
        except SirdxError:
            pass
    return 0


def cmd_generate(args):
    cfg = _load_cfg(args)
    ds = generate(cfg.n, cfg.param_ranges(), cfg.integrator_config(), cfg.seed_for("dataset"),
                  rule=cfg.label_rule())
    out = _out_dir(args, cfg)
    write_csv(ds, out / "dataset.csv")
    for j, name in enumerate(OUTCOME_NAMES):
        svg.histogram(out / f"hist_{name}.svg", ds.Y[:, j], title=f"Histogram of {name}", xlabel=name)
    means = ds.Y.mean(axis=0)
    ref = REFERENCE["dataset_mean"]
    print(f"rows {ds.n_rows} mean_d_final {means[0]:.2f} (reference {ref['d_final']:.0f}) "
          f"mean_i_max {means[1]:.2f} (reference {ref['i_max']:.0f})")
    labels = ds.labels.mean(axis=0)
    print(f"label_mortality_rate {labels[0]:.3f} label_control_rate {labels[1]:.3f}")
    return 0


def cmd_cv(args):
    cfg = _load_cfg(args)
    ds = _dataset(args, cfg)
    if cfg.k_folds > ds.n_rows:
        raise UsageError(f"k-folds ({cfg.k_folds}) exceeds the number of rows ({ds.n_rows})")
    values = SWEEP_VALUES[args.sweep]
    reports = cross_validate(ds.X, ds.Y, cfg.k_folds, args.sweep, values, cfg.mlp_config(),
                             cfg.train_config(), cfg.seed_for("cv"))
    out = _out_dir(args, cfg)
    with open(out / f"cv_{args.sweep}.csv", "w") as fh:
        fh.write("value,mean_r2,std_r2," + ",".join(f"fold{f + 1}" for f in range(cfg.k_folds)) + "\n")
        for rep in reports:
            fh.write(f"{rep.value},{_fmt(rep.mean)},{_fmt(rep.std)}," + ",".join(_fmt(v) for v in rep.fold_r2) + "\n")
    print(f"{args.sweep:>12}  mean R^2   std R^2")
    for rep in reports:
        print(f"{rep.value!s:>12}  {rep.mean:.4f}    {rep.std:.4f}")
    return 0


def cmd_train(args):
    cfg = _load_cfg(args)
    ds = _dataset(args, cfg)
    tr, te = split_train_test(ds, cfg.train_fraction, cfg.seed_for("split"))
    model, hist = train(tr.X, tr.Y, cfg.train_config(), cfg.mlp_config(), te.X, te.Y)
    out = _out_dir(args, cfg)
    save_model(model, out / "model.json")
    hist.to_csv(out / "history.csv")
    p_tr, p_te = predict(model, tr.X), predict(model, te.X)
    for j, name in enumerate(OUTCOME_NAMES):
        svg.scatter_chart(out / f"parity_{name}.svg",
                          [("train", tr.Y[:, j], p_tr[:, j]), ("test", te.Y[:, j], p_te[:, j])],
                          title=f"Simulated vs predicted {name}", xlabel="simulated", ylabel="predicted")
    epochs = np.arange(1, hist.n_epochs + 1)
    svg.line_chart(out / "loss.svg",
                   [("train", epochs, hist.train_loss), ("validation", epochs, hist.val_loss),
                    ("test", epochs, hist.test_loss)],
                   title="MSE (scaled units)", xlabel="epoch", ylabel="loss")
    print(f"epochs {hist.n_epochs} best_epoch {hist.best_epoch} stopped_early {hist.stopped_early}")
    print(f"val_mse {hist.best_val_loss:.3e} test_mse {hist.test_loss[hist.best_epoch - 1]:.3e}")
    print(f"test_r2 {r2_score(p_te, te.Y):.4f}")
    return 0


def _classifier_runs(ccfg, kernels):
    yield "logistic", None
    for kind in kernels:
        yield f"svm_{kind}", kind


def cmd_classify(args):
    cfg = _load_cfg(args)
    ccfg = cfg.classifier_config()
    ds = _dataset(args, cfg)
    tr, te = split_train_test(ds, cfg.train_fraction, cfg.seed_for("split"))
    bounds = minmax_fit(tr.X)
    X_tr, X_te = minmax_apply(bounds, tr.X), minmax_apply(bounds, te.X)
    L_tr, L_te = tr.labels, te.labels
    for t, task in enumerate(TASKS):
        if len(np.unique(L_tr[:, t])) < 2:
            raise DataError(f"label task '{task}' has a single class in the training split")
    kernels = [KernelSpec(args.kernel).kind] if args.kernel else ["linear", "polynomial", "rbf"]
    gamma = ccfg.gamma if ccfg.gamma is not None else default_gamma(X_tr)
    seed = cfg.seed_for("classify")
    out = _out_dir(args, cfg)
    rows, table = [], {}
    for t, task in enumerate(TASKS):
        for name, kind in _classifier_runs(ccfg, kernels):
            if kind is None:
                m = logistic_train(X_tr, L_tr[:, t], ccfg.logistic_learning_rate, ccfg.logistic_max_iters,
                                   ccfg.logistic_tolerance, seed)
                pred = logistic_predict(m, X_te)[1]
            else:
                spec = KernelSpec(kind, ccfg.degree, gamma, ccfg.coef0)
                m = svm_train(X_tr, L_tr[:, t], spec, ccfg.C, ccfg.tol, ccfg.max_passes, seed)
                pred = svm_predict(m, X_te)
            cm = confusion(pred, L_te[:, t])
            rows.append((name, task, cm))
            table.setdefault(task, {})[name] = cm.accuracy
            svg.matrix_chart(out / f"confusion_{name}_{task}.svg", cm.as_array(),
                             title=f"{name}: {task} label (test set)")
    write_confusion_csv(rows, out / "confusion.csv")
    names = [r[0] for r in rows if r[1] == TASKS[0]]
    with open(out / "accuracy_table.csv", "w") as fh:
        fh.write("label_task," + ",".join(names) + "\n")
        for task in TASKS:
            fh.write(task + "," + ",".join(_fmt(table[task][n]) for n in names) + "\n")
    print("task        " + "  ".join(f"{n:>14}" for n in names))
    for task in TASKS:
        print(f"{task:<12}" + "  ".join(f"{table[task][n]:>14.3f}" for n in names))
    return 0


def cmd_sobol(args):
    cfg = _load_cfg(args)
    scfg = cfg.sobol_config()
    if scfg.n_base < 2:
        raise UsageError("n_base must be at least 2")
    plan = SobolPlan(scfg.n_base, cfg.param_ranges(), cfg.seed_for("sobol"), scfg.target)
    model = None
    if plan.target == "surrogate":
        if not args.model:
            raise UsageError("--target surrogate needs --model PATH (see `sirdx train`)")
        if not Path(args.model).is_file():
            raise UsageError(f"model not found: {args.model}")
        model = MLPSurrogate.from_model(load_model(args.model))
    idx = sobol_run(plan, model, cfg.integrator_config())
    out = _out_dir(args, cfg)
    idx.to_csv(out / "sobol_indices.csv")
    for o, name in enumerate(idx.output_names):
        svg.bar_chart(out / f"sobol_{name}.svg", idx.input_names,
                      {"first order": idx.first_order[o], "total order": idx.total_order[o]},
                      title=f"Sobol indices for {name}", ylabel="index")
    print("output   input    S1        ST")
    for in_name, out_name, s1, st in idx.rows():
        print(f"{out_name:<8} {in_name:<7} {s1:>8.4f}  {st:>8.4f}")
    for o, name in enumerate(idx.output_names):
        st = idx.total_order[o]
        ok = min(st[0], st[1]) > max(st[2], st[3], st[4])
        print(f"ordering ST(alpha), ST(beta) > ST(mu), ST(kappa), ST(kappa0) for {name}: {'PASS' if ok else 'FAIL'}")
    return 0


def _outcome_doc(res):
    return {"d_final": res.d_final, "i_max": res.i_max}


def cmd_scenario(args):
    cfg = _load_cfg(args)
    icfg = cfg.integrator_config()
    base = _params_from(args, BASELINE_PARAMS)
    policy = _params_from(args, base.replace(kappa=0.02, kappa0=0.005), prefix="policy_")
    out = _out_dir(args, cfg)
    oracle_cfg = IntegratorConfig(dt=icfg.dt / 10, t_max=icfg.t_max, stop_threshold=icfg.stop_threshold)
    runs = {}
    for label, params in (("baseline", base), ("policy", policy)):
        traj = integrate(params, INITIAL_STATE, icfg)
        traj.to_csv(out / f"trajectory_{label}.csv")
        runs[label] = (params, traj, outcome(traj), outcome(integrate_oracle(params, INITIAL_STATE, oracle_cfg)))
    (_, _, b_res, _), (_, _, p_res, _) = runs["baseline"], runs["policy"]
    deltas = {}
    for key in ("d_final", "i_max"):
        b, p = getattr(b_res, key), getattr(p_res, key)
        deltas[key] = {"absolute": p - b, "relative": (p - b) / b if b else None}
    report = {
        label: {"params": asdict(params), "outcome": _outcome_doc(res), "oracle_outcome": _outcome_doc(orc),
                "trajectory": f"trajectory_{label}.csv"}
        for label, (params, _, res, orc) in runs.items()
    }
    report["deltas"] = deltas
    report["policy_worse"] = {k: deltas[k]["absolute"] > 0 for k in deltas}
    report["integrator"] = asdict(icfg)
    report["oracle_integrator"] = asdict(oracle_cfg)
    if base == BASELINE_PARAMS and policy == BASELINE_PARAMS.replace(kappa=0.02, kappa0=0.005):
        report["reference"] = {"baseline": REFERENCE["baseline"], "policy": REFERENCE["policy"]}
    _write_json(out / "scenario.json", report)

    series, colors, dashed = [], [], []
    for label, (_, traj, _, _) in runs.items():
        for c, name in enumerate(COMPARTMENTS):
            series.append((f"{label} {name}", traj.t, traj.states[:, c]))
            colors.append(c)
            if label == "policy":
                dashed.append(f"{label} {name}")
    svg.line_chart(out / "scenario.svg", series, title="Baseline (solid) vs policy (dashed)",
                   xlabel="t (days)", ylabel="persons", dashed=dashed, colors=colors)
    for key in ("d_final", "i_max"):
        d = deltas[key]
        flag = "  (policy worse)" if d["absolute"] > 0 else ""
        print(f"{key}: baseline {getattr(b_res, key):.2f} -> policy {getattr(p_res, key):.2f} "
              f"(delta {d['absolute']:+.2f}){flag}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (default 0)")
    common.add_argument("--out", metavar="DIR", help="output directory (default ./out)")
    common.add_argument("-v", "--verbose", action="store_true")

    integ = _Parser(add_help=False)
    integ.add_argument("--dt", type=float, help="Euler step in days (default 0.01)")
    integ.add_argument("--tmax", type=float, help="horizon in days (default 2000)")

    params = _Parser(add_help=False)
    for name in ("alpha", "beta", "mu", "kappa", "kappa0"):
        params.add_argument(f"--{name}", type=nonnegative_float)

    data = _Parser(add_help=False)
    data.add_argument("--dataset", metavar="PATH", help="dataset CSV (generated from the config if omitted)")
    data.add_argument("--n", type=positive_int, help="rows to generate when --dataset is omitted")
    data.add_argument("--ranges", choices=("paper", "assumptions"))

    parser = _Parser(prog="sirdx", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common, integ, params], help="integrate one parameter set")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", parents=[common, integ], help="sample and simulate a dataset")
    p.add_argument("--n", type=positive_int)
    p.add_argument("--ranges", choices=("paper", "assumptions"))
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("cv", parents=[common, integ, data], help="k-fold CV sweep of the MLP")
    p.add_argument("--k-folds", type=int, dest="k_folds")
    p.add_argument("--sweep", choices=("layers", "activation"), default="layers")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("train", parents=[common, integ, data], help="train the MLP surrogate")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", parents=[common, integ, data], help="logistic and SVM classifiers")
    p.add_argument("--kernel", choices=("linear", "poly", "rbf"), help="only this SVM kernel")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("sobol", parents=[common, integ], help="Sobol sensitivity indices")
    p.add_argument("--n", type=int, dest="n_base", help="base sample count (default 1024)")
    p.add_argument("--ranges", choices=("paper", "assumptions"))
    p.add_argument("--target", choices=("simulator", "surrogate"))
    p.add_argument("--model", metavar="PATH", help="trained model JSON for --target surrogate")
    p.set_defaults(func=cmd_sobol)

    p = sub.add_parser("scenario", parents=[common, integ, params], help="baseline vs policy comparison")
    for name in ("alpha", "beta", "mu", "kappa", "kappa0"):
        p.add_argument(f"--policy-{name}", dest=f"policy_{name}", type=nonnegative_float)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "k_folds", None) is not None and args.k_folds < 2:
        parser.error("--k-folds must be at least 2")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sirdx {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DataError, SirdxError, ArithmeticError) as exc:
        print(f"sirdx {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
