"""Command line interface.

Subcommands:

* ``bench``            run a benchmark config, write report.csv + error_table.txt
* ``demo-ep-failure``  run the 2-d EP-failure demonstration, write its CSVs
* ``fit``              train one model on a CSV and save it
* ``predict``          load a saved model and predict on a CSV
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .bench import parse_benchmark_config, run_benchmark, run_synthetic_demo
from .data import load_csv, load_feature_csv
from .likelihoods import LikelihoodModel, noisy_threshold
from .model import FitConfig, fit, load_model, predict, predict_labels, save_model

_CLI_ALGORITHMS = {
    "ppl": "pl_parallel",
    "spl": "pl_sequential",
    "pep": "ep_parallel",
    "sep": "ep_sequential",
    "laplace": "laplace",
}


def _likelihood_from_args(args) -> LikelihoodModel:
    if args.likelihood == "probit":
        return LikelihoodModel("probit")
    if args.likelihood == "logit":
        return LikelihoodModel("logit", quad_order=args.quad_order)
    return noisy_threshold(args.epsilon)


def _cmd_bench(args) -> int:
    config = parse_benchmark_config(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    report = run_benchmark(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
    (out / "error_table.txt").write_text(report.error_table(), encoding="utf-8")
    sys.stdout.write(report.error_table())
    failed = [c for c in report.cells if c.status == "failed"]
    for c in failed:
        sys.stderr.write(f"cell failed: {c.dataset}/{c.likelihood}/{c.algorithm}: {c.message}\n")
    return 0


def _cmd_demo(args) -> int:
    result = run_synthetic_demo(args.out, resolution=args.resolution)
    mean = result.ppl_report.belief.mean
    sys.stdout.write(f"parallel PL fixed point: ({mean[0]:.6f}, {mean[1]:.6f})\n")
    top = result.grid.modes[0]
    sys.stdout.write(f"highest-density mode:    ({top[0]:.6f}, {top[1]:.6f})\n")
    for name, rec in result.ep_first_negative.items():
        if rec is None:
            sys.stdout.write(f"{name}: no negative cavity variance encountered\n")
        else:
            sys.stdout.write(
                f"{name}: first negative cavity variance {rec[2]:.1f} "
                f"(site {rec[1] + 1}, pass {rec[0]})\n"
            )
    sys.stdout.write(f"artifacts written to {args.out}\n")
    return 0


def _cmd_fit(args) -> int:
    ds = load_csv(args.data, _column(args.label_column), args.positive_label)
    like = _likelihood_from_args(args)
    config = FitConfig(
        engine=_CLI_ALGORITHMS[args.algorithm],
        optimize=not args.no_optimize,
        sigma2_sq=args.sigma2_sq,
        max_inference_iters=args.max_iterations,
        quad_order=args.quad_order,
    )
    model = fit(ds.x, ds.y, like, config)
    save_model(model, args.out)
    sys.stdout.write(
        f"fitted {args.algorithm} / {args.likelihood} on {ds.n} points: "
        f"log marginal {model.log_marginal:.4f}, "
        f"sigma1_sq {model.hp.sigma1_sq:.4f}, ell {model.hp.ell:.4f}\n"
    )
    sys.stdout.write(f"model saved to {args.out}\n")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    if args.label_column is not None:
        if args.positive_label is None:
            raise SystemExit("--positive-label is required with --label-column")
        ds = load_csv(args.data, _column(args.label_column), args.positive_label)
        x, y = ds.x, ds.y
    else:
        x, y = load_feature_csv(args.data), None
    pred = predict(model, x)
    labels = predict_labels(pred)
    lines = ["prob_positive,expected_label,label"]
    lines += [
        f"{pred.prob_positive[i]:.6f},{pred.expected_label[i]:.6f},{labels[i]:d}"
        for i in range(len(labels))
    ]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    sys.stdout.write(f"predictions for {len(labels)} points written to {args.out}\n")
    if y is not None:
        err = float(np.mean(labels != y.astype(int)))
        sys.stdout.write(f"classification error: {err:.4f}\n")
    return 0


def _column(value):
    if value is None:
        return None
    return int(value) if value.lstrip("-").isdigit() else value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gpclassify",
        description="Gaussian process binary classification benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bench = sub.add_parser("bench", help="run a benchmark config")
    p_bench.add_argument("--config", required=True, help="path to config file")
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.add_argument("--seed", type=int, default=None, help="override config seed")
    p_bench.set_defaults(func=_cmd_bench)

    p_demo = sub.add_parser("demo-ep-failure", help="2-d synthetic EP failure demo")
    p_demo.add_argument("--out", required=True, help="output directory")
    p_demo.add_argument("--resolution", type=int, default=400,
                        help="grid resolution per axis (default 400)")
    p_demo.set_defaults(func=_cmd_demo)

    p_fit = sub.add_parser("fit", help="fit a model on a CSV dataset")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--label-column", required=True)
    p_fit.add_argument("--positive-label", required=True)
    p_fit.add_argument("--likelihood", choices=["probit", "logit", "noisy_threshold"],
                       default="probit")
    p_fit.add_argument("--epsilon", type=float, default=0.01,
                       help="noisy threshold flip probability")
    p_fit.add_argument("--quad-order", type=int, default=10)
    p_fit.add_argument("--algorithm", choices=sorted(_CLI_ALGORITHMS), default="ppl")
    p_fit.add_argument("--sigma2-sq", type=float, default=0.1)
    p_fit.add_argument("--max-iterations", type=int, default=10)
    p_fit.add_argument("--no-optimize", action="store_true",
                       help="keep the initial hyperparameters")
    p_fit.add_argument("--out", required=True, help="model file to write")
    p_fit.set_defaults(func=_cmd_fit)

    p_pred = sub.add_parser("predict", help="predict with a saved model")
    p_pred.add_argument("--model", required=True)
    p_pred.add_argument("--data", required=True)
    p_pred.add_argument("--label-column", default=None,
                        help="score against labels when provided")
    p_pred.add_argument("--positive-label", default=None)
    p_pred.add_argument("--out", required=True, help="predictions CSV to write")
    p_pred.set_defaults(func=_cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
