"""Benchmark harness: cross-validated error tables, grid oracle, EP-failure demo.

The harness runs each (dataset, likelihood, algorithm) cell as an
independent k-fold cross-validation with per-fold hyperparameter
optimization and per-training-fold standardization.  Cell failures are
recorded in the report and never abort the run.  Reports render both as
CSV and as an aligned text table (datasets as columns, a trailing
cross-dataset average); the text table carries no timing so that runs
with identical configuration and seed are byte-identical.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import maximum_filter
from scipy.special import logsumexp

from .data import apply_standardizer, fit_standardizer, load_csv, make_folds
from .inference import ep_parallel, ep_sequential, pl_parallel, pl_sequential
from .likelihoods import (
    LikelihoodModel,
    UnsupportedLikelihoodError,
    log_likelihood,
    noisy_threshold,
)
from .model import FitConfig, fit, predict, predict_labels
from .numerics import NumericFailureError, blas_single_thread

ALGORITHMS = {
    "laplace": "laplace",
    "pep": "ep_parallel",
    "sep": "ep_sequential",
    "ppl": "pl_parallel",
    "spl": "pl_sequential",
}


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    path: str
    label_column: str | int
    positive_label: str


@dataclass
class BenchmarkConfig:
    """Everything a benchmark run depends on, seed included."""

    datasets: list[DatasetSpec]
    likelihoods: list[LikelihoodModel]
    algorithms: list[str]
    folds: int = 10
    seed: int = 0
    max_iterations: int = 10
    quad_order: int = 10
    optimize: bool = True
    max_opt_iters: int = 50
    workers: int = 1

    def __post_init__(self):
        if not self.datasets or not self.likelihoods or not self.algorithms:
            raise ValueError("datasets, likelihoods and algorithms must be non-empty")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {alg!r}; choose from {sorted(ALGORITHMS)}")


def likelihood_label(like: LikelihoodModel) -> str:
    if like.kind == "probit":
        return "probit"
    if like.kind == "logit":
        return "logit" if like.quad_order == 10 else f"logit[{like.quad_order}]"
    return f"nt[{like.epsilon:g}]"


@dataclass
class CellResult:
    dataset: str
    likelihood: str
    algorithm: str
    status: str  # ok | unsupported | failed
    mean_error: float | None
    mean_seconds: float | None
    fold_errors: list = field(default_factory=list)
    message: str = ""


@dataclass
class BenchmarkReport:
    cells: list[CellResult]
    dataset_names: list[str]
    likelihood_labels: list[str]
    algorithms: list[str]

    def to_csv(self) -> str:
        lines = ["dataset,likelihood,algorithm,mean_error,mean_seconds"]
        for c in self.cells:
            err = f"{c.mean_error:.6f}" if c.status == "ok" else ("-" if c.status == "unsupported" else "failed")
            sec = f"{c.mean_seconds:.3f}" if c.mean_seconds is not None else "-"
            lines.append(f"{c.dataset},{c.likelihood},{c.algorithm},{err},{sec}")
        return "\n".join(lines) + "\n"

    def error_table(self) -> str:
        """Aligned text table: one row per likelihood x algorithm, no timing."""
        by_key = {(c.likelihood, c.algorithm, c.dataset): c for c in self.cells}
        width = max(12, *(len(d) for d in self.dataset_names)) + 2
        head = f"{'likelihood':<14}{'algorithm':<10}"
        head += "".join(f"{d:>{width}}" for d in self.dataset_names)
        head += f"{'Ave.':>{width}}"
        lines = [head, "-" * len(head)]
        for lk in self.likelihood_labels:
            for alg in self.algorithms:
                row = f"{lk:<14}{alg:<10}"
                errs = []
                complete = True
                for d in self.dataset_names:
                    c = by_key.get((lk, alg, d))
                    if c is not None and c.status == "ok":
                        row += f"{c.mean_error:>{width}.3f}"
                        errs.append(c.mean_error)
                    else:
                        row += f"{'-':>{width}}"
                        complete = False
                if complete and errs:
                    row += f"{np.mean(errs):>{width}.3f}"
                else:
                    row += f"{'-':>{width}}"
                lines.append(row)
        return "\n".join(lines) + "\n"


def evaluate_cell(
    spec: DatasetSpec,
    like: LikelihoodModel,
    algorithm: str,
    config: BenchmarkConfig,
    dataset_cache: dict | None = None,
) -> CellResult:
    """One (dataset, likelihood, algorithm) cell: k-fold CV with tuning."""
    label = likelihood_label(like)
    try:
        with blas_single_thread():
            cache = dataset_cache if dataset_cache is not None else {}
            if spec.name not in cache:
                cache[spec.name] = load_csv(spec.path, spec.label_column,
                                            spec.positive_label)
            ds = cache[spec.name]
            plan = make_folds(ds.n, config.folds, config.seed)
            fit_config = FitConfig(
                engine=ALGORITHMS[algorithm],
                optimize=config.optimize,
                max_opt_iters=config.max_opt_iters,
                max_inference_iters=config.max_iterations,
                quad_order=config.quad_order,
            )
            fold_errors = []
            fold_seconds = []
            for fold in range(config.folds):
                train_idx, test_idx = plan.train_test(fold)
                train, test = ds.subset(train_idx), ds.subset(test_idx)
                scaler = fit_standardizer(train)
                train = apply_standardizer(scaler, train)
                test = apply_standardizer(scaler, test)
                start = time.perf_counter()
                model = fit(train.x, train.y, like, fit_config)
                pred = predict(model, test.x)
                fold_seconds.append(time.perf_counter() - start)
                labels = predict_labels(pred)
                fold_errors.append(float(np.mean(labels != test.y.astype(int))))
        return CellResult(
            spec.name, label, algorithm, "ok",
            float(np.mean(fold_errors)), float(np.mean(fold_seconds)), fold_errors,
        )
    except UnsupportedLikelihoodError as exc:
        return CellResult(spec.name, label, algorithm, "unsupported", None, None,
                          message=str(exc))
    except Exception as exc:  # cell isolation: report, never abort the run
        return CellResult(spec.name, label, algorithm, "failed", None, None,
                          message=f"{type(exc).__name__}: {exc}")


def run_benchmark(config: BenchmarkConfig) -> BenchmarkReport:
    """Run every (dataset, likelihood, algorithm) cell of the config."""
    cache: dict = {}
    # warm the cache serially so concurrent cells share loaded data
    for spec in config.datasets:
        try:
            cache[spec.name] = load_csv(spec.path, spec.label_column, spec.positive_label)
        except Exception:
            pass  # the per-cell path reports the load failure
    tasks = [
        (spec, like, alg)
        for spec in config.datasets
        for like in config.likelihoods
        for alg in config.algorithms
    ]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            cells = list(pool.map(
                lambda t: evaluate_cell(t[0], t[1], t[2], config, cache), tasks
            ))
    else:
        cells = [evaluate_cell(spec, like, alg, config, cache) for spec, like, alg in tasks]
    return BenchmarkReport(
        cells,
        [s.name for s in config.datasets],
        [likelihood_label(lk) for lk in config.likelihoods],
        list(config.algorithms),
    )


# -- benchmark config file ---------------------------------------------------

def parse_benchmark_config(path) -> BenchmarkConfig:
    """Parse the flat key-value benchmark config format.

    Line forms (# starts a comment):

        dataset <name> <path> label_column=<name-or-index> positive_label=<value>
        likelihood probit | logit [order=N] | noisy_threshold epsilon=E
        algorithm laplace|pep|sep|ppl|spl
        folds N / seed N / max_iterations N / quad_order N
        optimize true|false / max_opt_iters N / workers N
    """
    datasets: list[DatasetSpec] = []
    likes: list[LikelihoodModel] = []
    algs: list[str] = []
    scalars = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        if key == "dataset":
            if len(parts) < 5:
                raise ValueError(f"bad dataset line: {raw!r}")
            opts = dict(p.split("=", 1) for p in parts[3:])
            label_column: str | int = opts["label_column"]
            if label_column.lstrip("-").isdigit():
                label_column = int(label_column)
            datasets.append(DatasetSpec(parts[1], parts[2], label_column,
                                        opts["positive_label"]))
        elif key == "likelihood":
            kind = parts[1]
            opts = dict(p.split("=", 1) for p in parts[2:])
            if kind == "probit":
                likes.append(LikelihoodModel("probit"))
            elif kind == "logit":
                likes.append(LikelihoodModel("logit", quad_order=int(opts.get("order", 10))))
            elif kind == "noisy_threshold":
                likes.append(noisy_threshold(float(opts["epsilon"])))
            else:
                raise ValueError(f"unknown likelihood {kind!r}")
        elif key == "algorithm":
            algs.append(parts[1])
        elif key in ("folds", "seed", "max_iterations", "quad_order",
                     "max_opt_iters", "workers"):
            scalars[key] = int(parts[1])
        elif key == "optimize":
            scalars[key] = parts[1].lower() in ("true", "1", "yes")
        else:
            raise ValueError(f"unknown config key {key!r}")
    return BenchmarkConfig(datasets, likes, algs, **scalars)


# -- dense 2-d grid oracle ---------------------------------------------------

@dataclass
class GridOracle2D:
    """Numerically exact 2-d posterior: density grid, moments, modes."""

    xs: np.ndarray
    ys: np.ndarray
    density: np.ndarray  # density[i, j] at (xs[i], ys[j]); integrates to 1
    mean: np.ndarray
    cov: np.ndarray
    log_evidence: float
    modes: list  # [(x, y, density)] sorted by density, descending


def grid_posterior_2d(
    prior_mean,
    prior_cov,
    like,
    y,
    bounds=None,
    resolution: int = 400,
) -> GridOracle2D:
    """Evaluate the exact posterior of a 2-site model on a dense grid.

    The unnormalized log posterior log N(f; prior) + sum_i log p(y_i|f_i)
    is normalized by log-sum-exp; moments and the evidence come from
    Riemann summation over the cells.
    """
    if resolution < 100:
        raise ValueError("resolution must be at least 100 points per axis")
    mu = np.asarray(prior_mean, dtype=float)
    cov = np.asarray(prior_cov, dtype=float)
    y = np.asarray(y, dtype=float)
    if mu.shape != (2,) or cov.shape != (2, 2) or y.shape != (2,):
        raise ValueError("grid oracle is strictly 2-d")
    sd = np.sqrt(np.diag(cov))
    if bounds is None:
        bounds = ((mu[0] - 6 * sd[0], mu[0] + 6 * sd[0]),
                  (mu[1] - 6 * sd[1], mu[1] + 6 * sd[1]))
    xs = np.linspace(bounds[0][0], bounds[0][1], resolution)
    ys = np.linspace(bounds[1][0], bounds[1][1], resolution)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    prec = np.linalg.inv(cov)
    dx_ = xx - mu[0]
    dy_ = yy - mu[1]
    quad = prec[0, 0] * dx_**2 + 2 * prec[0, 1] * dx_ * dy_ + prec[1, 1] * dy_**2
    log_prior = -0.5 * quad - 0.5 * (
        2 * math.log(2 * math.pi) + math.log(np.linalg.det(cov))
    )
    lp = log_prior + log_likelihood(like, y[0], xx) + log_likelihood(like, y[1], yy)
    cell = (xs[1] - xs[0]) * (ys[1] - ys[0])
    log_total = float(logsumexp(lp))
    if not math.isfinite(log_total):
        raise NumericFailureError("grid bounds miss the posterior mass entirely")
    log_evidence = log_total + math.log(cell)
    density = np.exp(lp - log_total) / cell
    w = density * cell
    boundary_mass = w[0, :].sum() + w[-1, :].sum() + w[:, 0].sum() + w[:, -1].sum()
    if boundary_mass > 0.01:
        raise NumericFailureError(
            f"posterior mass {boundary_mass:.3g} on the grid boundary: "
            "bounds do not contain the posterior"
        )
    mean = np.array([float((w * xx).sum()), float((w * yy).sum())])
    cxx = float((w * (xx - mean[0]) ** 2).sum())
    cyy = float((w * (yy - mean[1]) ** 2).sum())
    cxy = float((w * (xx - mean[0]) * (yy - mean[1])).sum())
    local_max = (density == maximum_filter(density, size=3)) & (
        density > density.max() * 1e-12
    )
    idx = np.argwhere(local_max)
    modes = sorted(
        ((float(xs[i]), float(ys[j]), float(density[i, j])) for i, j in idx),
        key=lambda t: -t[2],
    )
    return GridOracle2D(
        xs, ys, density, mean, np.array([[cxx, cxy], [cxy, cyy]]),
        log_evidence, modes,
    )


# -- synthetic EP-failure demo -----------------------------------------------

DEMO_PRIOR_MEAN = np.array([-0.5, -3.0])
DEMO_PRIOR_COV = np.array([[1.0, 0.8], [0.8, 1.0]])
DEMO_EPSILON = 0.01
DEMO_LABELS = np.array([1.0, 1.0])


@dataclass
class DemoResult:
    grid: GridOracle2D
    ppl_report: object
    spl_report: object
    ep_first_negative: dict  # variant -> (iteration, site, value) or None


def run_synthetic_demo(out_dir=None, resolution: int = 400) -> DemoResult:
    """EP-failure demonstration on the 2-d noisy-threshold instance.

    Runs raw (unclamped) EP in both sequential orders and in parallel,
    recording the first negative cavity variance each variant hits, and
    both PL variants, which converge to a common fixed point near the
    posterior's highest-density mode.  When ``out_dir`` is given, writes
    contour.csv (x, y, density), pl_iterates.csv (iteration, mean1,
    mean2), pl_solution.csv (final mean row, then 3-sigma ellipse
    points) and ep_diagnostics.csv (variant, iteration, site,
    cavity_variance; empty fields when a variant never fails).
    """
    like = noisy_threshold(DEMO_EPSILON)
    grid = grid_posterior_2d(DEMO_PRIOR_MEAN, DEMO_PRIOR_COV, like, DEMO_LABELS,
                             resolution=resolution)
    ppl = pl_parallel(DEMO_PRIOR_COV, like, DEMO_LABELS, max_iters=200,
                      tol=1e-10, prior_mean=DEMO_PRIOR_MEAN)
    spl = pl_sequential(DEMO_PRIOR_COV, like, DEMO_LABELS, max_sweeps=200,
                        tol=1e-10, prior_mean=DEMO_PRIOR_MEAN)
    variants = {
        "sep_order_1_2": ep_sequential(
            DEMO_PRIOR_COV, like, DEMO_LABELS, max_sweeps=20, clamp=None,
            prior_mean=DEMO_PRIOR_MEAN, order=[0, 1], on_negative_cavity="halt"),
        "sep_order_2_1": ep_sequential(
            DEMO_PRIOR_COV, like, DEMO_LABELS, max_sweeps=20, clamp=None,
            prior_mean=DEMO_PRIOR_MEAN, order=[1, 0], on_negative_cavity="halt"),
        "pep": ep_parallel(
            DEMO_PRIOR_COV, like, DEMO_LABELS, max_iters=20, clamp=None,
            prior_mean=DEMO_PRIOR_MEAN, on_negative_cavity="halt"),
    }
    first_negative = {}
    for name, report in variants.items():
        ev = report.first_event("negative_cavity")
        first_negative[name] = None if ev is None else (ev[1], ev[2], ev[3])
    result = DemoResult(grid, ppl, spl, first_negative)
    if out_dir is not None:
        _write_demo_files(Path(out_dir), result)
    return result


def _write_demo_files(out_dir: Path, result: DemoResult) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    grid = result.grid
    with open(out_dir / "contour.csv", "w", encoding="utf-8") as fh:
        fh.write("x,y,density\n")
        for i, xv in enumerate(grid.xs):
            row = grid.density[i]
            fh.write("\n".join(
                f"{xv:.6f},{grid.ys[j]:.6f},{row[j]:.8e}" for j in range(len(grid.ys))
            ) + "\n")
    with open(out_dir / "pl_iterates.csv", "w", encoding="utf-8") as fh:
        fh.write("iteration,mean1,mean2\n")
        for it, m in enumerate(result.ppl_report.mean_history):
            fh.write(f"{it},{m[0]:.10f},{m[1]:.10f}\n")
    mean = result.ppl_report.belief.mean
    cov = result.ppl_report.belief.cov
    chol = np.linalg.cholesky(cov)
    with open(out_dir / "pl_solution.csv", "w", encoding="utf-8") as fh:
        fh.write("kind,x,y\n")
        fh.write(f"mean,{mean[0]:.10f},{mean[1]:.10f}\n")
        for theta in np.linspace(0.0, 2 * math.pi, 181):
            pt = mean + 3.0 * (chol @ np.array([math.cos(theta), math.sin(theta)]))
            fh.write(f"ellipse,{pt[0]:.10f},{pt[1]:.10f}\n")
    with open(out_dir / "ep_diagnostics.csv", "w", encoding="utf-8") as fh:
        fh.write("variant,iteration,site,cavity_variance\n")  # site is 1-based
        for name, rec in result.ep_first_negative.items():
            if rec is None:
                fh.write(f"{name},,,\n")
            else:
                fh.write(f"{name},{rec[0]},{rec[1] + 1},{rec[2]:.6f}\n")
