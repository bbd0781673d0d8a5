"""Scaling-law sweeps, rate predictors and report emission.

A sweep trains one model per (N, repeat) cell on nested subsamples of a
generated compositional task, records held-out L1 error plus the evaluated
generalization bound, and fits log-log slopes.  The theoretical counterpart
is the three-regime rate

    r* = min{1/2, nu_g/d_in, nu_h/d_mid}

whose attaining term labels whether the inner map, the outer map, or neither
is the bottleneck.  Rates at the regularized global minimum are reported for
both regularizers; the operator-norm variant's published exponent is emitted
both as written and in the sign-flipped form consistent with the surrounding
discussion (the two disagree; we compute both rather than guess).
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .complexity import BoundConfig, ComplexityError, complexity_report
from .model import AccNet, forward_batch, random_accnet
from .numerics import NumericsError, RngStream, cholesky_jitter, fit_line
from .svgplot import LogLogPlot
from .taskgen import DataSet, TaskSpec, generate, gram, gram_cross
from .train import TrainConfig, TrainingDiverged, train

MODEL_KINDS = ("accnet", "fcnn", "shallow", "kernel")

REGIMES = ("both_easy", "g_hard", "h_hard")


class SweepError(ValueError):
    pass


def error_decay(r: float, n: int) -> float:
    """Learnability rate curve: N^-1/2 above the parametric threshold,
    N^-1/2 log N at it, N^-r below (natural log)."""
    if n < 2 or r <= 0:
        raise SweepError("need n >= 2 and r > 0")
    if abs(r - 0.5) <= 1e-12:
        return math.log(n) / math.sqrt(n)
    if r > 0.5:
        return 1.0 / math.sqrt(n)
    return float(n) ** (-r)


@dataclass(frozen=True)
class RatePrediction:
    r_star: float
    regime: str
    per_layer_ratios: tuple
    rate_f1_reg: float
    rate_opnorm_reg_as_written: float
    rate_opnorm_reg_consistent: float

    def to_dict(self):
        d = asdict(self)
        d["per_layer_ratios"] = list(self.per_layer_ratios)
        return d


def regularizer_rates(nus, dims_star):
    """Rates at the regularized global minimum, ratios r_l = nu_l/(d*_l + 3).

    Returns (f1_reg_rate, opnorm_reg_rate_as_written, opnorm_reg_rate_consistent):
    the first regularizer gives min{1/2, r_1..r_L}; the second's published
    exponent is 1/2 - sum max{0, r_l - 1/2}, which worsens as ratios grow
    above 1/2, contradicting the claim that it matches the first whenever at
    most one ratio is below 1/2 -- the consistent variant flips the sign to
    1/2 - sum max{0, 1/2 - r_l}.
    """
    nus = [float(v) for v in nus]
    dims_star = [int(d) for d in dims_star]
    if len(nus) != len(dims_star):
        raise SweepError("nus and dims_star must have equal length")
    ratios = [nu / (d + 3) for nu, d in zip(nus, dims_star)]
    reg1 = min([0.5] + ratios)
    reg2_as_written = 0.5 - sum(max(0.0, r - 0.5) for r in ratios)
    reg2_consistent = 0.5 - sum(max(0.0, 0.5 - r) for r in ratios)
    return reg1, reg2_as_written, reg2_consistent


def predicted_rate(nu_g: float, d_in: int, nu_h: float, d_mid: int) -> RatePrediction:
    """Three-regime rate prediction for a two-stage composition."""
    if min(nu_g, nu_h) <= 0 or min(d_in, d_mid) < 1:
        raise SweepError("need positive smoothness and dimensions")
    candidates = [(0.5, "both_easy"), (nu_g / d_in, "g_hard"), (nu_h / d_mid, "h_hard")]
    r_star = min(c[0] for c in candidates)
    regime = next(label for v, label in candidates if v == r_star)
    reg1, reg2w, reg2c = regularizer_rates((nu_g, nu_h), (d_in, d_mid))
    return RatePrediction(
        r_star=r_star,
        regime=regime,
        per_layer_ratios=(nu_g / d_in, nu_h / d_mid),
        rate_f1_reg=reg1,
        rate_opnorm_reg_as_written=reg2w,
        rate_opnorm_reg_consistent=reg2c,
    )


@dataclass(frozen=True)
class SweepConfig:
    task: TaskSpec
    n_grid: tuple
    model: str = "accnet"
    dims: tuple | None = None       # interface chain d_0..d_L (accnet)
    widths: tuple | None = None     # per-block widths
    train_cfg: TrainConfig | None = None
    repeats: int = 1
    seed: int = 0
    loss_lipschitz: float = 1.0
    loss_bound: float = 1.0
    delta: float = 0.05
    ridge: float = 1e-6             # kernel baseline regularization
    fit_drop_first: bool = True     # smallest N sits in the transient regime
    mock_exponent: float | None = None

    def __post_init__(self):
        grid = tuple(int(n) for n in self.n_grid)
        if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
            raise SweepError("n_grid must be increasing")
        if grid[-1] > self.task.n_train:
            raise SweepError(f"n_grid max {grid[-1]} exceeds train pool {self.task.n_train}")
        if self.model not in MODEL_KINDS:
            raise SweepError(f"model must be one of {MODEL_KINDS}")
        if self.repeats < 1:
            raise SweepError("repeats must be >= 1")
        object.__setattr__(self, "n_grid", grid)
        if self.dims is not None:
            object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.widths is not None:
            object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))


@dataclass
class CellResult:
    n: int
    repeat: int
    ok: bool = True
    error: str = ""
    train_err: float = float("nan")
    test_err: float = float("nan")
    gap: float = float("nan")
    bound: float = float("nan")
    complexity: float = float("nan")
    complexity_opnorm: float = float("nan")
    param_norm: float = float("nan")

    def to_dict(self):
        return asdict(self)


def _build_net(cfg: SweepConfig, rng) -> AccNet:
    task = cfg.task
    if cfg.model == "accnet":
        dims = cfg.dims or (task.d_in, task.d_mid * 4, task.d_mid * 4, task.d_out)
        widths = cfg.widths or tuple([64] * (len(dims) - 1))
    elif cfg.model == "fcnn":
        # rank-unconstrained variant: interface dims equal the widths
        widths = cfg.widths or (64, 64, 64)
        dims = (task.d_in,) + tuple(widths[:-1]) + (task.d_out,)
    elif cfg.model == "shallow":
        # neuron budget matched to the deep model
        total = sum(cfg.widths) if cfg.widths else 192
        dims = (task.d_in, task.d_out)
        widths = (total,)
    else:
        raise SweepError(f"no trainable net for model kind {cfg.model}")
    if len(widths) != len(dims) - 1:
        raise SweepError("widths/dims mismatch in sweep config")
    return random_accnet(dims, widths, rng)


def kernel_baseline(x_train, y_train, x_test, y_test, ridge: float, length_scale: float = 1.0) -> float:
    """Laplacian-kernel ridge regression; returns held-out L1 error."""
    k = gram(x_train, 0.5, length_scale)
    n = k.shape[0]
    jitter = max(float(ridge), 0.0)
    while True:
        try:
            alpha = np.linalg.solve(k + jitter * np.eye(n), y_train)
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-12)
            if jitter > 1e-2:
                raise NumericsError("kernel baseline solve failed even with jitter") from None
    pred = gram_cross(x_test, x_train, 0.5, length_scale) @ alpha
    return float(np.mean(np.abs(pred - y_test)))


def _bound_config(cfg: SweepConfig, n: int) -> BoundConfig:
    return BoundConfig(
        input_radius=cfg.task.input_radius,
        loss_lipschitz=cfg.loss_lipschitz,
        loss_bound=cfg.loss_bound,
        delta=cfg.delta,
        n_samples=n,
    )


def run_cell(cfg: SweepConfig, data: DataSet, n: int, repeat: int):
    """Train/evaluate one sweep cell; returns (CellResult, trained_net | None)."""
    res = CellResult(n=n, repeat=repeat)
    if cfg.mock_exponent is not None:
        res.test_err = float(n) ** cfg.mock_exponent
        res.train_err = 0.0
        res.gap = res.test_err
        res.bound = 100.0 * float(n) ** -0.5
        return res, None
    stream = RngStream(cfg.seed)
    perm = stream.child(1, repeat).generator().permutation(data.n_train)
    rows = perm[:n]
    x_sub, y_sub = data.x_train[rows], data.y_train[rows]
    try:
        if cfg.model == "kernel":
            res.test_err = kernel_baseline(
                x_sub, y_sub, data.x_test, data.y_test, cfg.ridge, cfg.task.length_scale
            )
            res.train_err = 0.0
            res.gap = res.test_err
            return res, None
        net = _build_net(cfg, stream.child(2, n, repeat).generator())
        trained, history = train(net, x_sub, y_sub, data.x_test, data.y_test, cfg.train_cfg)
        last = history.rows[-1]
        res.train_err = last.train_loss
        # held-out error is always L1, whatever loss drove the optimizer
        res.test_err = float(np.mean(np.abs(forward_batch(trained, data.x_test) - data.y_test)))
        res.gap = last.test_loss - last.train_loss
        res.param_norm = last.param_norm
        report = complexity_report(trained, _bound_config(cfg, n))
        res.bound = report.bound
        res.complexity = report.complexity
        res.complexity_opnorm = report.complexity_opnorm
        return res, trained
    except (TrainingDiverged, NumericsError, ComplexityError) as exc:
        res.ok = False
        res.error = str(exc)
        return res, None


def _cell_worker(args):
    cfg, data, n, repeat = args
    res, _ = run_cell(cfg, data, n, repeat)
    return res


@dataclass
class ScalingReport:
    config: dict
    rows: list = field(default_factory=list)   # one dict per N: n, mean/std err, mean bound, mean gap
    cells: list = field(default_factory=list)  # CellResult dicts
    fitted_slope: float | None = None
    bound_slope: float | None = None
    fit_ns: list = field(default_factory=list)
    prediction: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _aggregate(cfg: SweepConfig, cells) -> ScalingReport:
    report = ScalingReport(config=_config_dict(cfg))
    report.cells = [c.to_dict() for c in cells]
    report.failures = [c.to_dict() for c in cells if not c.ok]
    by_n = {}
    for c in cells:
        by_n.setdefault(c.n, []).append(c)
    for n in sorted(by_n):
        ok = [c for c in by_n[n] if c.ok]
        if not ok:
            report.rows.append({"n": n, "ok_repeats": 0})
            continue
        errs = np.array([c.test_err for c in ok])
        bounds = np.array([c.bound for c in ok])
        gaps = np.array([c.gap for c in ok])
        report.rows.append(
            {
                "n": n,
                "ok_repeats": len(ok),
                "mean_test_err": float(np.mean(errs)),
                "std_test_err": float(np.std(errs)),
                "mean_bound": float(np.mean(bounds)),
                "max_gap": float(np.max(gaps)),
                "min_bound": float(np.min(bounds)),
            }
        )
    fit_rows = [r for r in report.rows if r.get("ok_repeats", 0) > 0 and r["mean_test_err"] > 0]
    if cfg.fit_drop_first and len(fit_rows) > 2:
        fit_rows = fit_rows[1:]
    if len(fit_rows) >= 2:
        xs = np.log([r["n"] for r in fit_rows])
        report.fitted_slope = fit_line(xs, np.log([r["mean_test_err"] for r in fit_rows]))[0]
        report.fit_ns = [r["n"] for r in fit_rows]
        bvals = [r["mean_bound"] for r in fit_rows if np.isfinite(r.get("mean_bound", np.nan))]
        if len(bvals) == len(fit_rows) and all(b > 0 for b in bvals):
            report.bound_slope = fit_line(xs, np.log(bvals))[0]
    task = cfg.task
    report.prediction = predicted_rate(task.nu_g, task.d_in, task.nu_h, task.d_mid).to_dict()
    return report


def _config_dict(cfg: SweepConfig) -> dict:
    d = {
        "task": cfg.task.to_dict(),
        "n_grid": list(cfg.n_grid),
        "model": cfg.model,
        "dims": list(cfg.dims) if cfg.dims else None,
        "widths": list(cfg.widths) if cfg.widths else None,
        "repeats": cfg.repeats,
        "seed": cfg.seed,
        "loss_lipschitz": cfg.loss_lipschitz,
        "loss_bound": cfg.loss_bound,
        "delta": cfg.delta,
        "ridge": cfg.ridge,
        "fit_drop_first": cfg.fit_drop_first,
        "mock_exponent": cfg.mock_exponent,
    }
    if cfg.train_cfg is not None:
        d["train"] = {
            "phases": [list(p) for p in cfg.train_cfg.phases],
            "batch_count": cfg.train_cfg.batch_count,
            "loss": cfg.train_cfg.loss,
            "seed": cfg.train_cfg.seed,
        }
    return d


def run_sweep(cfg: SweepConfig, jobs: int = 1, out_dir=None, resume: bool = False) -> ScalingReport:
    """Run all (N, repeat) cells and aggregate; cells fail soft, not the sweep.

    With ``out_dir`` given, each finished cell is checkpointed as JSON under
    ``cells/`` and ``resume=True`` skips cells already on disk.
    """
    if cfg.model == "kernel" or cfg.mock_exponent is not None:
        pass
    elif cfg.train_cfg is None:
        raise SweepError("trainable sweep needs a train_cfg")
    data = generate(cfg.task)
    cell_dir = None
    if out_dir:
        cell_dir = os.path.join(out_dir, "cells")
        os.makedirs(cell_dir, exist_ok=True)
    keys = [(n, r) for n in cfg.n_grid for r in range(cfg.repeats)]
    done = {}
    todo = []
    for n, r in keys:
        path = os.path.join(cell_dir, f"n{n}_r{r}.json") if cell_dir else None
        if resume and path and os.path.exists(path):
            with open(path) as f:
                done[(n, r)] = CellResult(**json.load(f))
        else:
            todo.append((n, r))
    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for (n, r), res in zip(todo, pool.map(_cell_worker, [(cfg, data, n, r) for n, r in todo])):
                done[(n, r)] = res
    else:
        for n, r in todo:
            done[(n, r)], _ = run_cell(cfg, data, n, r)
    if cell_dir:
        for (n, r), res in done.items():
            path = os.path.join(cell_dir, f"n{n}_r{r}.json")
            with open(path, "w") as f:
                json.dump(res.to_dict(), f, indent=2, sort_keys=True)
                f.write("\n")
    cells = [done[k] for k in keys]
    return _aggregate(cfg, cells)


def rate_heatmap(nu_grid, d_in: int, d_mid: int):
    """Predicted r* over a (nu_g, nu_h) grid; rows of (nu_g, nu_h, r_star, regime)."""
    rows = []
    for nu_g in nu_grid:
        for nu_h in nu_grid:
            p = predicted_rate(nu_g, d_in, nu_h, d_mid)
            rows.append((float(nu_g), float(nu_h), p.r_star, p.regime))
    return rows


def emit_report(report: ScalingReport, out_dir):
    """Write report.csv, predictions.json, heatmap.csv and plot.svg."""
    if not report.rows:
        raise SweepError("cannot emit an empty report")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["n", "ok_repeats", "mean_test_err", "std_test_err", "mean_bound", "max_gap", "min_bound"])
        for r in report.rows:
            wr.writerow(
                [
                    r["n"],
                    r.get("ok_repeats", 0),
                    _fmt(r.get("mean_test_err")),
                    _fmt(r.get("std_test_err")),
                    _fmt(r.get("mean_bound")),
                    _fmt(r.get("max_gap")),
                    _fmt(r.get("min_bound")),
                ]
            )
    predictions = {
        "prediction": report.prediction,
        # log-log slopes are base-invariant; both keys carry the same value
        "fitted_slope_ln": report.fitted_slope,
        "fitted_slope_log10": report.fitted_slope,
        "bound_slope": report.bound_slope,
        "fit_ns": report.fit_ns,
        "failures": len(report.failures),
    }
    with open(os.path.join(out_dir, "predictions.json"), "w") as f:
        json.dump(predictions, f, indent=2, sort_keys=True)
        f.write("\n")
    task = report.config["task"]
    grid = [0.5 * k for k in range(1, 21)]
    with open(os.path.join(out_dir, "heatmap.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["nu_g", "nu_h", "r_star", "regime"])
        for nu_g, nu_h, r_star, regime in rate_heatmap(grid, task["d_in"], task["d_mid"]):
            wr.writerow([_fmt(nu_g), _fmt(nu_h), _fmt(r_star), regime])
    plot = LogLogPlot(title="test error scaling", xlabel="N", ylabel="L1 test error / bound")
    ok_rows = [r for r in report.rows if r.get("ok_repeats", 0) > 0]
    ns = [r["n"] for r in ok_rows]
    plot.add_series("test error", ns, [r["mean_test_err"] for r in ok_rows])
    bounds = [r.get("mean_bound", float("nan")) for r in ok_rows]
    if any(np.isfinite(b) for b in bounds):
        plot.add_series("bound", ns, bounds)
    if report.fitted_slope is not None and ok_rows:
        anchor = next(r for r in ok_rows if r["n"] in report.fit_ns)
        ref = [
            anchor["mean_test_err"] * (n / anchor["n"]) ** report.fitted_slope for n in ns
        ]
        plot.add_series("fitted slope", ns, ref, dashed=True)
        plot.add_note(f"slope={report.fitted_slope:.6f}")
    if report.prediction:
        plot.add_note(f"predicted={-report.prediction['r_star']:.6f} ({report.prediction['regime']})")
    plot.write(os.path.join(out_dir, "plot.svg"))


def _fmt(v):
    if v is None:
        return ""
    return f"{float(v):.17g}"
