"""Command-line entry point: gen / train / bound / sweep / entropy.

Each subcommand reads a JSON config (validated against a known key set,
``schema_version`` gated) with ``--set dotted.key=value`` overrides; flags
win.  Every artifact directory carries the fully resolved configuration so
runs are self-describing and reproducible.

Exit codes: 0 success, 2 config/validation error, 3 numeric failure,
4 partial sweep (some cells failed; completed cells are kept).
"""

import json
import os
import sys
import time

import click

from .complexity import BoundConfig, ComplexityError, complexity_report
from .entropy import (
    EllipsoidSpec,
    EntropyError,
    ball_entropy_bound,
    convex_hull_entropy,
    dudley_bound,
    ellipsoid_entropy,
    greedy_cover,
    sobolev_entropy_bound,
)
from .model import ModelError, load_model, random_accnet, save_model
from .numerics import NumericsError, RngStream
from .scaling import SweepConfig, SweepError, emit_report, run_sweep
from .taskgen import TaskError, TaskSpec, generate, load_dataset, save_dataset, _read_csv
from .train import TrainConfig, TrainingDiverged, train

CONFIG_SCHEMA_VERSION = 1

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_PARTIAL = 4


class ConfigError(ValueError):
    pass


_SECTION_KEYS = {
    "task": {
        "d_in", "d_mid", "d_out", "nu_g", "nu_h", "n_total", "n_test",
        "length_scale", "input_radius", "seed",
    },
    "train": {"phases", "batch_count", "loss", "seed"},
    "arch": {"dims", "widths", "init_seed"},
    "bound": {
        "input_radius", "loss_lipschitz", "loss_bound", "delta", "n_samples",
        "chaining_constant", "lip_mode",
    },
    "sweep": {
        "n_grid", "model", "dims", "widths", "repeats", "seed",
        "loss_lipschitz", "loss_bound", "delta", "ridge", "fit_drop_first",
    },
}


def _load_config(path, overrides, allowed_sections):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    version = cfg.pop("schema_version", None)
    if version is None:
        raise ConfigError("config missing schema_version")
    if int(version) > CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version} (this build reads <= {CONFIG_SCHEMA_VERSION})")
    for key, value in (overrides or {}).items():
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key}: {p} is not an object")
        node[parts[-1]] = value
    unknown = set(cfg) - set(allowed_sections)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for section in cfg:
        if section in _SECTION_KEYS and isinstance(cfg[section], dict):
            bad = set(cfg[section]) - _SECTION_KEYS[section]
            if bad:
                raise ConfigError(f"unknown keys in '{section}': {sorted(bad)}")
    missing = [s for s in allowed_sections if allowed_sections[s] and s not in cfg]
    if missing:
        raise ConfigError(f"config missing required sections: {missing}")
    cfg["schema_version"] = int(version)
    return cfg


def _parse_sets(pairs):
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(f"--set needs key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _task_spec(section) -> TaskSpec:
    try:
        return TaskSpec(**section)
    except (TypeError, TaskError) as exc:
        raise ConfigError(f"bad task config: {exc}") from exc


def _train_cfg(section) -> TrainConfig:
    try:
        return TrainConfig(
            phases=tuple(tuple(p) for p in section["phases"]),
            batch_count=int(section.get("batch_count", 5)),
            loss=section.get("loss", "l1"),
            seed=int(section.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad train config: {exc}") from exc


def _echo_manifest(out_dir, cfg):
    with open(os.path.join(out_dir, "run_config.json"), "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")


@click.group()
def main():
    """Accordion networks: tasks, training, bounds, scaling sweeps, entropy tables."""


def _fail(code, message):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@main.command("gen")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--set", "sets", multiple=True, help="override config, e.g. --set task.seed=7")
def cmd_gen(config_path, out_dir, sets):
    """Generate a compositional GP dataset into OUT (manifest.json, x.csv, y.csv)."""
    try:
        cfg = _load_config(config_path, _parse_sets(sets), {"task": True})
        spec = _task_spec(cfg["task"])
    except ConfigError as exc:
        _fail(EXIT_CONFIG, exc)
    t0 = time.time()
    try:
        ds = generate(spec)
    except NumericsError as exc:
        _fail(EXIT_NUMERIC, exc)
    os.makedirs(out_dir, exist_ok=True)
    save_dataset(ds, out_dir)
    _echo_manifest(out_dir, cfg)
    click.echo(f"spec: {json.dumps(spec.to_dict(), sort_keys=True)}")
    click.echo(f"generated {spec.n_total} rows ({spec.n_train} train) in {time.time() - t0:.2f}s -> {out_dir}")


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--set", "sets", multiple=True)
def cmd_train(config_path, data_dir, out_dir, sets):
    """Train a net on a generated dataset; writes model.json/.bin and history.csv."""
    try:
        cfg = _load_config(config_path, _parse_sets(sets), {"train": True, "arch": True})
        tcfg = _train_cfg(cfg["train"])
        arch = cfg["arch"]
        dims = tuple(int(d) for d in arch["dims"])
        widths = tuple(int(w) for w in arch["widths"])
        init_seed = int(arch.get("init_seed", 0))
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"bad config: {exc}")
    try:
        ds = load_dataset(data_dir)
    except (TaskError, OSError, KeyError, json.JSONDecodeError) as exc:
        _fail(EXIT_CONFIG, f"bad dataset: {exc}")
    if dims[0] != ds.x.shape[1] or dims[-1] != ds.y.shape[1]:
        _fail(EXIT_CONFIG, f"arch dims {dims} do not match dataset ({ds.x.shape[1]} -> {ds.y.shape[1]})")
    net = random_accnet(dims, widths, RngStream(init_seed).generator())
    try:
        trained, history = train(net, ds.x_train, ds.y_train, ds.x_test, ds.y_test, tcfg)
    except TrainingDiverged as exc:
        _fail(EXIT_NUMERIC, exc)
    os.makedirs(out_dir, exist_ok=True)
    save_model(trained, os.path.join(out_dir, "model.json"))
    history.write_csv(os.path.join(out_dir, "history.csv"))
    _echo_manifest(out_dir, cfg)
    bcfg = BoundConfig(
        input_radius=float(ds.manifest.get("input_radius", 1.0)),
        loss_lipschitz=1.0,
        loss_bound=1.0,
        delta=0.05,
        n_samples=ds.n_train,
    )
    report = complexity_report(trained, bcfg)
    click.echo(report.table())
    last = history.rows[-1]
    click.echo(f"final: train={last.train_loss:.6g} test={last.test_loss:.6g} norm={last.param_norm:.6g}")


@main.command("bound")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
@click.option("--set", "sets", multiple=True)
def cmd_bound(model_path, config_path, out_path, sets):
    """Evaluate the generalization bound of a saved model; JSON report + table."""
    try:
        cfg = _load_config(config_path, _parse_sets(sets), {"bound": True})
        section = dict(cfg["bound"])
        lip_mode = section.pop("lip_mode", "opnorm")
        bcfg = BoundConfig(**section)
    except (ConfigError, ComplexityError, TypeError) as exc:
        _fail(EXIT_CONFIG, f"bad config: {exc}")
    try:
        net = load_model(model_path)
    except (ModelError, OSError, KeyError, json.JSONDecodeError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"bad model file: {exc}")
    try:
        report = complexity_report(net, bcfg, lip=lip_mode, rng=RngStream(0))
    except (ComplexityError, NumericsError) as exc:
        _fail(EXIT_NUMERIC, exc)
    click.echo(report.table())
    if out_path:
        with open(out_path, "w") as f:
            f.write(report.to_json())
            f.write("\n")


@main.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--jobs", default=0, help="worker processes (0 = cpu count)")
@click.option("--mock-trainer", is_flag=True, help="plant exact N^-1/2 errors instead of training")
@click.option("--resume", is_flag=True, help="skip cells already checkpointed in OUT/cells")
@click.option("--set", "sets", multiple=True)
def cmd_sweep(config_path, out_dir, jobs, mock_trainer, resume, sets):
    """Run a scaling sweep; writes report.csv, predictions.json, heatmap.csv, plot.svg."""
    try:
        cfg = _load_config(config_path, _parse_sets(sets), {"task": True, "sweep": True, "train": False})
        spec = _task_spec(cfg["task"])
        sweep_section = dict(cfg["sweep"])
        model_kind = sweep_section.get("model", "accnet")
        tcfg = None
        if "train" in cfg:
            tcfg = _train_cfg(cfg["train"])
        elif model_kind != "kernel" and not mock_trainer:
            raise ConfigError("sweep over a trainable model needs a 'train' section")
        scfg = SweepConfig(
            task=spec,
            train_cfg=tcfg,
            mock_exponent=-0.5 if mock_trainer else None,
            **sweep_section,
        )
    except (ConfigError, SweepError, TypeError) as exc:
        _fail(EXIT_CONFIG, f"bad config: {exc}")
    if len(scfg.n_grid) < 2:
        click.echo("n_grid has a single point; slope will be reported as null", err=True)
    jobs = jobs or (os.cpu_count() or 1)
    try:
        report = run_sweep(scfg, jobs=jobs, out_dir=out_dir, resume=resume)
    except (NumericsError,) as exc:
        _fail(EXIT_NUMERIC, exc)
    os.makedirs(out_dir, exist_ok=True)
    _echo_manifest(out_dir, cfg)
    emit_report(report, out_dir)
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        f.write(report.to_json())
        f.write("\n")
    slope = "null" if report.fitted_slope is None else f"{report.fitted_slope:.4f}"
    click.echo(f"fitted slope: {slope}; predicted rate: -{report.prediction['r_star']}")
    if report.failures:
        click.echo(f"{len(report.failures)} cells failed; completed cells kept in {out_dir}/cells", err=True)
        sys.exit(EXIT_PARTIAL)


_FORMULAS = ("ellipsoid", "ball", "sobolev", "dudley", "convex-hull", "greedy")


def _base_fn(params):
    base = params.get("base", {"kind": "const", "value": 1.0})
    kind = base.get("kind", "const")
    if kind == "const":
        value = float(base.get("value", 1.0))
        return lambda eps: value
    if kind == "sobolev":
        return lambda eps: sobolev_entropy_bound(
            float(base["radius"]), eps, int(base["d"]), float(base["nu"]), float(base["c0"])
        )
    if kind == "ball":
        return lambda eps: ball_entropy_bound(float(base["trace_k"]), eps)
    raise ConfigError(f"unknown base kind {kind!r}")


@main.command("entropy")
@click.option("--formula", required=True)
@click.option("--params", default="{}", help="JSON parameters for the chosen formula")
@click.option("--eps", "eps_list", required=True, help="comma-separated radii")
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_entropy(formula, params, eps_list, out_path):
    """Tabulate a covering/chaining formula over an eps grid into a CSV."""
    if formula not in _FORMULAS:
        _fail(EXIT_CONFIG, f"unknown formula {formula!r}; choices: {', '.join(_FORMULAS)}")
    try:
        p = json.loads(params)
        eps_values = [float(e) for e in eps_list.split(",") if e]
    except (json.JSONDecodeError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"bad parameters: {exc}")
    rows = []
    try:
        if formula == "ellipsoid":
            spec = EllipsoidSpec(tuple(p["eigenvalues"]))
            rows = [(e, ellipsoid_entropy(spec, e)) for e in eps_values]
        elif formula == "ball":
            rows = [(e, ball_entropy_bound(float(p["trace_k"]), e)) for e in eps_values]
        elif formula == "sobolev":
            rows = [
                (e, sobolev_entropy_bound(float(p["radius"]), e, int(p["d"]), float(p["nu"]), float(p["c0"])))
                for e in eps_values
            ]
        elif formula == "dudley":
            base = _base_fn(p)
            n = int(p.get("n", 100))
            levels = int(p.get("levels", 1))
            rows = [(c, dudley_bound(base, c, n, levels)) for c in eps_values]
        elif formula == "convex-hull":
            base = _base_fn(p)
            levels = int(p.get("levels", 1))
            rows = [(b, convex_hull_entropy(base, b, levels)) for b in eps_values]
        elif formula == "greedy":
            pts = _read_csv(p["points_csv"])
            rows = [(e, float(greedy_cover(pts, e))) for e in eps_values]
    except (KeyError, EntropyError, TaskError, TypeError) as exc:
        _fail(EXIT_CONFIG, f"bad parameters for {formula}: {exc}")
    with open(out_path, "w", newline="") as f:
        f.write("eps,value\n")
        for e, v in rows:
            f.write(f"{e:.17g},{v:.17g}\n")
    click.echo(f"wrote {len(rows)} rows -> {out_path}")


if __name__ == "__main__":
    main()
