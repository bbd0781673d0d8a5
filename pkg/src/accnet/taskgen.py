"""Synthetic compositional regression tasks from Matern GP draws.

The generator follows a five-step recipe: sample inputs X uniformly in a
ball, build the Matern Gram matrix K_g(X) with smoothness nu_g, draw the
d_mid intermediate columns Z ~ N(0, K_g), build K_h(Z) with nu_h, and draw
the d_out target columns Y ~ N(0, K_h).  Z is transient.  Smoothness nu
controls differentiability: nu=1/2 is the Laplacian kernel, nu->inf the RBF.

Everything is seeded through named substreams, so a spec generates the same
dataset bytes on every run.  CSV output uses 17 significant digits for exact
float64 round-trips.
"""

import csv
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln, kve

from . import kernels
from .numerics import NumericsError, RngStream, cholesky_jitter

GENERATOR_VERSION = 1

_HALF_INTEGER_FAST = (0.5, 1.5, 2.5)


class TaskError(ValueError):
    pass


@dataclass(frozen=True)
class TaskSpec:
    d_in: int
    d_mid: int
    d_out: int
    nu_g: float
    nu_h: float
    n_total: int
    n_test: int
    length_scale: float = 1.0
    input_radius: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.d_in, self.d_mid, self.d_out) < 1:
            raise TaskError("dimensions must be >= 1")
        if self.nu_g <= 0 or self.nu_h <= 0:
            raise TaskError("smoothness parameters must be positive")
        if self.length_scale <= 0 or self.input_radius <= 0:
            raise TaskError("length_scale and input_radius must be positive")
        if not 0 < self.n_test < self.n_total:
            raise TaskError("need 0 < n_test < n_total")

    @property
    def n_train(self):
        return self.n_total - self.n_test

    def to_dict(self):
        return asdict(self)


@dataclass
class DataSet:
    x: np.ndarray
    y: np.ndarray
    manifest: dict

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise TaskError("x and y row counts differ")

    @property
    def n_train(self):
        return int(self.manifest["n_train"])

    @property
    def x_train(self):
        return self.x[: self.n_train]

    @property
    def y_train(self):
        return self.y[: self.n_train]

    @property
    def x_test(self):
        return self.x[self.n_train :]

    @property
    def y_test(self):
        return self.y[self.n_train :]


def matern(r, nu: float, length_scale: float = 1.0):
    """Matern correlation at distance r (scalar or array); equals 1 at r=0.

    Half-integer nu in {0.5, 1.5, 2.5} uses the closed forms; other nu go
    through the modified Bessel function in log space, with arguments below
    1e-9 clamped to the exact limit 1.
    """
    if nu <= 0 or length_scale <= 0:
        raise TaskError("nu and length_scale must be positive")
    r_arr = np.asarray(r, dtype=np.float64)
    scalar = r_arr.ndim == 0
    r_arr = np.atleast_1d(r_arr)
    if np.any(r_arr < 0):
        raise TaskError("distances must be nonnegative")
    if nu in _HALF_INTEGER_FAST:
        out = kernels.matern_half_integer(r_arr, nu, length_scale)
    else:
        arg = math.sqrt(2.0 * nu) * r_arr / length_scale
        out = np.ones_like(arg)
        live = arg > 1e-9
        a = arg[live]
        # 2^(1-nu)/Gamma(nu) * a^nu * K_nu(a), assembled in log space;
        # kve = K_nu * exp(a) keeps the Bessel factor in range for large a
        log_val = (1.0 - nu) * math.log(2.0) - gammaln(nu) + nu * np.log(a) - a
        out[live] = np.exp(log_val) * kve(nu, a)
    return float(out[0]) if scalar else out


def gram(xs, nu: float, length_scale: float = 1.0) -> np.ndarray:
    """Pairwise Matern Gram matrix of the rows of xs (exactly symmetric, unit diagonal)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2:
        raise TaskError("gram expects a 2-D array of points")
    d = kernels.pairwise_dists(xs)
    k = matern(d, nu, length_scale)
    np.fill_diagonal(k, 1.0)
    return k


def gram_cross(xs, ys, nu: float, length_scale: float = 1.0) -> np.ndarray:
    """Matern kernel matrix between two point sets (len(xs) x len(ys))."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    d2 = (
        np.sum(xs * xs, axis=1)[:, None]
        + np.sum(ys * ys, axis=1)[None, :]
        - 2.0 * xs @ ys.T
    )
    return matern(np.sqrt(np.clip(d2, 0.0, None)), nu, length_scale)


def gp_sample(k, n_cols: int, rng: RngStream, jitter0: float = 0.0) -> np.ndarray:
    """Draw n_cols i.i.d. columns from N(0, k + jitter I) via a Cholesky factor."""
    l, _ = cholesky_jitter(k, jitter0)
    g = rng.generator().standard_normal((l.shape[0], n_cols))
    return l @ g


def sample_ball(n: int, d: int, radius: float, rng: RngStream) -> np.ndarray:
    """n points uniform in the d-ball of the given radius."""
    gen = rng.generator()
    x = gen.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x *= radius * gen.random((n, 1)) ** (1.0 / d)
    return x


def generate(spec: TaskSpec) -> DataSet:
    """Run the five-step composition recipe for the given task spec."""
    root = RngStream(spec.seed)
    try:
        x = sample_ball(spec.n_total, spec.d_in, spec.input_radius, root.child(1))
        k_g = gram(x, spec.nu_g, spec.length_scale)
        z = gp_sample(k_g, spec.d_mid, root.child(2))
        k_h = gram(z, spec.nu_h, spec.length_scale)
        y = gp_sample(k_h, spec.d_out, root.child(3))
    except NumericsError as exc:
        raise NumericsError(f"task generation failed for spec {spec.to_dict()}: {exc}") from exc
    manifest = dict(spec.to_dict())
    manifest.update(
        {
            "generator_version": GENERATOR_VERSION,
            "n_train": spec.n_train,
            "split": "first n_train rows train, remainder test",
        }
    )
    return DataSet(x, y, manifest)


def _write_csv(path, array, prefix):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow([f"{prefix}{j}" for j in range(array.shape[1])])
        for row in array:
            wr.writerow([f"{v:.17g}" for v in row])


def save_dataset(ds: DataSet, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(ds.manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    _write_csv(os.path.join(out_dir, "x.csv"), ds.x, "x")
    _write_csv(os.path.join(out_dir, "y.csv"), ds.y, "y")


def _read_csv(path, expected_cols=None):
    rows = []
    with open(path, newline="") as f:
        rd = csv.reader(f)
        try:
            header = next(rd)
        except StopIteration:
            raise TaskError(f"{path}: empty file") from None
        width = len(header)
        if expected_cols is not None and width != expected_cols:
            raise TaskError(f"{path}: expected {expected_cols} columns, found {width}")
        for lineno, row in enumerate(rd, start=2):
            if len(row) != width:
                raise TaskError(f"{path}:{lineno}: ragged row ({len(row)} of {width} cells)")
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise TaskError(f"{path}:{lineno}: non-numeric cell") from None
    if not rows:
        raise TaskError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def load_dataset(in_dir) -> DataSet:
    with open(os.path.join(in_dir, "manifest.json")) as f:
        manifest = json.load(f)
    x = _read_csv(os.path.join(in_dir, "x.csv"), int(manifest["d_in"]))
    y = _read_csv(os.path.join(in_dir, "y.csv"), int(manifest["d_out"]))
    return DataSet(x, y, manifest)


def save_csv(ds: DataSet, path):
    """Single-file form: x columns then y columns, one header row."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(
            [f"x{j}" for j in range(ds.x.shape[1])] + [f"y{j}" for j in range(ds.y.shape[1])]
        )
        for xr, yr in zip(ds.x, ds.y):
            wr.writerow([f"{v:.17g}" for v in xr] + [f"{v:.17g}" for v in yr])


def load_csv(path, manifest: dict) -> DataSet:
    """Generic ingestion hook for external numeric CSVs.

    The manifest must carry d_in, d_out and n_train; the file must have
    d_in + d_out columns.  This is the stand-in for dataset-specific
    preprocessing pipelines, which are out of scope.
    """
    d_in = int(manifest["d_in"])
    d_out = int(manifest["d_out"])
    data = _read_csv(path, d_in + d_out)
    n_train = int(manifest["n_train"])
    if not 0 < n_train < data.shape[0]:
        raise TaskError(f"manifest n_train {n_train} incompatible with {data.shape[0]} rows")
    full = dict(manifest)
    full.setdefault("split", "first n_train rows train, remainder test")
    return DataSet(data[:, :d_in], data[:, d_in:], full)
