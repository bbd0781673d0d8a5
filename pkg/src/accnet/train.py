"""Training for accordion nets: manual backprop, Adam, phased schedules.

Gradients are exact reverse-mode derivatives of the forward pass with the
ReLU subgradient fixed to 0 at the kink.  Weight decay is decoupled from the
Adam update (param <- param - lr * (adam_step + wd * param)) and applies to
biases as well, since the F1 bound counts the bias norm.  Runs are
deterministic given (seed, config): the only randomness is the per-epoch
shuffle, drawn from a dedicated stream.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import AccNet, ModelError, ShallowBlock

LOSS_KINDS = ("l1", "mse", "hinge")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch, last_loss):
        super().__init__(f"loss became non-finite at epoch {epoch}; last finite loss {last_loss:.6g}")
        self.epoch = epoch
        self.last_loss = last_loss


@dataclass(frozen=True)
class TrainConfig:
    """Phases are (epochs, lr, weight_decay) triples run in order."""

    phases: tuple
    batch_count: int = 5
    loss: str = "l1"
    seed: int = 0

    def __post_init__(self):
        phases = tuple((int(e), float(lr), float(wd)) for e, lr, wd in self.phases)
        if not phases:
            raise ValueError("need at least one phase")
        for e, lr, wd in phases:
            if e < 1 or lr <= 0.0 or wd < 0.0:
                raise ValueError(f"bad phase ({e}, {lr}, {wd})")
        if self.batch_count < 1:
            raise ValueError("batch_count must be >= 1")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        object.__setattr__(self, "phases", phases)

    @property
    def total_epochs(self):
        return sum(e for e, _, _ in self.phases)


def three_phase_schedule(epochs_per_phase=1200):
    """The reference 3-phase recipe: decaying lr, growing weight decay."""
    e = int(epochs_per_phase)
    return ((e, 1.5e-3, 0.0), (e, 0.4e-3, 0.002), (e, 0.1e-3, 0.005))


def loss_l1(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean(np.abs(pred - target)))


def loss_mse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def loss_hinge(scores, true_class) -> float:
    """Multiclass hinge: zero iff the margin over the best other class is >= 1."""
    scores = np.asarray(scores, dtype=np.float64)
    k = scores.shape[-1]
    if k < 2:
        raise ValueError("hinge loss needs at least 2 classes")
    if not 0 <= true_class < k:
        raise ValueError(f"true_class {true_class} out of range for {k} classes")
    others = np.delete(scores, true_class, axis=-1)
    margin = scores[true_class] - np.max(others)
    return float(max(0.0, 1.0 - margin))


def _batch_loss_grad(kind, pred, target):
    """Mean batch loss and its gradient w.r.t. pred (both over samples and coords)."""
    n = pred.shape[0]
    if kind == "l1":
        diff = pred - target
        return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size
    if kind == "mse":
        diff = pred - target
        return float(np.mean(diff**2)), 2.0 * diff / diff.size
    if kind == "hinge":
        labels = np.asarray(target, dtype=np.int64).reshape(-1)
        total = 0.0
        grad = np.zeros_like(pred)
        for i in range(n):
            s = pred[i]
            t = int(labels[i])
            masked = s.copy()
            masked[t] = -np.inf
            j = int(np.argmax(masked))
            margin = s[t] - s[j]
            if margin < 1.0:
                total += 1.0 - margin
                grad[i, t] -= 1.0
                grad[i, j] += 1.0
        return total / n, grad / n
    raise ValueError(f"unknown loss kind {kind}")


def _forward_cache(params, x):
    """Forward pass keeping per-block inputs, preactivations and activations."""
    z = x
    cache = []
    for w, v, b in params:
        pre = z @ v.T + b
        act = np.maximum(pre, 0.0)
        cache.append((z, pre, act))
        z = act @ w.T
    return z, cache


def _backward_from_cache(params, cache, g):
    """Reverse pass from upstream g (n, d_L); returns [(dw, dv, db), ...]."""
    grads = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        w, v, b = params[i]
        z, pre, act = cache[i]
        dw = g.T @ act
        da = g @ w
        dp = np.where(pre > 0.0, da, 0.0)
        dv = dp.T @ z
        db = dp.sum(axis=0)
        g = dp @ v
        grads[i] = (dw, dv, db)
    return grads


def backward(net: AccNet, x, upstream):
    """Exact parameter gradients of ``upstream . forward(net, x)`` for one sample."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    g = np.asarray(upstream, dtype=np.float64).reshape(1, -1)
    params = [(b.w_out, b.v_in, b.bias) for b in net.blocks]
    _, cache = _forward_cache(params, x)
    return _backward_from_cache(params, cache, g)


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params):
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0


def adam_step(params, grads, state: AdamState, lr, weight_decay=0.0):
    """In-place Adam with decoupled weight decay on a flat list of arrays."""
    state.t += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        kernels.adam_update(
            p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
            m.reshape(-1), v.reshape(-1),
            state.t, lr, weight_decay, ADAM_BETA1, ADAM_BETA2, ADAM_EPS,
        )


@dataclass
class HistoryRow:
    epoch: int
    phase: int
    train_loss: float
    test_loss: float
    param_norm: float


@dataclass
class History:
    rows: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["epoch", "phase", "train_loss", "test_loss", "param_norm"])
            for r in self.rows:
                wr.writerow([r.epoch, r.phase, f"{r.train_loss:.17g}", f"{r.test_loss:.17g}", f"{r.param_norm:.17g}"])

    @property
    def param_norms(self):
        return np.array([r.param_norm for r in self.rows])

    @property
    def test_losses(self):
        return np.array([r.test_loss for r in self.rows])


def _param_norm(flat_params):
    return float(np.sqrt(sum(float(np.sum(p * p)) for p in flat_params)))


def _batch_slices(n, batch_count):
    # equal parts, remainder folded into the last batch
    bc = min(batch_count, n)
    base = n // bc
    bounds = [i * base for i in range(bc)] + [n]
    return [(bounds[i], bounds[i + 1]) for i in range(bc)]


def train(net: AccNet, x_train, y_train, x_test, y_test, cfg: TrainConfig):
    """Run the phased schedule; returns (trained AccNet, History)."""
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if x_train.shape[1] != net.dims[0]:
        raise ModelError(f"data dim {x_train.shape[1]} != net input dim {net.dims[0]}")
    params_by_block = [
        (b.w_out.copy(), b.v_in.copy(), b.bias.copy()) for b in net.blocks
    ]
    flat = [a for triple in params_by_block for a in triple]
    state = AdamState(flat)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(0xE70C,))))
    n = x_train.shape[0]
    history = History()
    epoch = 0
    last_finite = float("nan")
    for phase_i, (epochs, lr, wd) in enumerate(cfg.phases):
        for _ in range(epochs):
            perm = rng.permutation(n)
            epoch_loss = 0.0
            n_batches = 0
            for lo, hi in _batch_slices(n, cfg.batch_count):
                idx = perm[lo:hi]
                xb, yb = x_train[idx], y_train[idx]
                out, cache = _forward_cache(params_by_block, xb)
                loss, g = _batch_loss_grad(cfg.loss, out, yb)
                grads = _backward_from_cache(params_by_block, cache, g)
                flat_grads = [a for triple in grads for a in triple]
                adam_step(flat, flat_grads, state, lr, wd)
                epoch_loss += loss
                n_batches += 1
            epoch_loss /= n_batches
            if not np.isfinite(epoch_loss):
                raise TrainingDiverged(epoch, last_finite)
            last_finite = epoch_loss
            test_out, _ = _forward_cache(params_by_block, np.asarray(x_test, dtype=np.float64))
            test_loss, _ = _batch_loss_grad(cfg.loss, test_out, np.asarray(y_test, dtype=np.float64))
            history.rows.append(
                HistoryRow(epoch, phase_i, epoch_loss, test_loss, _param_norm(flat))
            )
            epoch += 1
    trained = AccNet([ShallowBlock(w, v, b) for w, v, b in params_by_block])
    return trained, history
