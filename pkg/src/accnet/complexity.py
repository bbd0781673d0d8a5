"""Per-block complexity measures and the evaluated generalization bound.

For a shallow block ``W relu(V z + b)`` the F1-norm is bounded above by the
per-neuron quantity ``sum_i ||W_:i|| sqrt(||V_i:||^2 + b_i^2)``, which is in
turn at most half the squared parameter norm.  The Lipschitz constant is
bounded by ``||W||_op ||V||_op`` (ReLU is 1-Lipschitz); an empirical probe
estimate gives a lower bound for gauging how loose that product is.

The aggregate accordion complexity is

    prod_l lip_l * sum_l (f1_l / lip_l) * sqrt(d_l + d_{l-1})

and the deep generalization bound is evaluated through the explicit dyadic
chaining construction (constant ``s0 = sum_k sqrt(k) 2^-k``) rather than an
unspecified leading constant.  The ``(1+o(1))`` factors are set to 1: the
bound's job here is slope comparison, not certified validity.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import AccNet, ShallowBlock, forward_batch
from .numerics import RngStream, op_norm, svd

#: sum_{k>=1} sqrt(k) 2^-k, the dyadic chaining constant (~1.3473)
S0_CHAINING = float(sum(math.sqrt(k) * 2.0**-k for k in range(1, 200)))


class ComplexityError(ValueError):
    pass


@dataclass(frozen=True)
class BoundConfig:
    """Inputs the bound needs beyond the network itself.

    ``loss_lipschitz`` and the per-block Lipschitz bounds are distinct
    quantities and are kept apart on purpose.  ``chaining_constant`` replaces
    the explicit chaining construction with a bare ``C log(N)/sqrt(N)`` form
    for sensitivity studies when set.
    """

    input_radius: float
    loss_lipschitz: float
    loss_bound: float
    delta: float
    n_samples: int
    chaining_constant: float | None = None

    def __post_init__(self):
        if min(self.input_radius, self.loss_lipschitz, self.loss_bound, self.delta) <= 0:
            raise ComplexityError("BoundConfig fields must be positive")
        if not self.delta < 1.0:
            raise ComplexityError("delta must be in (0,1)")
        if self.n_samples < 2:
            raise ComplexityError("n_samples must be >= 2")


def f1_upper_bound(block: ShallowBlock) -> float:
    """Per-neuron path weight sum: an upper bound on the block's F1-norm."""
    w_cols = np.linalg.norm(block.w_out, axis=0)
    v_rows = np.linalg.norm(block.v_in, axis=1)
    return float(np.sum(w_cols * np.sqrt(v_rows**2 + block.bias**2)))


def param_norm_bound(block: ShallowBlock) -> float:
    """Half the squared parameter norm; dominates f1_upper_bound (AM-GM)."""
    return 0.5 * float(
        np.sum(block.w_out**2) + np.sum(block.v_in**2) + np.sum(block.bias**2)
    )


def lip_upper_bound(block: ShallowBlock) -> float:
    return op_norm(block.w_out) * op_norm(block.v_in)


def _as_net(obj):
    return obj if isinstance(obj, AccNet) else AccNet([obj])


def lip_empirical(obj, n_probes=4096, rng: RngStream | None = None, radius=1.0, step=1e-4) -> float:
    """Max finite-difference slope over random close pairs in B(0, radius).

    This is a lower bound on the true Lipschitz constant; it never exceeds
    lip_upper_bound (up to the probe step's rounding).
    """
    net = _as_net(obj)
    if n_probes < 1:
        raise ComplexityError("n_probes must be >= 1")
    gen = (rng or RngStream(0)).generator()
    d = net.dims[0]
    xs = gen.standard_normal((n_probes, d))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    xs *= radius * gen.random((n_probes, 1)) ** (1.0 / d)
    dirs = gen.standard_normal((n_probes, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    ys = xs + step * dirs
    fx = forward_batch(net, xs)
    fy = forward_batch(net, ys)
    num = np.linalg.norm(fy - fx, axis=1)
    den = np.linalg.norm(ys - xs, axis=1)
    return float(np.max(num / den))


def block_lipschitz(net: AccNet, mode="opnorm", n_probes=4096, rng=None, radius=1.0):
    if mode == "opnorm":
        return [lip_upper_bound(b) for b in net.blocks]
    if mode == "empirical":
        base = rng or RngStream(0)
        return [
            lip_empirical(b, n_probes=n_probes, rng=base.child(i), radius=radius)
            for i, b in enumerate(net.blocks)
        ]
    raise ComplexityError(f"unknown lipschitz mode {mode!r}")


def _aggregate(f1s, lips, dims):
    prod = 1.0
    for r in lips:
        prod *= r
    total = 0.0
    for i, (f1, lip) in enumerate(zip(f1s, lips)):
        scale = math.sqrt(dims[i + 1] + dims[i])
        if lip == 0.0:
            if f1 == 0.0:
                continue
            raise ComplexityError(f"block {i} has zero Lipschitz bound but nonzero F1 bound")
        total += f1 / lip * scale
    return prod * total


def accordion_complexity(net: AccNet, lip="opnorm", n_probes=4096, rng=None, radius=1.0) -> float:
    """Product of block Lipschitz bounds times the weighted F1/Lipschitz sum."""
    f1s = [f1_upper_bound(b) for b in net.blocks]
    lips = block_lipschitz(net, lip, n_probes=n_probes, rng=rng, radius=radius)
    return _aggregate(f1s, lips, net.dims)


def opnorm_complexity(net: AccNet) -> float:
    """Same aggregate with every Lipschitz constant replaced by ||V||op ||W||op."""
    dims = net.dims
    prod = 1.0
    total = 0.0
    for i, b in enumerate(net.blocks):
        f1 = f1_upper_bound(b)
        lip = lip_upper_bound(b)
        prod *= lip
        if lip == 0.0:
            if f1 == 0.0:
                continue
            raise ComplexityError(f"block {i} has zero operator norm but nonzero F1 bound")
        total += f1 / lip * math.sqrt(dims[i + 1] + dims[i])
    return prod * total


def chained_rademacher(weighted_sum, lip_product, radius, n):
    """Explicit dyadic-chaining Rademacher bound.

    ``weighted_sum`` is sum_l (f1_l/lip_l) sqrt(d_l + d_{l-1}).  The number of
    chaining levels is M = ceil(-log2((72/sqrt(N)) s0 sqrt(e) * weighted_sum)),
    clamped to at least 1.
    """
    if weighted_sum <= 0.0 or lip_product == 0.0:
        return 0.0, 1
    arg = 72.0 / math.sqrt(n) * S0_CHAINING * math.sqrt(math.e) * weighted_sum
    m = max(1, math.ceil(-math.log2(arg)))
    rad = 144.0 / math.sqrt(n) * m * S0_CHAINING * math.sqrt(math.e) * lip_product * radius * weighted_sum
    return rad, m


@dataclass(frozen=True)
class BoundBreakdown:
    rademacher: float
    chaining_levels: int
    confidence_term: float
    bound: float


def generalization_bound(net: AccNet, cfg: BoundConfig, lip="opnorm", rng=None) -> BoundBreakdown:
    """High-probability generalization gap bound for the given net.

    bound = 2 * loss_lipschitz * Rademacher + loss_bound * sqrt(2 log(2/delta) / N).
    The single-block case is the shallow specialization of the same code path.
    """
    f1s = [f1_upper_bound(b) for b in net.blocks]
    lips = block_lipschitz(net, lip, rng=rng, radius=cfg.input_radius)
    dims = net.dims
    weighted = 0.0
    prod = 1.0
    for i, (f1, lp) in enumerate(zip(f1s, lips)):
        prod *= lp
        if lp == 0.0:
            if f1 == 0.0:
                continue
            raise ComplexityError(f"block {i} has zero Lipschitz bound but nonzero F1 bound")
        weighted += f1 / lp * math.sqrt(dims[i + 1] + dims[i])
    n = cfg.n_samples
    conf = cfg.loss_bound * math.sqrt(2.0 * math.log(2.0 / cfg.delta) / n)
    if cfg.chaining_constant is not None:
        rad = cfg.chaining_constant * prod * cfg.input_radius * weighted * math.log(n) / math.sqrt(n)
        m = 0
    else:
        rad, m = chained_rademacher(weighted, prod, cfg.input_radius, n)
    return BoundBreakdown(rad, m, conf, 2.0 * cfg.loss_lipschitz * rad + conf)


def shallow_generalization_bound(block: ShallowBlock, cfg: BoundConfig) -> BoundBreakdown:
    return generalization_bound(AccNet([block]), cfg)


def rank_estimate(m, rel_tol=None) -> int:
    """Count of dominant singular values (the 'outliers at the top').

    With ``rel_tol`` given, counts values >= rel_tol * s_max.  Otherwise
    splits at the largest consecutive ratio when that ratio exceeds 10, and
    falls back to rel_tol = 1e-2.  Invariant under nonzero rescaling.
    """
    s = svd(m).s
    if s.size == 0 or s[0] == 0.0:
        return 0
    if rel_tol is not None:
        return int(np.sum(s >= rel_tol * s[0]))
    best_ratio, best_i = 0.0, -1
    for i in range(s.size - 1):
        ratio = math.inf if s[i + 1] == 0.0 else s[i] / s[i + 1]
        if ratio > best_ratio:
            best_ratio, best_i = ratio, i
    if best_ratio > 10.0:
        return best_i + 1
    return int(np.sum(s >= 1e-2 * s[0]))


@dataclass
class ComplexityReport:
    """Per-block bounds plus aggregates and the evaluated deep bound."""

    per_block: list = field(default_factory=list)  # dicts: f1_bound, lip_bound, d_in, d_out
    complexity: float = 0.0          # aggregate with the selected Lipschitz mode
    complexity_opnorm: float = 0.0   # aggregate with operator-norm Lipschitz bounds
    lip_mode: str = "opnorm"
    bound: float = 0.0
    rademacher: float = 0.0
    chaining_levels: int = 0
    confidence_term: float = 0.0

    def to_json(self) -> str:
        payload = {
            "per_block": self.per_block,
            "complexity": self.complexity,
            "complexity_opnorm": self.complexity_opnorm,
            "lip_mode": self.lip_mode,
            "bound": self.bound,
            "rademacher": self.rademacher,
            "chaining_levels": self.chaining_levels,
            "confidence_term": self.confidence_term,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def table(self) -> str:
        lines = [f"{'block':>5} {'d_in':>5} {'d_out':>6} {'f1_bound':>12} {'lip_bound':>12}"]
        for i, row in enumerate(self.per_block):
            lines.append(
                f"{i:>5} {row['d_in']:>5} {row['d_out']:>6} "
                f"{row['f1_bound']:>12.5g} {row['lip_bound']:>12.5g}"
            )
        lines.append(f"complexity ({self.lip_mode}): {self.complexity:.6g}")
        lines.append(f"complexity (opnorm):  {self.complexity_opnorm:.6g}")
        lines.append(f"generalization bound: {self.bound:.6g}")
        return "\n".join(lines)


def complexity_report(net: AccNet, cfg: BoundConfig, lip="opnorm", rng=None) -> ComplexityReport:
    per_block = []
    dims = net.dims
    for i, b in enumerate(net.blocks):
        per_block.append(
            {
                "f1_bound": f1_upper_bound(b),
                "lip_bound": lip_upper_bound(b),
                "d_in": dims[i],
                "d_out": dims[i + 1],
            }
        )
    breakdown = generalization_bound(net, cfg, lip=lip, rng=rng)
    return ComplexityReport(
        per_block=per_block,
        complexity=accordion_complexity(net, lip=lip, rng=rng, radius=cfg.input_radius),
        complexity_opnorm=opnorm_complexity(net),
        lip_mode=lip,
        bound=breakdown.bound,
        rademacher=breakdown.rademacher,
        chaining_levels=breakdown.chaining_levels,
        confidence_term=breakdown.confidence_term,
    )
