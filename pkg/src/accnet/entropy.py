"""Metric-entropy formulas and an empirical greedy covering oracle.

Every function here returns a log-covering-number quantity (natural log
unless a formula is explicitly dyadic).  ``greedy_cover`` provides the
brute-force witness used to sanity-check the closed forms on point clouds:
the greedy net size is an upper-bound witness of the true covering number at
eps and a lower-bound witness at 2*eps (standard packing/covering sandwich).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels


class EntropyError(ValueError):
    pass


@dataclass(frozen=True)
class EllipsoidSpec:
    """Eigenvalues (radii squared) of an ellipsoid, sorted nonincreasing."""

    eigenvalues: tuple

    def __post_init__(self):
        eig = tuple(float(v) for v in self.eigenvalues)
        if not eig or any(v <= 0.0 for v in eig):
            raise EntropyError("eigenvalues must be positive")
        if any(eig[i] < eig[i + 1] for i in range(len(eig) - 1)):
            raise EntropyError("eigenvalues must be sorted nonincreasing")
        object.__setattr__(self, "eigenvalues", eig)

    @property
    def radii(self):
        return tuple(math.sqrt(v) for v in self.eigenvalues)


def ellipsoid_entropy(spec: EllipsoidSpec, eps: float) -> float:
    """sum over radii >= eps of log(radius/eps); zero when no radius reaches eps."""
    if eps <= 0.0:
        raise EntropyError("eps must be positive")
    return float(sum(math.log(r / eps) for r in spec.radii if r >= eps))


def ellipsoid_condition_ok(spec: EllipsoidSpec, eps: float) -> bool:
    """Finite-sample proxy of the formula's asymptotic applicability condition.

    The asymptotic statement needs log(r_max/eps) small next to
    M_eps^2 / (k_eps log d); this proxy just checks <=.  Reported as a flag,
    never a failure: the formula itself is still evaluated.
    """
    radii = spec.radii
    k_eps = sum(1 for r in radii if r >= eps)
    if k_eps == 0:
        return True
    m_eps = ellipsoid_entropy(spec, eps)
    d = max(len(radii), 2)
    return math.log(radii[0] / eps) <= m_eps**2 / (k_eps * math.log(d))


def ball_entropy_bound(trace_k: float, eps: float) -> float:
    """Trace bound for covering a unit ball under a K-weighted norm: TrK/(2 eps^2)."""
    if trace_k < 0.0:
        raise EntropyError("trace must be nonnegative")
    if eps <= 0.0:
        raise EntropyError("eps must be positive")
    return trace_k / (2.0 * eps * eps)


def composition_entropy(per_layer, lips):
    """Combine per-layer covers of a composed chain.

    ``per_layer`` is a sequence of (entropy_l, eps_l); ``lips`` the per-layer
    Lipschitz constants.  Layer l's radius is inflated by the Lipschitz
    product of everything applied after it:

        total_eps = sum_l (prod_{j>l} lip_j) * eps_l,  total_entropy = sum_l entropy_l.
    """
    per_layer = list(per_layer)
    lips = [float(x) for x in lips]
    if len(per_layer) != len(lips):
        raise EntropyError("per_layer and lips must have equal length")
    n = len(lips)
    total_eps = 0.0
    total_entropy = 0.0
    for l in range(n):
        suffix = 1.0
        for j in range(l + 1, n):
            suffix *= lips[j]
        ent, eps = per_layer[l]
        total_eps += suffix * eps
        total_entropy += ent
    return total_eps, total_entropy


def convex_hull_entropy(base, bound_b: float, levels: int) -> float:
    """Log-covering bound of the convex hull at radius 2 * B * 2^-K.

    The underlying statement bounds the square root of the log covering
    number by sqrt(18) * sum_{k<=K} 2^(K-k) sqrt(base(B 2^-k)); this returns
    the squared (log-covering) form.
    """
    if levels < 1:
        raise EntropyError("levels must be >= 1")
    if bound_b <= 0.0:
        raise EntropyError("bound_b must be positive")
    total = 0.0
    for k in range(1, levels + 1):
        total += 2.0 ** (levels - k) * math.sqrt(base(bound_b * 2.0**-k))
    return 18.0 * total * total


def dudley_bound(base, c: float, n: int, levels: int) -> float:
    """Truncated dyadic chaining bound on the Rademacher complexity.

    c * 2^-M + (6c/sqrt(N)) * sum_{k=1..M} 2^-k sqrt(base(c 2^-k)).
    """
    if c <= 0.0 or n < 1 or levels < 1:
        raise EntropyError("need c > 0, n >= 1, levels >= 1")
    tail = c * 2.0**-levels
    acc = 0.0
    for k in range(1, levels + 1):
        acc += 2.0**-k * math.sqrt(base(c * 2.0**-k))
    return tail + 6.0 * c / math.sqrt(n) * acc


def dudley_bound_argmin(base, c: float, n: int, max_levels: int = 60):
    """Scan truncation depths 1..max_levels; returns (best_M, best_value)."""
    best_m, best_val = 1, math.inf
    for m in range(1, max_levels + 1):
        val = dudley_bound(base, c, n, m)
        if val < best_val:
            best_m, best_val = m, val
    return best_m, best_val


def greedy_cover(points, eps: float) -> int:
    """Size of a deterministic greedy eps-net over the rows of ``points``.

    Centers are chosen in first-uncovered input order, so the result is
    reproducible.  The true covering number at eps is <= this count, which is
    itself <= the covering number at eps/2.
    """
    if eps <= 0.0:
        raise EntropyError("eps must be positive")
    pts = np.asarray(points, dtype=np.float64)
    if pts.size == 0:
        return 0
    if pts.ndim == 1:
        pts = pts[:, None]
    return int(kernels.greedy_cover_count(pts, float(eps)))


def sobolev_entropy_bound(radius: float, eps: float, d: int, nu: float, c0: float) -> float:
    """Smoothness-ball entropy: c0 * (R/eps)^(d/nu)."""
    if min(radius, eps, d, nu, c0) <= 0:
        raise EntropyError("all arguments must be positive")
    return c0 * (radius / eps) ** (d / nu)


def is_nonincreasing(fn, eps_grid) -> bool:
    """Sampled monotonicity check for entropy callables."""
    vals = [fn(e) for e in sorted(eps_grid)]
    return all(vals[i] >= vals[i + 1] - 1e-12 for i in range(len(vals) - 1))
