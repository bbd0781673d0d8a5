"""Dense linear-algebra substrate and seeded RNG streams.

Everything here is 64-bit and pure: the bound evaluations downstream multiply
long chains of these quantities, and the scaling-law slope fits would absorb
any 32-bit drift.  SVD and Cholesky are delegated to LAPACK via numpy; the
operator norm uses a deterministic power iteration so complexity reports are
reproducible bit for bit.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class NumericsError(RuntimeError):
    """Raised when a numeric routine cannot satisfy its contract."""


def as_matrix(a, name="matrix"):
    """Validate and return a finite float64 2-D array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise NumericsError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericsError(f"{name} contains non-finite entries")
    return m


class SvdResult(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def svd(m) -> SvdResult:
    """Thin SVD with nonincreasing singular values.

    Reconstruction ``u @ diag(s) @ vt`` matches the input to 1e-9 relative
    Frobenius error (LAPACK gesdd; gesvd is not exposed separately, so
    non-convergence surfaces as an explicit error naming the shape).
    """
    m = as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"SVD did not converge for shape {m.shape}") from exc
    return SvdResult(u, s, vt)


def cholesky_jitter(k, jitter0=0.0):
    """Lower-triangular factor of ``k + jitter*I``, escalating jitter as needed.

    Starts at ``jitter0`` (zero allowed, and zero is used unchanged when the
    matrix is already positive definite).  On failure the jitter is raised to
    a floor of 1e-12 times the mean diagonal and then multiplied by 10, up to
    a cap of 1e-2 times the mean diagonal.  Returns ``(L, jitter_used)`` so
    callers and tests can see how much regularization was applied.
    """
    k = as_matrix(k, "kernel matrix")
    n = k.shape[0]
    if k.shape[0] != k.shape[1]:
        raise NumericsError(f"cholesky needs a square matrix, got {k.shape}")
    if not np.array_equal(k, k.T):
        if np.max(np.abs(k - k.T)) > 1e-8 * max(1.0, np.max(np.abs(k))):
            raise NumericsError("cholesky input is not symmetric")
        k = (k + k.T) / 2.0
    mean_diag = float(np.trace(k)) / n if n else 0.0
    cap = max(1e-2 * mean_diag, jitter0)
    jitter = float(jitter0)
    eye = np.eye(n)
    while True:
        try:
            shifted = k + jitter * eye if jitter > 0.0 else k
            return np.linalg.cholesky(shifted), jitter
        except np.linalg.LinAlgError:
            nxt = jitter * 10.0 if jitter > 0.0 else max(1e-12 * mean_diag, np.finfo(np.float64).tiny)
        if nxt > cap:
            smallest = float(np.linalg.eigvalsh(k)[0])
            raise NumericsError(
                f"cholesky jitter cap {cap:.3e} exceeded; smallest eigenvalue ~ {smallest:.3e}"
            )
        jitter = nxt


def _power_iterate(m, v, tol, max_iter):
    """Power iteration on m^T m from start v; returns (sigma, v, iters, converged)."""
    sigma = 0.0
    for it in range(1, max_iter + 1):
        w = m.T @ (m @ v)
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            # v lies in the null space; nudge it off (deterministically)
            v = v.copy()
            v[0] += 1e-6
            v /= np.linalg.norm(v)
            continue
        new_sigma = np.sqrt(nw)
        v = w / nw
        if abs(new_sigma - sigma) <= tol * max(new_sigma, np.finfo(np.float64).tiny):
            return new_sigma, v, it, True
        sigma = new_sigma
    return sigma, v, max_iter, False


def op_norm(m, tol=1e-8) -> float:
    """Largest singular value via power iteration with a deterministic start.

    The start vector is the normalized all-ones vector.  Convergence onto a
    lower singular pair (possible when the start is exactly orthogonal to the
    top singular vector) is detected by re-running after a 1e-6 perturbation
    of index 0; if the estimate is not reproduced the iteration continues
    from the perturbed vector.  Falls back to a full SVD if not converged
    within 10 000 iterations.
    """
    m = as_matrix(m)
    if m.size == 0 or not np.any(m):
        return 0.0
    a = m if m.shape[0] >= m.shape[1] else m.T
    n = a.shape[1]
    v = np.ones(n) / np.sqrt(n)
    budget = 10_000
    sigma, v, used, ok = _power_iterate(a, v, tol, budget)
    budget -= used
    if not ok:
        return float(svd(m).s[0])
    # guard against a start vector trapped in a lower eigenspace
    v2 = v.copy()
    v2[0] += 1e-6
    v2 /= np.linalg.norm(v2)
    sigma2, v2, used, _ = _power_iterate(a, v2, tol, min(budget, 50))
    budget -= used
    if sigma2 > sigma * (1.0 + 10.0 * tol):
        sigma, v, used, ok = _power_iterate(a, v2, tol, max(budget, 1))
        if not ok:
            return float(svd(m).s[0])
    return float(sigma)


def fit_line(xs, ys):
    """Ordinary least squares line fit; returns (slope, intercept).

    Callers pass log-coordinates themselves when fitting power laws.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise NumericsError("fit_line needs two equal-length 1-D sequences")
    if xs.size < 2 or np.all(xs == xs[0]):
        raise NumericsError("fit_line needs at least two distinct x values")
    xm = xs.mean()
    ym = ys.mean()
    dx = xs - xm
    slope = float(np.dot(dx, ys - ym) / np.dot(dx, dx))
    return slope, float(ym - slope * xm)


_MIX_MULT = 6364136223846793005
_MIX_ADD = 1442695040888963407


def _mix(seed, keys):
    h = seed & 0xFFFFFFFFFFFFFFFF
    for k in keys:
        h = (h * _MIX_MULT + _MIX_ADD + (int(k) & 0xFFFFFFFFFFFFFFFF)) & 0xFFFFFFFFFFFFFFFF
    return h


@dataclass(frozen=True)
class RngStream:
    """A value identifying one reproducible random stream.

    Identical ``(seed, stream_id)`` pairs yield identical draw sequences for a
    fixed numpy version.  Streams are values: each concurrent worker owns its
    own and never shares generator state.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, *keys) -> "RngStream":
        """Derive a sub-stream from integer keys (stable, order-sensitive)."""
        return RngStream(self.seed, _mix(self.stream_id, keys))
