"""Hot numeric kernels, each with a numba-compiled and a pure-numpy twin.

The public names (``pairwise_dists``, ``matern_half_integer``, ``adam_update``,
``greedy_cover_count``) are bound to the numba versions unless
``ACCNET_NO_NUMBA=1`` is set.  Both twins stay importable so the benchmark in
``benchmarks/bench_kernels.py`` can compare them directly.  The numba loops
use the same per-element expression order as the numpy code so the two paths
agree to the last bit wherever no reduction-order change is involved.
"""

import math

import numpy as np

from ._jit import NUMBA_ENABLED, njit


def pairwise_dists_numpy(x):
    """Euclidean distance matrix of the rows of x, exactly symmetric, zero diagonal."""
    sq = np.sum(x * x, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.clip(d2, 0.0, None, out=d2)
    d = np.sqrt(d2)
    # mirror the strict upper triangle so d == d.T holds bitwise
    iu = np.triu_indices(d.shape[0], k=1)
    d[(iu[1], iu[0])] = d[iu]
    np.fill_diagonal(d, 0.0)
    return d


@njit(cache=True)
def _pairwise_dists_jit(x):
    n, m = x.shape
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(m):
                diff = x[i, k] - x[j, k]
                acc += diff * diff
            d = math.sqrt(acc)
            out[i, j] = d
            out[j, i] = d
    return out


def pairwise_dists_numba(x):
    return _pairwise_dists_jit(np.ascontiguousarray(x))


def matern_half_integer_numpy(dists, nu, length_scale):
    """Matern correlation for nu in {0.5, 1.5, 2.5} (closed forms), elementwise."""
    s = dists / length_scale
    if nu == 0.5:
        return np.exp(-s)
    if nu == 1.5:
        a = math.sqrt(3.0) * s
        return (1.0 + a) * np.exp(-a)
    if nu == 2.5:
        a = math.sqrt(5.0) * s
        return (1.0 + a + a * a / 3.0) * np.exp(-a)
    raise ValueError(f"no closed form for nu={nu}")


@njit(cache=True)
def _matern_half_integer_jit(dists, nu, length_scale):
    flat = dists.ravel()
    out = np.empty_like(flat)
    if nu == 0.5:
        for i in range(flat.size):
            out[i] = math.exp(-flat[i] / length_scale)
    elif nu == 1.5:
        c = math.sqrt(3.0)
        for i in range(flat.size):
            a = c * flat[i] / length_scale
            out[i] = (1.0 + a) * math.exp(-a)
    else:
        c = math.sqrt(5.0)
        for i in range(flat.size):
            a = c * flat[i] / length_scale
            out[i] = (1.0 + a + a * a / 3.0) * math.exp(-a)
    return out.reshape(dists.shape)


def matern_half_integer_numba(dists, nu, length_scale):
    if nu not in (0.5, 1.5, 2.5):
        raise ValueError(f"no closed form for nu={nu}")
    return _matern_half_integer_jit(np.ascontiguousarray(np.atleast_1d(dists), dtype=np.float64), nu, length_scale)


def adam_update_numpy(param, grad, m, v, t, lr, weight_decay, beta1, beta2, eps):
    """One fused Adam step with decoupled weight decay, in place on flat arrays."""
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    step = (m / bc1) / (np.sqrt(v / bc2) + eps)
    param -= lr * (step + weight_decay * param)


@njit(cache=True)
def _adam_update_jit(param, grad, m, v, t, lr, weight_decay, beta1, beta2, eps):
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for i in range(param.size):
        m[i] = m[i] * beta1 + (1.0 - beta1) * grad[i]
        v[i] = v[i] * beta2 + (1.0 - beta2) * (grad[i] * grad[i])
        step = (m[i] / bc1) / (math.sqrt(v[i] / bc2) + eps)
        param[i] = param[i] - lr * (step + weight_decay * param[i])


def adam_update_numba(param, grad, m, v, t, lr, weight_decay, beta1, beta2, eps):
    _adam_update_jit(param, grad, m, v, float(t), lr, weight_decay, beta1, beta2, eps)


def greedy_cover_count_numpy(points, eps):
    """Size of a greedy eps-net: centers picked in first-uncovered order."""
    n = points.shape[0]
    covered = np.zeros(n, dtype=bool)
    count = 0
    eps2 = eps * eps
    for i in range(n):
        if covered[i]:
            continue
        count += 1
        diff = points - points[i]
        covered |= np.einsum("ij,ij->i", diff, diff) <= eps2
    return count


@njit(cache=True)
def _greedy_cover_count_jit(points, eps):
    n, d = points.shape
    covered = np.zeros(n, dtype=np.bool_)
    count = 0
    eps2 = eps * eps
    for i in range(n):
        if covered[i]:
            continue
        count += 1
        for j in range(n):
            if covered[j]:
                continue
            acc = 0.0
            for k in range(d):
                diff = points[j, k] - points[i, k]
                acc += diff * diff
            if acc <= eps2:
                covered[j] = True
    return count


def greedy_cover_count_numba(points, eps):
    return int(_greedy_cover_count_jit(np.ascontiguousarray(points, dtype=np.float64), float(eps)))


if NUMBA_ENABLED:
    pairwise_dists = pairwise_dists_numba
    matern_half_integer = matern_half_integer_numba
    adam_update = adam_update_numba
    greedy_cover_count = greedy_cover_count_numba
else:
    pairwise_dists = pairwise_dists_numpy
    matern_half_integer = matern_half_integer_numpy
    adam_update = adam_update_numpy
    greedy_cover_count = greedy_cover_count_numpy
