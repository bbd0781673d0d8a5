"""Accordion networks and their fully-connected equivalents.

An accordion net is an ordered chain of shallow ReLU blocks
``z -> w_out @ relu(v_in @ z + bias)`` whose interface dimensions
``d_0..d_L`` stay small while the widths may be large.  A fully-connected
net with weight matrices ``M_1..M_{L+1}`` maps to the same function by
``M_l = v_in[l] @ w_out[l-1]``; the reverse direction splits each interior
``M_l`` by SVD into ``U sqrt(S)`` and ``sqrt(S) V^T``.

No block carries an output-side bias: the bias lives inside the ReLU only.
All values are immutable after construction; ``forward`` is pure.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .numerics import NumericsError, svd


class ModelError(ValueError):
    """Raised on inconsistent dimensions or malformed model files."""


def _frozen(a, name):
    arr = np.array(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ShallowBlock:
    """One shallow ReLU net: weights (d_out x width), (width x d_in), bias (width,)."""

    w_out: np.ndarray
    v_in: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _frozen(self.w_out, "w_out")
        v = _frozen(self.v_in, "v_in")
        b = _frozen(self.bias, "bias")
        if w.ndim != 2 or v.ndim != 2 or b.ndim != 1:
            raise ModelError("block needs 2-D w_out/v_in and 1-D bias")
        if w.shape[1] != v.shape[0] or b.shape[0] != v.shape[0]:
            raise ModelError(
                f"block width mismatch: w_out {w.shape}, v_in {v.shape}, bias {b.shape}"
            )
        object.__setattr__(self, "w_out", w)
        object.__setattr__(self, "v_in", v)
        object.__setattr__(self, "bias", b)

    @property
    def d_in(self):
        return self.v_in.shape[1]

    @property
    def d_out(self):
        return self.w_out.shape[0]

    @property
    def width(self):
        return self.v_in.shape[0]


class AccNet:
    """Ordered chain of ShallowBlocks with a consistent dimension chain."""

    def __init__(self, blocks):
        blocks = tuple(blocks)
        if not blocks:
            raise ModelError("AccNet needs at least one block")
        for i in range(1, len(blocks)):
            if blocks[i].d_in != blocks[i - 1].d_out:
                raise ModelError(
                    f"dimension chain broken at block {i}: "
                    f"{blocks[i - 1].d_out} -> {blocks[i].d_in}"
                )
        self.blocks = blocks

    @property
    def depth(self):
        return len(self.blocks)

    @property
    def dims(self):
        return (self.blocks[0].d_in,) + tuple(b.d_out for b in self.blocks)

    @property
    def widths(self):
        return tuple(b.width for b in self.blocks)

    def __eq__(self, other):
        return (
            isinstance(other, AccNet)
            and self.dims == other.dims
            and self.widths == other.widths
            and all(
                np.array_equal(a.w_out, b.w_out)
                and np.array_equal(a.v_in, b.v_in)
                and np.array_equal(a.bias, b.bias)
                for a, b in zip(self.blocks, other.blocks)
            )
        )


def relu(x):
    return np.maximum(x, 0.0)


def forward(net: AccNet, x) -> np.ndarray:
    """Apply the net to a single input vector."""
    z = np.asarray(x, dtype=np.float64)
    if z.shape != (net.blocks[0].d_in,):
        raise ModelError(f"input has shape {z.shape}, block 0 expects ({net.blocks[0].d_in},)")
    for i, b in enumerate(net.blocks):
        if z.shape[0] != b.d_in:
            raise ModelError(f"dimension mismatch entering block {i}")
        z = b.w_out @ relu(b.v_in @ z + b.bias)
    return z


def forward_batch(net: AccNet, x) -> np.ndarray:
    """Apply the net to rows of x (n, d_0) -> (n, d_L)."""
    z = np.asarray(x, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != net.blocks[0].d_in:
        raise ModelError(f"batch input has shape {z.shape}, block 0 expects (*, {net.blocks[0].d_in})")
    for b in net.blocks:
        z = relu(z @ b.v_in.T + b.bias) @ b.w_out.T
    return z


def identity_block(d: int) -> ShallowBlock:
    """Exact identity on R^d using 2d neurons: relu(x) - relu(-x) = x.

    Its per-neuron F1 quantity is exactly 2d, the cheapest known shallow
    representation of the identity.
    """
    if d < 1:
        raise ModelError("identity_block needs d >= 1")
    eye = np.eye(d)
    v = np.vstack([eye, -eye])
    w = np.hstack([eye, -eye])
    return ShallowBlock(w, v, np.zeros(2 * d))


@dataclass(frozen=True)
class Fcnn:
    """Fully-connected net: L+1 weight matrices, biases inside the first L ReLUs."""

    weights: tuple
    biases: tuple

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        bs = tuple(np.asarray(b, dtype=np.float64) for b in self.biases)
        if len(ws) != len(bs) + 1:
            raise ModelError(f"Fcnn needs len(weights) == len(biases)+1, got {len(ws)}/{len(bs)}")
        for i in range(1, len(ws)):
            if ws[i].shape[1] != ws[i - 1].shape[0]:
                raise ModelError(f"Fcnn weight chain broken at layer {i}")
        for i, b in enumerate(bs):
            if b.shape != (ws[i].shape[0],):
                raise ModelError(f"Fcnn bias {i} has shape {b.shape}, expected ({ws[i].shape[0]},)")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)


def fcnn_forward(net: Fcnn, x) -> np.ndarray:
    z = np.asarray(x, dtype=np.float64)
    for w, b in zip(net.weights[:-1], net.biases):
        z = relu(w @ z + b)
    return net.weights[-1] @ z


def accnet_to_fcnn(net: AccNet) -> Fcnn:
    """Function-equivalent FCNN with interior matrices v_in[l] @ w_out[l-1]."""
    blocks = net.blocks
    weights = [blocks[0].v_in]
    for i in range(1, len(blocks)):
        weights.append(blocks[i].v_in @ blocks[i - 1].w_out)
    weights.append(blocks[-1].w_out)
    biases = [b.bias for b in blocks]
    return Fcnn(tuple(weights), tuple(biases))


def split_matrix(m, rank_tol=1e-8):
    """SVD split of m into (left, right) with m ~ left @ right.

    ``left = U sqrt(S)`` and ``right = sqrt(S) V^T``, truncated to singular
    values >= rank_tol * s_max (at least one column is always retained).
    Both factors have squared Frobenius norm equal to the retained nuclear
    norm of m.
    """
    u, s, vt = svd(m)
    smax = s[0] if s.size else 0.0
    r = int(np.sum(s >= rank_tol * smax)) if smax > 0.0 else 1
    r = max(r, 1)
    root = np.sqrt(s[:r])
    return u[:, :r] * root, root[:, None] * vt[:r]


def fcnn_to_accnet(net: Fcnn, rank_tol=1e-8) -> AccNet:
    """Split every interior FCNN matrix by SVD into an accordion chain.

    The resulting interface dimension d_l equals the number of singular
    values of M_{l+1} above rank_tol relative to the largest one.
    """
    ws = net.weights
    n_layers = len(ws) - 1
    lefts, rights = [], []
    for m in ws[1:-1]:
        left, right = split_matrix(m, rank_tol)
        lefts.append(left)
        rights.append(right)
    blocks = []
    for i in range(n_layers):
        v = ws[0] if i == 0 else lefts[i - 1]
        w = ws[-1] if i == n_layers - 1 else rights[i]
        blocks.append(ShallowBlock(w, v, net.biases[i]))
    return AccNet(blocks)


def random_accnet(dims, widths, rng, scale=1.0) -> AccNet:
    """He-style random net over a dimension chain with given per-block widths."""
    dims = tuple(int(d) for d in dims)
    widths = tuple(int(w) for w in widths)
    if len(widths) != len(dims) - 1:
        raise ModelError("need len(widths) == len(dims) - 1")
    blocks = []
    for i, w in enumerate(widths):
        d_in, d_out = dims[i], dims[i + 1]
        v = rng.standard_normal((w, d_in)) * (scale * np.sqrt(2.0 / d_in))
        wo = rng.standard_normal((d_out, w)) * (scale * np.sqrt(1.0 / w))
        blocks.append(ShallowBlock(wo, v, np.zeros(w)))
    return AccNet(blocks)


def random_fcnn(layer_sizes, rng, scale=1.0) -> Fcnn:
    sizes = tuple(int(s) for s in layer_sizes)
    weights = []
    biases = []
    for i in range(len(sizes) - 1):
        weights.append(rng.standard_normal((sizes[i + 1], sizes[i])) * (scale / np.sqrt(sizes[i])))
        if i < len(sizes) - 2:
            biases.append(rng.standard_normal(sizes[i + 1]) * 0.1)
    return Fcnn(tuple(weights), tuple(biases))


MODEL_SCHEMA_VERSION = 1


def save_model(net: AccNet, json_path):
    """Write manifest JSON plus a flat little-endian f64 weight payload.

    Payload layout: blocks in order; within a block w_out row-major, then
    v_in row-major, then bias.
    """
    json_path = str(json_path)
    if not json_path.endswith(".json"):
        raise ModelError("model path must end in .json")
    bin_path = json_path[:-5] + ".bin"
    payload = bytearray()
    for b in net.blocks:
        payload += np.ascontiguousarray(b.w_out, dtype="<f8").tobytes()
        payload += np.ascontiguousarray(b.v_in, dtype="<f8").tobytes()
        payload += np.ascontiguousarray(b.bias, dtype="<f8").tobytes()
    manifest = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": "accnet",
        "dims": list(net.dims),
        "widths": list(net.widths),
        "dtype": "<f8",
        "layout": "per block: w_out row-major, v_in row-major, bias",
        "payload": bin_path.rsplit("/", 1)[-1],
    }
    with open(bin_path, "wb") as f:
        f.write(bytes(payload))
    with open(json_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(json_path) -> AccNet:
    json_path = str(json_path)
    with open(json_path) as f:
        manifest = json.load(f)
    if manifest.get("kind") != "accnet":
        raise ModelError(f"not an accnet model file: {json_path}")
    if int(manifest.get("schema_version", 0)) > MODEL_SCHEMA_VERSION:
        raise ModelError(f"unsupported model schema_version {manifest['schema_version']}")
    dims = manifest["dims"]
    widths = manifest["widths"]
    bin_path = os.path.join(os.path.dirname(json_path), manifest["payload"])
    raw = np.fromfile(bin_path, dtype="<f8")
    blocks = []
    pos = 0
    for i, w in enumerate(widths):
        d_in, d_out = dims[i], dims[i + 1]
        n_w, n_v = d_out * w, w * d_in
        wo = raw[pos : pos + n_w].reshape(d_out, w)
        pos += n_w
        v = raw[pos : pos + n_v].reshape(w, d_in)
        pos += n_v
        bias = raw[pos : pos + w]
        pos += w
        blocks.append(ShallowBlock(wo, v, bias))
    if pos != raw.size:
        raise ModelError(f"payload size mismatch: used {pos} of {raw.size} values")
    return AccNet(blocks)
