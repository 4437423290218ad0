"""Completion network: shared per-point MLP encoder with average pooling, FC decoder.

Forward passes record what the backward pass needs, and gradients are written
out by hand. Clouds are deduplicated and sorted before encoding, and pooling
weights each unique point by its multiplicity. This makes the pooled feature
exactly invariant to point order and to duplicating the whole cloud.

The last encoder layer is affine with no activation, so it commutes with the
average pool and is applied once to the pooled vector instead of per point.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .core import SeededRng, as_cloud

ENCODER_WIDTHS = (64, 128, 256, 512)
DECODER_WIDTHS = (1024, 1024)

MAGIC = b"ACLSPC01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable, truncated or incompatible parameter file."""


@dataclass
class Layer:
    weight: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)


@dataclass
class ModelParams:
    encoder: list[Layer]
    decoder: list[Layer]
    n_out: int

    def layers(self) -> list[Layer]:
        return self.encoder + self.decoder

    def tensors(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers():
            out += [layer.weight, layer.bias]
        return out

    @property
    def feature_dim(self) -> int:
        return self.encoder[-1].weight.shape[0]

    @property
    def encoder_widths(self) -> tuple[int, ...]:
        return tuple(l.weight.shape[0] for l in self.encoder)

    @property
    def decoder_widths(self) -> tuple[int, ...]:
        return tuple(l.weight.shape[0] for l in self.decoder[:-1])

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors())

    def map(self, fn) -> "ModelParams":
        """New params with ``fn`` applied to every tensor."""
        enc = [Layer(fn(l.weight), fn(l.bias)) for l in self.encoder]
        dec = [Layer(fn(l.weight), fn(l.bias)) for l in self.decoder]
        return ModelParams(enc, dec, self.n_out)

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def shapes(self) -> list[tuple[int, int]]:
        return [l.weight.shape for l in self.layers()]


def _layer_dims(n_out, encoder_widths, decoder_widths):
    enc_dims = [3, *encoder_widths]
    dec_dims = [encoder_widths[-1], *decoder_widths, 3 * n_out]
    return list(zip(enc_dims[:-1], enc_dims[1:])), list(zip(dec_dims[:-1], dec_dims[1:]))


def init_params(n_out: int, rng: SeededRng, encoder_widths=ENCODER_WIDTHS,
                decoder_widths=DECODER_WIDTHS) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if n_out < 1:
        raise ValueError("n_out must be >= 1")
    enc_dims, dec_dims = _layer_dims(n_out, tuple(encoder_widths), tuple(decoder_widths))

    def make(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return Layer(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out))

    return ModelParams([make(i, o) for i, o in enc_dims],
                       [make(i, o) for i, o in dec_dims], n_out)


# --- forward / backward -----------------------------------------------------

@dataclass
class ForwardCache:
    """Activations recorded by :func:`forward_batch` for one batch of clouds."""
    enc_inputs: list[np.ndarray] = field(default_factory=list)  # layer inputs, per unique point
    enc_masks: list[np.ndarray] = field(default_factory=list)
    pool: sparse.csr_matrix | None = None  # (B, U) multiplicity / cloud size
    pooled: np.ndarray | None = None  # (B, hidden) input of the last encoder layer
    dec_inputs: list[np.ndarray] = field(default_factory=list)
    dec_masks: list[np.ndarray] = field(default_factory=list)


def unique_rows(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distinct rows in lexicographic order and the inverse map."""
    points = points + 0.0  # folds -0.0 into 0.0
    order = np.lexsort(points.T[::-1])
    ordered = points[order]
    new = np.empty(len(order), dtype=bool)
    new[0] = True
    np.any(ordered[1:] != ordered[:-1], axis=1, out=new[1:])
    group = np.cumsum(new) - 1
    inverse = np.empty(len(order), dtype=np.int64)
    inverse[order] = group
    return ordered[new], inverse


def pooling_matrix(clouds) -> tuple[np.ndarray, sparse.csr_matrix]:
    """Unique points of all clouds (lexicographic order) and the averaging matrix.

    Row ``b`` of the matrix holds ``count / size`` of every distinct point of
    cloud ``b``, so ``pool @ features`` is each cloud's mean feature. Every
    row is summed in the same canonical point order whatever the input order.
    """
    pts = [as_cloud(c) for c in clouds]
    sizes = np.array([len(p) for p in pts])
    uniq, inverse = unique_rows(np.concatenate(pts))
    n_uniq = len(uniq)
    key = np.repeat(np.arange(len(pts)), sizes) * n_uniq + inverse
    key, counts = np.unique(key, return_counts=True)
    rows, cols = np.divmod(key, n_uniq)
    pool = sparse.csr_matrix((counts / sizes[rows], (rows, cols)), shape=(len(pts), n_uniq))
    return np.ascontiguousarray(uniq), pool


def _encode_batch(params: ModelParams, clouds, cache: ForwardCache | None):
    h, pool = pooling_matrix(clouds)
    for layer in params.encoder[:-1]:
        z = h @ layer.weight.T
        z += layer.bias
        if cache is not None:
            cache.enc_inputs.append(h)
            cache.enc_masks.append(z > 0.0)
        h = np.maximum(z, 0.0, out=z)
    pooled = pool @ h
    last = params.encoder[-1]
    feat = pooled @ last.weight.T + last.bias
    if cache is not None:
        cache.pool = pool
        cache.pooled = pooled
    return feat


def _decode_batch(params: ModelParams, feat, cache: ForwardCache | None):
    h = feat
    n_layers = len(params.decoder)
    for k, layer in enumerate(params.decoder):
        z = h @ layer.weight.T
        z += layer.bias
        if cache is not None:
            cache.dec_inputs.append(h)
        if k < n_layers - 1:
            if cache is not None:
                cache.dec_masks.append(z > 0.0)
            h = np.maximum(z, 0.0, out=z)
        else:
            h = z
    return h.reshape(len(feat), params.n_out, 3)


def forward_batch(params: ModelParams, clouds, record: bool = True):
    """Complete every cloud in ``clouds``; returns ``(outputs (B, N_c, 3), cache)``."""
    cache = ForwardCache() if record else None
    feat = _encode_batch(params, clouds, cache)
    return _decode_batch(params, feat, cache), cache


def backward_batch(params: ModelParams, cache: ForwardCache, d_out: np.ndarray,
                   grads: ModelParams | None = None) -> ModelParams:
    """Accumulate dLoss/dparams into ``grads`` given dLoss/doutputs of a recorded batch."""
    if grads is None:
        grads = params.zeros_like()
    b = d_out.shape[0]
    dh = d_out.reshape(b, -1)
    for k in range(len(params.decoder) - 1, -1, -1):
        layer, g = params.decoder[k], grads.decoder[k]
        if k < len(params.decoder) - 1:
            np.multiply(dh, cache.dec_masks[k], out=dh)
        g.weight += dh.T @ cache.dec_inputs[k]
        g.bias += dh.sum(axis=0)
        dh = dh @ layer.weight

    # dh is now dLoss/dfeature, shape (B, feature_dim)
    last, g_last = params.encoder[-1], grads.encoder[-1]
    g_last.weight += dh.T @ cache.pooled
    g_last.bias += dh.sum(axis=0)
    d_pooled = dh @ last.weight
    dh = cache.pool.T.tocsr() @ d_pooled
    for k in range(len(params.encoder) - 2, -1, -1):
        dz = np.multiply(dh, cache.enc_masks[k], out=dh)
        g = grads.encoder[k]
        g.weight += dz.T @ cache.enc_inputs[k]
        g.bias += dz.sum(axis=0)
        if k > 0:
            dh = dz @ params.encoder[k].weight
    return grads


@dataclass
class LossGraph:
    """A recorded loss evaluation: forward caches paired with dLoss/doutput.

    Only outputs that the loss differentiates through appear here; detached
    values contribute no entry.
    """
    passes: list[tuple[ForwardCache, np.ndarray]] = field(default_factory=list)

    def add(self, cache: ForwardCache, d_out: np.ndarray) -> None:
        self.passes.append((cache, d_out))


def param_gradients(params: ModelParams, graph: LossGraph) -> ModelParams:
    grads = params.zeros_like()
    for cache, d_out in graph.passes:
        backward_batch(params, cache, d_out, grads)
    return grads


# --- single-cloud API -------------------------------------------------------

def encode(params: ModelParams, cloud) -> np.ndarray:
    return _encode_batch(params, [cloud], None)[0]


def decode(params: ModelParams, feat) -> np.ndarray:
    feat = np.asarray(feat, dtype=np.float64).reshape(1, -1)
    return _decode_batch(params, feat, None)[0]


def forward_complete(params: ModelParams, partial) -> np.ndarray:
    return decode(params, encode(params, partial))


# --- serialization ----------------------------------------------------------

def write_params(f, params: ModelParams) -> None:
    f.write(MAGIC)
    f.write(struct.pack("<IQII", FORMAT_VERSION, params.n_out, len(params.encoder),
                        len(params.decoder)))
    for out_dim, in_dim in params.shapes():
        f.write(struct.pack("<QQ", out_dim, in_dim))
    for t in params.tensors():
        f.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError("truncated parameter file")
    return data


def read_tensor(f, shape) -> np.ndarray:
    count = int(np.prod(shape))
    buf = _read_exact(f, 8 * count)
    return np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)


def read_params(f, n_out: int | None = None) -> ModelParams:
    if _read_exact(f, 8) != MAGIC:
        raise CheckpointError("bad magic: not an ACL-SPC parameter file")
    version, file_n_out, n_enc, n_dec = struct.unpack("<IQII", _read_exact(f, 20))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    if n_out is not None and file_n_out != n_out:
        raise CheckpointError(f"shape mismatch: file has N_c={file_n_out}, expected {n_out}")
    if n_enc < 1 or n_dec < 1:
        raise CheckpointError("layer table needs at least one encoder and one decoder layer")
    shapes = [struct.unpack("<QQ", _read_exact(f, 16)) for _ in range(n_enc + n_dec)]
    if shapes[0][1] != 3 or shapes[-1][0] != 3 * file_n_out:
        raise CheckpointError("shape mismatch: layer table inconsistent with N_c")
    if any(prev[0] != nxt[1] for prev, nxt in zip(shapes, shapes[1:])):
        raise CheckpointError("shape mismatch: consecutive layer sizes do not chain")
    if f.seekable():
        # refuse to allocate for a header that promises more data than the file holds
        need = 8 * sum(o * i + o for o, i in shapes)
        here = f.tell()
        if f.seek(0, 2) - here < need:
            raise CheckpointError("truncated parameter file")
        f.seek(here)
    layers = [Layer(read_tensor(f, s), read_tensor(f, (s[0],))) for s in shapes]
    return ModelParams(layers[:n_enc], layers[n_enc:], int(file_n_out))


def save_params(params: ModelParams, path) -> None:
    with open(path, "wb") as f:
        write_params(f, params)


def load_params(path, n_out: int | None = None) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such parameter file: {path}")
    with open(path, "rb") as f:
        return read_params(f, n_out)
