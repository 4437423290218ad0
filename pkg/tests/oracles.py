"""Independent reference implementations used as test oracles.

Nothing here imports the package's numerical code: distances come from
explicit loops and the network forward pass is rewritten from its definition.
"""
import numpy as np


def nn_loop(src, dst):
    """Nearest neighbour of every src point in dst by exhaustive search.

    Ties go to the lowest index, like the package.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    idx = np.empty(len(src), dtype=np.int64)
    dist = np.empty(len(src))
    for i, q in enumerate(src):
        d = np.sqrt(((dst - q) ** 2).sum(axis=1))
        j = int(np.argmin(d))  # first minimum
        idx[i], dist[i] = j, d[j]
    return idx, dist


def chamfer_parts(completion, gt):
    _, a = nn_loop(completion, gt)
    _, b = nn_loop(gt, completion)
    return a.mean(), b.mean(), a.mean() + b.mean()


def weighted_chamfer_ref(completion, partial, alpha, beta):
    _, a = nn_loop(completion, partial)
    _, b = nn_loop(partial, completion)
    return alpha * a.mean() + beta * b.mean()


def relu(x):
    return np.where(x > 0, x, 0.0)


def forward_ref(layers, n_enc, cloud, n_out):
    """Per-point MLP on every point (duplicates included), average pool, then decoder.

    ``layers`` is a list of ``(W, b)``; the first ``n_enc`` belong to the encoder.
    The last encoder layer and the last decoder layer have no activation.
    """
    h = np.asarray(cloud, dtype=np.float64)
    for k, (w, b) in enumerate(layers[:n_enc]):
        h = h @ w.T + b
        if k < n_enc - 1:
            h = relu(h)
    z = h.mean(axis=0)
    dec = layers[n_enc:]
    for k, (w, b) in enumerate(dec):
        z = w @ z + b
        if k < len(dec) - 1:
            z = relu(z)
    return z.reshape(n_out, 3)


def preactivation_signs(layers, n_enc, cloud):
    """Sign pattern of every hidden pre-activation, to detect ReLU kinks."""
    signs = []
    h = np.asarray(cloud, dtype=np.float64)
    for k, (w, b) in enumerate(layers[:n_enc]):
        h = h @ w.T + b
        if k < n_enc - 1:
            signs.append(h > 0)
            h = relu(h)
    z = h.mean(axis=0)
    dec = layers[n_enc:]
    for k, (w, b) in enumerate(dec[:-1]):
        z = w @ z + b
        signs.append(z > 0)
        z = relu(z)
    return np.concatenate([s.ravel() for s in signs])
