"""Closed-loop self-supervised training, Adam, learning-rate schedule, adaptation.

One training step, for each partial cloud ``P0`` in a batch:

1. ``C0 = f(P0)``, recorded for backprop.
2. ``C0`` is detached. ``N_s`` random views are rendered from the detached copy
   into synthetic partials ``P_v``, and each is completed again as ``C_v = f(P_v)``.
3. loss = ``lambda_cons * consistency(C_v, detached C0) + weighted_chamfer(C0, P0)``.

Gradients reach the parameters through ``C_v`` (consistency) and through ``C0``
(weighted Chamfer) only. The batch loss is the mean over samples, and each
batch takes exactly one optimizer step.
"""
from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import SeededRng, as_cloud
from .loss import CONSISTENCY, LossBreakdown, LossWeights, total_loss, weighted_chamfer_with_grad
from .model import (DECODER_WIDTHS, ENCODER_WIDTHS, CheckpointError, LossGraph, ModelParams,
                    forward_batch, init_params, param_gradients, read_params, read_tensor,
                    write_params)
from .view import sample_view, synthesize_partial

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
ADAM_MAGIC = b"ADAMSTAT"

# keys of the seed tree; see SeededRng.fork
_INIT_STREAM = 0
_EPOCH_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    n_syn_views: int = 8
    weights: LossWeights = field(default_factory=LossWeights)
    lr0: float = 1e-3
    decay_factor: float = 0.5
    decay_every: int = 200
    epochs: int = 200
    n_out: int = 2048
    consistency_mode: str = "mse"
    seed: int = 0
    grid_resolution: int = 16
    checkpoint_every: int = 0
    encoder_widths: tuple[int, ...] = ENCODER_WIDTHS
    decoder_widths: tuple[int, ...] = DECODER_WIDTHS

    def __post_init__(self):
        for name in ("batch_size", "n_syn_views", "decay_every", "n_out", "grid_resolution"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0 or self.checkpoint_every < 0:
            raise ValueError("epochs and checkpoint_every must be >= 0")
        if not self.lr0 > 0:
            raise ValueError("lr0 must be > 0")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.consistency_mode not in CONSISTENCY:
            raise ValueError(f"consistency_mode must be one of {sorted(CONSISTENCY)}")
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights(**self.weights))
        object.__setattr__(self, "encoder_widths", tuple(self.encoder_widths))
        object.__setattr__(self, "decoder_widths", tuple(self.decoder_widths))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_widths"] = list(self.encoder_widths)
        d["decoder_widths"] = list(self.decoder_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "weights" in d:
            w = d["weights"]
            if not isinstance(w, dict) or set(w) - {"alpha", "beta", "lambda_cons"}:
                raise ValueError("weights must be an object with alpha, beta, lambda_cons")
            d["weights"] = LossWeights(**w)
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return TrainConfig(**d)

    def fingerprint(self) -> str:
        """Hash of everything that shapes the optimization trajectory.

        Run length and checkpoint cadence are excluded so a run can be resumed
        with a larger epoch budget.
        """
        d = self.to_dict()
        d.pop("epochs")
        d.pop("checkpoint_every")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# --- closed-loop forward --------------------------------------------------------

@dataclass
class StepRecord:
    graph: LossGraph
    breakdown: LossBreakdown  # batch mean
    per_sample: list[LossBreakdown]
    completions: np.ndarray  # C0 for each sample, (B, N_c, 3)
    synthetic: list[list[np.ndarray]]  # P_v per sample


def acl_forward_batch(params: ModelParams, partials, cfg: TrainConfig, rng: SeededRng,
                      detach_target: bool = True) -> StepRecord:
    """Record the total loss of a batch, averaged over samples.

    ``detach_target=False`` also lets the consistency term differentiate
    through ``C0``. It exists only to probe the detach contract.
    """
    partials = [as_cloud(p) for p in partials]
    b, s, w = len(partials), cfg.n_syn_views, cfg.weights
    consistency = CONSISTENCY[cfg.consistency_mode]

    c0, cache0 = forward_batch(params, partials)
    c0_detached = c0.copy()

    synthetic = []
    for i, p0 in enumerate(partials):
        views = []
        for _ in range(s):
            view = sample_view(rng, cfg.grid_resolution)
            views.append(synthesize_partial(c0_detached[i], view, len(p0), rng))
        synthetic.append(views)
    cv, cache_v = forward_batch(params, [pv for views in synthetic for pv in views])
    cv = cv.reshape(b, s, params.n_out, 3)

    d_c0 = np.zeros_like(c0)
    d_cv = np.zeros_like(cv)
    per_sample = []
    for i, p0 in enumerate(partials):
        cons, g_cv, g_target = consistency(cv[i], c0_detached[i])
        wcd, g_c0 = weighted_chamfer_with_grad(c0[i], p0, w)
        per_sample.append(total_loss(cons, wcd, w))
        d_c0[i] = g_c0 / b
        d_cv[i] = g_cv * (w.lambda_cons / b)
        if not detach_target:
            d_c0[i] += g_target * (w.lambda_cons / b)

    graph = LossGraph()
    graph.add(cache0, d_c0)
    graph.add(cache_v, d_cv.reshape(b * s, params.n_out, 3))
    mean = total_loss(np.mean([r.cons for r in per_sample]),
                      np.mean([r.wcd for r in per_sample]), w)
    return StepRecord(graph, mean, per_sample, c0_detached, synthetic)


def acl_forward(params: ModelParams, partial, cfg: TrainConfig, rng: SeededRng):
    """Single-sample closed loop: ``(loss graph, LossBreakdown, C0)``."""
    rec = acl_forward_batch(params, [partial], cfg, rng)
    return rec.graph, rec.breakdown, rec.completions[0]


# --- optimizer --------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        return cls([np.zeros_like(x) for x in params.tensors()],
                   [np.zeros_like(x) for x in params.tensors()], 0)

    def copy(self) -> "AdamState":
        return AdamState([x.copy() for x in self.m], [x.copy() for x in self.v], self.t)


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState, lr: float):
    """One in-place Adam update; returns ``(params, state)``."""
    if lr < 0:
        raise ValueError("lr must be >= 0")
    ps, gs = params.tensors(), grads.tensors()
    if len(ps) != len(gs) or len(ps) != len(state.m) or any(
            p.shape != g.shape or p.shape != m.shape for p, g, m in zip(ps, gs, state.m)):
        raise ValueError("shape mismatch between params, grads and optimizer state")
    state.t += 1
    bc1 = 1.0 - ADAM_BETA1 ** state.t
    bc2 = 1.0 - ADAM_BETA2 ** state.t
    for p, g, m, v in zip(ps, gs, state.m, state.v):
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)
    return params, state


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


# --- checkpoints ------------------------------------------------------------------

@dataclass
class Checkpoint:
    params: ModelParams
    adam: AdamState
    epoch: int  # completed epochs
    fingerprint: str


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        write_params(f, ckpt.params)
        f.write(ADAM_MAGIC)
        f.write(struct.pack("<Q", ckpt.adam.t))
        for x in ckpt.adam.m + ckpt.adam.v:
            f.write(np.ascontiguousarray(x, dtype="<f8").tobytes())
        fp = ckpt.fingerprint.encode()
        f.write(struct.pack("<QI", ckpt.epoch, len(fp)))
        f.write(fp)
    tmp.replace(path)


def load_checkpoint(path, n_out: int | None = None) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    with open(path, "rb") as f:
        params = read_params(f, n_out)
        if f.read(8) != ADAM_MAGIC:
            raise CheckpointError("checkpoint lacks optimizer state")
        try:
            (t,) = struct.unpack("<Q", f.read(8))
            shapes = [x.shape for x in params.tensors()]
            m = [read_tensor(f, s) for s in shapes]
            v = [read_tensor(f, s) for s in shapes]
            epoch, n = struct.unpack("<QI", f.read(12))
            fp = f.read(n)
        except struct.error as exc:
            raise CheckpointError("truncated checkpoint") from exc
        if len(fp) != n:
            raise CheckpointError("truncated checkpoint")
    return Checkpoint(params, AdamState(m, v, t), epoch, fp.decode())


# --- training loop ----------------------------------------------------------------

@dataclass
class TrainResult:
    params: ModelParams
    adam: AdamState
    history: list[LossBreakdown]
    epoch: int
    best_params: ModelParams | None = None  # lowest epoch loss, when tracked
    best_epoch: int | None = None


def format_log_line(epoch: int, lr: float, bd: LossBreakdown) -> str:
    return f"{epoch},{lr!r},{bd.cons!r},{bd.wcd!r},{bd.total!r}"


def train(dataset, cfg: TrainConfig, *, init: ModelParams | None = None,
          resume: Checkpoint | None = None, checkpoint_dir=None, log_path=None,
          progress=None, track_best: bool = False) -> TrainResult:
    """Train on a list of partial clouds for ``cfg.epochs`` epochs in total.

    ``resume`` continues a checkpointed run from its recorded epoch, which
    gives bit-identical results to an uninterrupted run. ``init`` starts from
    the given weights with a fresh optimizer state.
    """
    data = [as_cloud(p) for p in dataset]
    if not data:
        raise ValueError("empty dataset")
    root = SeededRng(cfg.seed)

    if resume is not None:
        if resume.fingerprint != cfg.fingerprint():
            raise CheckpointError("checkpoint was written with a different configuration")
        params, adam, start = resume.params.copy(), resume.adam.copy(), resume.epoch
    else:
        if init is not None:
            if init.n_out != cfg.n_out:
                raise CheckpointError(f"N_c mismatch: weights have {init.n_out}, config {cfg.n_out}")
            params = init.copy()
        else:
            params = init_params(cfg.n_out, root.fork(_INIT_STREAM),
                                 cfg.encoder_widths, cfg.decoder_widths)
        adam, start = AdamState.fresh(params), 0

    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    log_file = open(log_path, "a" if resume is not None else "w") if log_path else None

    history = []
    best_loss, best_params, best_epoch = np.inf, None, None
    try:
        for epoch in range(start, cfg.epochs):
            rng = root.fork(_EPOCH_STREAM, epoch)
            lr = lr_at_epoch(cfg, epoch)
            order = rng.permutation(len(data))
            sums = np.zeros(2)
            for lo in range(0, len(data), cfg.batch_size):
                batch = [data[k] for k in order[lo:lo + cfg.batch_size]]
                rec = acl_forward_batch(params, batch, cfg, rng)
                adam_step(params, param_gradients(params, rec.graph), adam, lr)
                sums += [sum(r.cons for r in rec.per_sample), sum(r.wcd for r in rec.per_sample)]
            bd = total_loss(sums[0] / len(data), sums[1] / len(data), cfg.weights)
            history.append(bd)
            if track_best and bd.total < best_loss:
                best_loss, best_params, best_epoch = bd.total, params.copy(), epoch
            line = format_log_line(epoch, lr, bd)
            log.info(line)
            if log_file:
                log_file.write(line + "\n")
                log_file.flush()
            if progress is not None:
                progress(epoch, bd)
            done = epoch + 1
            if checkpoint_dir is not None and (
                    (cfg.checkpoint_every and done % cfg.checkpoint_every == 0) or done == cfg.epochs):
                ckpt = Checkpoint(params, adam, done, cfg.fingerprint())
                save_checkpoint(checkpoint_dir / f"epoch_{done:04d}.ckpt", ckpt)
                save_checkpoint(checkpoint_dir / "last.ckpt", ckpt)
    finally:
        if log_file:
            log_file.close()
    return TrainResult(params, adam, history, max(start, cfg.epochs), best_params, best_epoch)


def test_time_adapt(pretrained: ModelParams, test_partials, cfg: TrainConfig, **kwargs) -> ModelParams:
    """Continue self-supervised training on test partials from pretrained weights."""
    if pretrained.n_out != cfg.n_out:
        raise CheckpointError(f"N_c mismatch: checkpoint has {pretrained.n_out}, config {cfg.n_out}")
    return train(test_partials, cfg, init=pretrained, **kwargs).params


test_time_adapt.__test__ = False
