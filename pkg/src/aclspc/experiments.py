"""Desk-scale experiment protocol on procedural shapes.

Train on partial views of one set of shapes, then score completions of held-out
shapes against their ground truth. The reference completion is the input
partial itself, resampled to N_c points: a model that fills in missing
geometry must beat it on coverage.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from .core import SeededRng, resample
from .data import SHAPE_KINDS, TOY_GRID, Sample, make_toy_samples
from .loss import LossBreakdown, LossWeights, weighted_chamfer
from .metrics import chamfer_eval
from .model import ModelParams, forward_complete
from .train import TrainConfig, test_time_adapt, train


@dataclass(frozen=True)
class ToySplit:
    n_shapes: int = 40
    views_per_shape: int = 5
    n_partial: int = 1024
    n_gt: int = 2048
    seed: int = 1
    kinds: tuple[str, ...] = SHAPE_KINDS
    grid_resolution: int = TOY_GRID

    def samples(self) -> list[Sample]:
        return make_toy_samples(self.n_shapes, self.views_per_shape, self.n_partial, self.seed,
                                self.kinds, self.n_gt, self.grid_resolution)


TRAIN_SPLIT = ToySplit()
HELDOUT_SPLIT = ToySplit(n_shapes=10, seed=2)


def mean_pairwise_distance(cloud) -> float:
    return float(pdist(np.asarray(cloud)).mean()) if len(cloud) > 1 else 0.0


@dataclass
class EvalSummary:
    coverage: float
    precision: float
    cd: float
    baseline_coverage: float
    baseline_cd: float
    wcd: float
    spread_ratio: float  # mean pairwise distance of outputs / of ground truth

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def evaluate_split(params: ModelParams, samples: list[Sample], cfg: TrainConfig,
                   seed: int = 0) -> EvalSummary:
    rng = SeededRng(seed)
    rows = []
    for s in samples:
        comp = forward_complete(params, s.partial)
        p, c, cd = chamfer_eval(comp, s.gt)
        base = resample(s.partial, params.n_out, rng)
        _, bc, bcd = chamfer_eval(base, s.gt)
        spread = mean_pairwise_distance(comp) / mean_pairwise_distance(s.gt)
        rows.append((c, p, cd, bc, bcd, weighted_chamfer(comp, s.partial, LossWeights()), spread))
    return EvalSummary(*(float(v) for v in np.mean(rows, axis=0)))


@dataclass
class RunResult:
    cfg: TrainConfig
    params: ModelParams
    history: list[LossBreakdown]
    heldout: EvalSummary
    seconds: float
    extra: dict = field(default_factory=dict)


def run_toy(cfg: TrainConfig, train_split: ToySplit = TRAIN_SPLIT,
            heldout_split: ToySplit = HELDOUT_SPLIT, progress=None, **train_kwargs) -> RunResult:
    t0 = time.time()
    train_samples = train_split.samples()
    result = train([s.partial for s in train_samples], cfg, progress=progress, **train_kwargs)
    summary = evaluate_split(result.params, heldout_split.samples(), cfg)
    return RunResult(cfg, result.params, result.history, summary, time.time() - t0)


def run_adaptation(pretrain_cfg: TrainConfig, adapt_cfg: TrainConfig, pretrain_split: ToySplit,
                   target_split: ToySplit, progress=None) -> RunResult:
    """Pretrain on one shape family, then adapt on partials of another.

    ``extra`` records the mean weighted Chamfer on the target partials for
    the frozen pretrained model and for the adapted model.
    """
    t0 = time.time()
    pre = train([s.partial for s in pretrain_split.samples()], pretrain_cfg, progress=progress)
    target = target_split.samples()
    partials = [s.partial for s in target]
    adapted = test_time_adapt(pre.params, partials, adapt_cfg, progress=progress)

    def mean_wcd(params):
        return float(np.mean([weighted_chamfer(forward_complete(params, p), p, adapt_cfg.weights)
                              for p in partials]))

    summary = evaluate_split(adapted, target, adapt_cfg)
    return RunResult(adapt_cfg, adapted, pre.history, summary, time.time() - t0,
                     {"wcd_frozen": mean_wcd(pre.params), "wcd_adapted": mean_wcd(adapted),
                      "frozen": evaluate_split(pre.params, target, adapt_cfg).as_dict()})


# --- named configurations -------------------------------------------------------

BASE_CONFIG = TrainConfig()  # N_c=2048, N_s=8, lambda_cons=10, alpha=0.1, beta=0.9, 200 epochs

EXPERIMENTS: dict[str, tuple[TrainConfig, ToySplit]] = {
    "full": (BASE_CONFIG, TRAIN_SPLIT),
    "no_cons": (BASE_CONFIG.replace(weights=LossWeights(lambda_cons=0.0)), TRAIN_SPLIT),
    "no_wcd": (BASE_CONFIG.replace(weights=LossWeights(alpha=0.0, beta=0.0)), TRAIN_SPLIT),
    "ns1": (BASE_CONFIG.replace(n_syn_views=1), TRAIN_SPLIT),
    "ns4": (BASE_CONFIG.replace(n_syn_views=4), TRAIN_SPLIT),
    "chamfer": (BASE_CONFIG.replace(consistency_mode="chamfer"), TRAIN_SPLIT),
    "single_view": (BASE_CONFIG, ToySplit(n_shapes=200, views_per_shape=1)),
}

ADAPT_SPLITS = (
    ToySplit(n_shapes=40, views_per_shape=5, seed=3, kinds=("sphere", "cuboid")),
    ToySplit(n_shapes=10, views_per_shape=5, seed=4, kinds=("cylinder",)),
)


def adaptation_configs() -> tuple[TrainConfig, TrainConfig]:
    """Pretraining and adaptation schedules for the out-of-family experiment."""
    return BASE_CONFIG.replace(epochs=100), BASE_CONFIG.replace(epochs=200, seed=1)
