"""Finite-difference check of the closed-loop loss gradient.

The oracle loss is rebuilt from the recorded step using the reference network
in ``oracles``: the synthetic partials and the consistency target are taken
from the record as constants (they are detached in the real loss), everything
else is recomputed from the perturbed parameters.
"""
from dataclasses import dataclass

import numpy as np

from aclspc.core import SeededRng
from aclspc.model import init_params, param_gradients
from aclspc.train import TrainConfig, acl_forward_batch

from oracles import forward_ref, nn_loop, preactivation_signs

STEP = 1e-5


@dataclass
class Instance:
    cfg: TrainConfig
    params: object
    partial: np.ndarray
    synthetic: list
    target: np.ndarray
    analytic: list  # gradient tensors, in params.tensors() order


def make_instance(seed: int, cfg: TrainConfig, n_partial: int, bias_scale: float = 0.1) -> Instance:
    rng = SeededRng(seed)
    params = init_params(cfg.n_out, rng.fork(0), cfg.encoder_widths, cfg.decoder_widths)
    # nonzero biases so their gradients are exercised
    for layer in params.layers():
        layer.bias += bias_scale * rng.normal(layer.bias.shape)
    partial = rng.uniform(-0.5, 0.5, size=(n_partial, 3))
    rec = acl_forward_batch(params, [partial], cfg, rng.fork(1))
    grads = param_gradients(params, rec.graph)
    return Instance(cfg, params, partial, rec.synthetic[0], rec.completions[0],
                    [g.copy() for g in grads.tensors()])


def _layers(params):
    return [(l.weight, l.bias) for l in params.layers()]


def oracle_loss(inst: Instance):
    """Loss value plus the discrete state (correspondences, ReLU signs) it was evaluated in."""
    p = inst.params
    w = inst.cfg.weights
    layers, n_enc = _layers(p), len(p.encoder)
    c0 = forward_ref(layers, n_enc, inst.partial, p.n_out)
    i_cp, d_cp = nn_loop(c0, inst.partial)
    i_pc, d_pc = nn_loop(inst.partial, c0)
    wcd = w.alpha * d_cp.mean() + w.beta * d_pc.mean()
    cons = 0.0
    signs = [preactivation_signs(layers, n_enc, inst.partial)]
    for pv in inst.synthetic:
        cv = forward_ref(layers, n_enc, pv, p.n_out)
        cons += ((cv - inst.target) ** 2).sum()
        signs.append(preactivation_signs(layers, n_enc, pv))
    cons /= p.n_out * len(inst.synthetic)
    state = np.concatenate([i_cp, i_pc, *[s.astype(np.int64) for s in signs]])
    return w.lambda_cons * cons + wcd, state


def rel_err(a, n, floor):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def check_entries(inst: Instance, entries=None, step: float = STEP):
    """Central differences for the chosen ``(tensor, flat index)`` entries (all by default).

    Returns ``(analytic, numeric, clean)``; ``clean`` is False when any
    perturbation crossed a ReLU kink or switched a nearest-neighbour pair.
    """
    tensors = inst.params.tensors()
    if entries is None:
        entries = [(t, k) for t, x in enumerate(tensors) for k in range(x.size)]
    _, base_state = oracle_loss(inst)
    analytic = np.empty(len(entries))
    numeric = np.empty(len(entries))
    clean = True
    for e, (t, k) in enumerate(entries):
        flat = tensors[t].reshape(-1)
        orig = flat[k]
        flat[k] = orig + step
        lp, sp = oracle_loss(inst)
        flat[k] = orig - step
        lm, sm = oracle_loss(inst)
        flat[k] = orig
        clean &= np.array_equal(sp, base_state) and np.array_equal(sm, base_state)
        numeric[e] = (lp - lm) / (2 * step)
        analytic[e] = inst.analytic[t].reshape(-1)[k]
    return analytic, numeric, clean
