"""Unsupervised adaptation with optional selective parameter updates.

Four variants are supported, all driven by pseudo-labels that the baseline
model assigns to the adaptation stream once, up front:

* Model A: every parameter is updated (blind adaptation).
* Model B: only neurons named by an update selection are touched; everything
  else stays bit-identical to the baseline.
* Model C: continues from a Model B result, blind, with a seeded share of the
  original training data (true labels) mixed into the update stream.
* Model D: blind with the same data mixing, started from the baseline.

The learning rate halves every epoch: epoch e runs at ``initial_lr / 2**e``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .network import backward, cross_entropy, forward, predict_labels, sgd_step
from .pruning import LayerPrune, PruneMask, PrunePlan, build_mask
from .saliency import MIConfig, mbp_saliency, mi_saliency, obs_saliency
from .validation import check_fraction, frames_and_labels

VARIANTS = ("A", "B", "C", "D")


@dataclass
class AdaptConfig:
    l2: float = 0.001
    initial_lr: float = 0.004
    max_epochs: int = 10
    batch_size: int = 64
    data_mix: float = 0.0
    seed: int = 0
    update_mask: PruneMask | None = None

    def __post_init__(self):
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        check_fraction(self.data_mix, "data_mix")


@dataclass
class AdaptationPlan:
    """Variant plus the saliency recipe that names the updatable neurons."""

    variant: str
    mask_method: str = "mi"
    mask_layers: tuple = (1, 2)
    hypo_pct: float = 8.0
    hyper_pct: float = 4.0
    mi_window: int = 10

    def __post_init__(self):
        v = str(self.variant).upper().removeprefix("MODEL")
        if v not in VARIANTS:
            raise ValueError(f"unknown adaptation variant {self.variant!r}")
        self.variant = v
        self.mask_layers = tuple(int(l) for l in self.mask_layers)


def pseudo_label(model, unlabeled):
    """Argmax labels from the model; ties resolve to the lowest class index."""
    X, _ = frames_and_labels(unlabeled, require_labels=False)
    return predict_labels(model, X)


def selection_from_mask(mask):
    """Updatable-neuron selection: exactly the neurons a mask would prune."""
    return {layer: ~keep for layer, keep in mask.keep.items()}


def full_selection(net):
    """Selection covering every neuron of every layer (output included)."""
    return {
        i + 1: np.ones(layer.out_width, dtype=bool)
        for i, layer in enumerate(net.layers)
    }


def selective_update_step(net, gradients, selection, lr, l2=0.0):
    """SGD step restricted to the selected neurons' incoming weights and bias.

    ``selection`` maps 1-based layer positions to boolean out_width vectors;
    absent layers are frozen.  L2 decay applies to the selected rows' weights
    only, matching what a full step with L2 gradients would do there.
    """
    if len(gradients) != len(net.layers):
        raise ValueError("gradient list does not match layer count")
    total = 0
    for pos, vec in selection.items():
        if not 1 <= pos <= len(net.layers):
            raise ValueError(f"selection addresses layer {pos} of {len(net.layers)}")
        layer = net.layers[pos - 1]
        vec = np.asarray(vec, dtype=bool)
        if vec.shape != (layer.out_width,):
            raise ValueError(
                f"selection for layer {pos} has shape {vec.shape}, expected "
                f"({layer.out_width},)"
            )
        total += int(np.count_nonzero(vec))
    if total == 0:
        warnings.warn("update selection covers zero parameters; step is a no-op")
        return net
    for pos, vec in selection.items():
        vec = np.asarray(vec, dtype=bool)
        rows = np.flatnonzero(vec)
        if rows.size == 0:
            continue
        layer = net.layers[pos - 1]
        d_w, d_b = gradients[pos - 1]
        g_w = d_w[rows]
        if l2:
            g_w = g_w + l2 * layer.weights[rows]
        layer.weights[rows] -= lr * g_w
        layer.biases[rows] -= lr * d_b[rows]
    return net


def _selection_for(model, plan, cfg, original_corpus):
    if cfg.update_mask is not None:
        return selection_from_mask(cfg.update_mask)
    reports = []
    for layer in plan.mask_layers:
        if plan.mask_method == "mi":
            reports.append(
                mi_saliency(model, layer, original_corpus, MIConfig(plan.mi_window))
            )
        elif plan.mask_method == "obs":
            reports.append(obs_saliency(model, layer, original_corpus))
        else:
            reports.append(mbp_saliency(model, layer))
    rules = [
        LayerPrune(layer, plan.mask_method, "hypo+hyper", plan.hypo_pct, plan.hyper_pct)
        for layer in plan.mask_layers
    ]
    return selection_from_mask(build_mask(reports, PrunePlan(rules)))


def adapt(model, adaptation_corpus, original_corpus, plan, cfg=None,
          label_source=None, callback=None):
    """Adapt a copy of ``model`` on an unlabeled stream; returns (net, history).

    Pseudo-labels come from ``label_source`` if given, otherwise from ``model``
    itself, and are generated once before any update.  ``callback(epoch, net)``
    runs after every epoch with the evolving network.
    """
    cfg = cfg or AdaptConfig()
    if isinstance(plan, str):
        plan = AdaptationPlan(plan)
    if plan.variant == "A" and cfg.data_mix != 0:
        raise ValueError("Model A uses no data mixing; set data_mix=0")
    if plan.variant == "B" and cfg.data_mix != 0:
        raise ValueError("Model B uses no data mixing; set data_mix=0")
    if plan.variant == "C" and label_source is None:
        raise ValueError(
            "Model C continues from a Model B result; pass the original "
            "baseline as label_source"
        )

    labeler = label_source if label_source is not None else model
    X_adapt, _ = frames_and_labels(adaptation_corpus, require_labels=False)
    y_adapt = pseudo_label(labeler, X_adapt)

    selection = None
    if plan.variant == "B":
        selection = _selection_for(model, plan, cfg, original_corpus)

    rng = np.random.default_rng(cfg.seed)
    X, y = X_adapt, y_adapt
    if cfg.data_mix > 0:
        X_orig, y_orig = frames_and_labels(original_corpus)
        k = int(round(cfg.data_mix * len(X_orig)))
        if k > 0:
            idx = rng.choice(len(X_orig), size=k, replace=False)
            X = np.concatenate([X_adapt, X_orig[idx]])
            y = np.concatenate([y_adapt, y_orig[idx]])

    net = model.copy()
    history = []
    for epoch in range(cfg.max_epochs):
        lr = cfg.initial_lr / 2 ** epoch
        order = rng.permutation(len(X))
        for start in range(0, len(X), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            # per-frame lr convention, matching the trainer
            step = lr * len(batch)
            if selection is None:
                sgd_step(net, backward(net, X[batch], y[batch], l2=cfg.l2), step)
            else:
                grads = backward(net, X[batch], y[batch])
                selective_update_step(net, grads, selection, step, l2=cfg.l2)
        outputs, _ = forward(net, X)
        history.append(
            {"epoch": epoch, "lr": lr, "loss": cross_entropy(outputs, y)}
        )
        if callback is not None:
            callback(epoch, net)
    return net, history


def run_adaptation_suite(baseline, adaptation_corpus, original_corpus, cfg=None,
                         update_mask=None, mix=0.5, variants=VARIANTS):
    """Run the requested variants with their conventional settings.

    Returns ``{variant: (net, history)}``.  Model C continues from Model B's
    result, so requesting C implies running B.
    """
    cfg = cfg or AdaptConfig()
    variants = [AdaptationPlan(v).variant for v in variants]
    if "C" in variants and "B" not in variants:
        variants.append("B")
    results = {}

    def cfg_with(**kw):
        base = {
            "l2": cfg.l2,
            "initial_lr": cfg.initial_lr,
            "max_epochs": cfg.max_epochs,
            "batch_size": cfg.batch_size,
            "seed": cfg.seed,
            "update_mask": cfg.update_mask,
        }
        base.update(kw)
        return AdaptConfig(**base)

    if "A" in variants:
        results["A"] = adapt(
            baseline, adaptation_corpus, original_corpus, "A",
            cfg_with(data_mix=0.0, update_mask=None),
        )
    if "B" in variants:
        results["B"] = adapt(
            baseline, adaptation_corpus, original_corpus, "B",
            cfg_with(data_mix=0.0, update_mask=update_mask or cfg.update_mask),
        )
    if "C" in variants:
        results["C"] = adapt(
            results["B"][0], adaptation_corpus, original_corpus, "C",
            cfg_with(data_mix=mix, update_mask=None),
            label_source=baseline,
        )
    if "D" in variants:
        results["D"] = adapt(
            baseline, adaptation_corpus, original_corpus, "D",
            cfg_with(data_mix=mix, update_mask=None),
        )
    return results
