"""Prune masks, prune plans, and the two ways of applying them.

A :class:`PruneMask` records, per hidden layer, which neurons to keep.  It can
be applied two ways with identical forward behavior:

* ``apply_mask`` keeps the architecture and forces pruned activations to zero,
  which preserves neuron identities for selective adaptation;
* ``structural_prune`` actually removes the neurons (rows plus the next
  layer's columns), shrinking the parameter count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .network import Network
from .saliency import METHODS, band_select, percent_to_count

BANDS = ("hypo", "hyper", "mid", "hypo+hyper")


@dataclass
class LayerPrune:
    """One pruning rule: which band of which layer, at what percentages."""

    layer: int
    method: str
    band: str
    hypo_pct: float = 0.0
    hyper_pct: float = 0.0

    def __post_init__(self):
        if self.layer < 1:
            raise ValueError("pruning addresses hidden layers (1-based index)")
        if self.method not in METHODS:
            raise ValueError(f"unknown saliency method {self.method!r}")
        if self.band == "both":
            self.band = "hypo+hyper"
        if self.band not in BANDS:
            raise ValueError(f"unknown band {self.band!r}")
        if self.hypo_pct < 0 or self.hyper_pct < 0:
            raise ValueError("percentages must be non-negative")

    def to_dict(self):
        return {
            "layer": self.layer,
            "method": self.method,
            "band": self.band,
            "hypo_pct": self.hypo_pct,
            "hyper_pct": self.hyper_pct,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            int(doc["layer"]),
            doc["method"],
            doc["band"],
            float(doc.get("hypo_pct", 0.0)),
            float(doc.get("hyper_pct", 0.0)),
        )


@dataclass
class PrunePlan:
    rules: list = field(default_factory=list)

    def __post_init__(self):
        if not self.rules:
            raise ValueError("prune plan has no rules")

    @property
    def layers(self):
        return sorted({rule.layer for rule in self.rules})

    @classmethod
    def single(cls, method, layer, band, hypo_pct=0.0, hyper_pct=0.0):
        return cls([LayerPrune(layer, method, band, hypo_pct, hyper_pct)])

    @classmethod
    def multi_layer(cls, method, layers):
        """Hypo+hyper pruning across several layers.

        Layers 1 and 2 take 8% hypo + 4% hyper; the third (pre-final) hidden
        layer is far more sensitive and takes only 2% + 2%.
        """
        rules = []
        for layer in layers:
            hypo, hyper = (8.0, 4.0) if layer <= 2 else (2.0, 2.0)
            rules.append(LayerPrune(layer, method, "hypo+hyper", hypo, hyper))
        return cls(rules)

    @classmethod
    def sweep(cls, method, layer, band, pcts=(2, 4, 6, 8, 10, 12)):
        """One single-layer plan per percentage, covering a pruning sweep."""
        plans = []
        for pct in pcts:
            if band == "hyper":
                plans.append(cls.single(method, layer, band, hyper_pct=pct))
            else:
                plans.append(cls.single(method, layer, band, hypo_pct=pct))
        return plans

    def to_dict(self):
        return {"rules": [rule.to_dict() for rule in self.rules]}

    @classmethod
    def from_dict(cls, doc):
        return cls([LayerPrune.from_dict(r) for r in doc["rules"]])


class PruneMask:
    """Per-layer keep vectors plus the provenance that produced them.

    Layers absent from ``keep`` are untouched (all neurons kept).
    """

    def __init__(self, keep, provenance=None):
        self.keep = {}
        for layer, vec in keep.items():
            vec = np.asarray(vec, dtype=bool)
            if vec.ndim != 1 or vec.size == 0:
                raise ValueError(f"keep vector for layer {layer} must be 1-D")
            if not vec.any():
                raise ValueError(f"mask removes every neuron of layer {layer}")
            self.keep[int(layer)] = vec
        self.provenance = provenance or {}

    def pruned_ids(self, layer):
        vec = self.keep.get(layer)
        return np.array([], dtype=np.int64) if vec is None else np.flatnonzero(~vec)

    def n_pruned(self):
        return int(sum(np.count_nonzero(~v) for v in self.keep.values()))

    def layer_fraction(self, layer):
        vec = self.keep[layer]
        return float(np.count_nonzero(~vec) / vec.size)

    def overall_fraction(self, hidden_widths):
        """Pruned share of all hidden neurons (layers absent from the mask count
        as fully kept)."""
        total = sum(hidden_widths)
        return self.n_pruned() / total if total else 0.0

    def to_dict(self):
        return {
            "keep": {str(k): v.astype(int).tolist() for k, v in self.keep.items()},
            "provenance": {str(k): v for k, v in self.provenance.items()},
        }

    @classmethod
    def from_dict(cls, doc):
        keep = {int(k): np.asarray(v, dtype=bool) for k, v in doc["keep"].items()}
        prov = {int(k): v for k, v in doc.get("provenance", {}).items()}
        return cls(keep, prov)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def __eq__(self, other):
        if not isinstance(other, PruneMask):
            return NotImplemented
        if set(self.keep) != set(other.keep):
            return False
        return all(np.array_equal(self.keep[k], other.keep[k]) for k in self.keep)


def _mid_block(mid_ids, count, layer):
    """Most-salient block of the mid band (adjacent to the hyper boundary)."""
    if count > mid_ids.size:
        raise ValueError(
            f"mid band of layer {layer} has {mid_ids.size} neurons, "
            f"cannot prune {count}"
        )
    return mid_ids[mid_ids.size - count:]


def build_mask(reports, plan):
    """Resolve a plan against saliency reports into a concrete keep mask."""
    by_layer = {}
    for report in (reports.values() if isinstance(reports, dict) else reports):
        by_layer[(report.layer_index, report.method)] = report

    keep = {}
    provenance = {}
    for rule in plan.rules:
        report = by_layer.get((rule.layer, rule.method))
        if report is None:
            raise ValueError(
                f"no {rule.method} saliency report for layer {rule.layer}"
            )
        hypo, mid, hyper = band_select(report, rule.hypo_pct, rule.hyper_pct)
        if rule.band == "hypo":
            pruned = hypo
        elif rule.band == "hyper":
            pruned = hyper
        elif rule.band == "hypo+hyper":
            pruned = np.concatenate([hypo, hyper])
        else:
            # prune as many neurons as the two tails name, taken from the most
            # salient end of the mid band, so tail and mid pruning compare at
            # equal counts
            count = percent_to_count(report.width, rule.hypo_pct) + percent_to_count(
                report.width, rule.hyper_pct
            )
            pruned = _mid_block(mid, count, rule.layer)
        vec = keep.get(rule.layer)
        if vec is None:
            vec = np.ones(report.width, dtype=bool)
        vec = vec.copy()
        vec[pruned] = False
        if not vec.any():
            raise ValueError(f"plan removes every neuron of layer {rule.layer}")
        keep[rule.layer] = vec
        provenance.setdefault(rule.layer, []).append(rule.to_dict())
    return PruneMask(keep, provenance)


def _combined_keep(net, mask):
    combined = {}
    for layer, vec in mask.keep.items():
        if not 1 <= layer <= net.n_hidden:
            raise ValueError(
                f"mask addresses layer {layer} but network has {net.n_hidden} "
                "hidden layers"
            )
        width = net.layers[layer - 1].out_width
        if vec.size != width:
            raise ValueError(
                f"mask for layer {layer} has {vec.size} entries, layer width "
                f"is {width}"
            )
        combined[layer] = vec
    for layer, vec in net.keep_masks.items():
        combined[layer] = combined.get(layer, np.ones(vec.size, dtype=bool)) & vec
        if not combined[layer].any():
            raise ValueError(f"combined mask removes every neuron of layer {layer}")
    return combined


def apply_mask(net, mask):
    """Return a copy of ``net`` whose pruned neurons output zero."""
    combined = _combined_keep(net, mask)
    out = net.copy()
    out.keep_masks = {}
    for layer, vec in combined.items():
        out.set_keep_mask(layer, vec)
    return out


def structural_prune(net, mask):
    """Return a smaller network with the pruned neurons physically removed."""
    combined = _combined_keep(net, mask)
    layers = [layer.copy() for layer in net.layers]
    for index in range(1, net.n_hidden + 1):
        vec = combined.get(index)
        if vec is None:
            continue
        layer = layers[index - 1]
        layer.weights = layer.weights[vec]
        layer.biases = layer.biases[vec]
        nxt = layers[index]
        nxt.weights = nxt.weights[:, vec]
    return Network(layers, net.input_width)
