"""Per-neuron saliency estimation and rank-band selection.

Three estimators are provided, all returning a :class:`SaliencyReport` for one
hidden layer:

* ``mbp_saliency`` scores a neuron by the squared magnitude of its incoming
  parameters (weight power).
* ``obs_saliency`` scores parameters by ``w^2 * H / 2`` using a Gauss-Newton
  diagonal curvature estimate accumulated over a calibration corpus, then sums
  per neuron.
* ``mi_saliency`` scores a neuron by the mean absolute cumulative
  cross-correlation between its output activation and the previous layer's
  activations over a sliding temporal window.

``band_select`` splits a report's ranking into hypo (least salient), mid, and
hyper (most salient) bands by percentage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .network import activation_deriv, forward
from .validation import frames_and_labels, segments_of

METHODS = ("mbp", "obs", "mi")


def percent_to_count(width, pct):
    """Round-half-up count of neurons covered by ``pct`` percent of ``width``."""
    if pct < 0:
        raise ValueError("percentage must be non-negative")
    return int(np.floor(width * pct / 100.0 + 0.5))


@dataclass
class SaliencyReport:
    """Scores and ascending ranking for one layer under one method."""

    layer_index: int
    method: str
    scores: np.ndarray
    ranking: np.ndarray

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown saliency method {self.method!r}")
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.ranking = np.asarray(self.ranking, dtype=np.int64)
        if self.scores.ndim != 1 or self.scores.size == 0:
            raise ValueError("scores must be a nonempty vector")
        if not np.all(np.isfinite(self.scores)) or np.any(self.scores < 0):
            raise ValueError("scores must be finite and non-negative")
        if sorted(self.ranking.tolist()) != list(range(self.scores.size)):
            raise ValueError("ranking is not a permutation of neuron indices")
        ranked = self.scores[self.ranking]
        if np.any(ranked[:-1] > ranked[1:]):
            raise ValueError("ranking is not ascending in score")

    @classmethod
    def from_scores(cls, layer_index, method, scores):
        scores = np.asarray(scores, dtype=np.float64)
        # stable sort: ties broken by lower neuron index first
        ranking = np.argsort(scores, kind="stable")
        return cls(layer_index, method, scores, ranking)

    @property
    def width(self):
        return self.scores.size

    def to_dict(self):
        return {
            "layer": int(self.layer_index),
            "method": self.method,
            "scores": self.scores.tolist(),
            "ranking": self.ranking.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(
            int(doc["layer"]),
            doc["method"],
            np.asarray(doc["scores"], dtype=np.float64),
            np.asarray(doc["ranking"], dtype=np.int64),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class MIConfig:
    window_q: int = 10
    max_frames: int | None = None

    def __post_init__(self):
        if self.window_q < 2 or self.window_q % 2 != 0:
            raise ValueError("window_q must be an even integer >= 2")
        if self.max_frames is not None and self.max_frames < 1:
            raise ValueError("max_frames must be positive when given")


def mbp_saliency(net, layer_index):
    """Weight-power saliency: sum of squared incoming weights plus squared bias."""
    layer = net.hidden_layer(layer_index)
    scores = np.sum(layer.weights ** 2, axis=1) + layer.biases ** 2
    return SaliencyReport.from_scores(layer_index, "mbp", scores)


def _output_curvature(net, outputs):
    """Per-frame curvature of the loss w.r.t. the final pre-activation."""
    if net.layers[-1].activation == "softmax":
        # cross-entropy through softmax
        return outputs * (1.0 - outputs)
    # squared-error loss (1/2 sum of squared residuals) on any other output
    return np.ones_like(outputs)


def obs_saliency(net, layer_index, calib):
    """Second-derivative saliency from a Gauss-Newton diagonal curvature estimate.

    Curvature is seeded at the output layer, propagated backwards through the
    squared weights and squared activation slopes, and accumulated over the
    calibration frames.  Each incoming parameter q of a neuron contributes
    ``w_q^2 * H_q / 2``; the neuron's score is the sum over its incoming
    weights and bias.
    """
    net.hidden_layer(layer_index)  # validates the index
    X, _ = frames_and_labels(calib, require_labels=False)
    _, trace = forward(net, X)

    h = _output_curvature(net, trace.layer_outputs[-1])
    # walk curvature down to the requested layer (0-based position layer_index-1)
    for i in range(len(net.layers) - 1, layer_index - 1, -1):
        layer = net.layers[i]
        below = net.layers[i - 1]
        g = h @ (layer.weights ** 2)
        act = trace.layer_outputs[i - 1]
        h = g * activation_deriv(below.activation, act) ** 2
        mask = net.keep_masks.get(i)
        if mask is not None:
            h = h * mask

    inputs = trace.layer_outputs[layer_index - 2] if layer_index > 1 else trace.inputs
    T = X.shape[0]
    layer = net.layers[layer_index - 1]
    hess_w = h.T @ (inputs ** 2) / T
    hess_b = h.sum(axis=0) / T
    scores = 0.5 * (
        np.sum(layer.weights ** 2 * hess_w, axis=1) + layer.biases ** 2 * hess_b
    )
    return SaliencyReport.from_scores(layer_index, "obs", scores)


def mi_saliency(net, layer_index, calib_stream, cfg=None):
    """Temporal cross-correlation saliency.

    For each frame t where the full window fits inside one segment, the score
    contribution of neuron n is ``(1/N) * sum_p |x_out[t,n] * S_p[t]|`` where
    ``S_p[t]`` sums the previous layer's activation p over the window
    ``t-(q/2-1) .. t+q/2``.  The neuron's score is the mean over all such t.
    Windows never cross segment boundaries.
    """
    cfg = cfg or MIConfig()
    q = cfg.window_q
    net.hidden_layer(layer_index)
    X, _ = frames_and_labels(calib_stream, require_labels=False)
    segments = segments_of(calib_stream, X.shape[0])
    if cfg.max_frames is not None and X.shape[0] > cfg.max_frames:
        X = X[:cfg.max_frames]
        segments = [
            (s, min(e, cfg.max_frames)) for s, e in segments if s < cfg.max_frames
        ]
    if X.shape[0] < q:
        raise ValueError(
            f"calibration stream has {X.shape[0]} frames, shorter than the "
            f"window ({q})"
        )
    _, trace = forward(net, X)
    x_out = trace.layer_outputs[layer_index - 1]
    x_in = trace.layer_outputs[layer_index - 2] if layer_index > 1 else trace.inputs

    n_in = x_in.shape[1]
    offsets = range(-(q // 2 - 1), q // 2 + 1)
    total = np.zeros(x_out.shape[1])
    n_t = 0
    for start, end in segments:
        lo = start + q // 2 - 1
        hi = end - 1 - q // 2
        if hi < lo:
            continue  # segment shorter than the window contributes nothing
        # windowed sums of each input activation, accumulated in ascending k
        # order so rounding matches a per-k loop
        S = np.zeros((hi - lo + 1, n_in))
        for k in offsets:
            S += x_in[lo + k: hi + k + 1]
        amp = np.mean(np.abs(S), axis=1)
        total += np.abs(x_out[lo: hi + 1]).T @ amp
        n_t += hi - lo + 1
    if n_t == 0:
        raise ValueError("no segment is long enough for the correlation window")
    return SaliencyReport.from_scores(layer_index, "mi", total / n_t)


def band_select(report, hypo_pct, hyper_pct):
    """Split a report's ranking into (hypo, mid, hyper) index arrays."""
    if hypo_pct < 0 or hyper_pct < 0:
        raise ValueError("band percentages must be non-negative")
    if hypo_pct + hyper_pct > 100:
        raise ValueError("hypo and hyper bands exceed the layer")
    width = report.width
    n_hypo = percent_to_count(width, hypo_pct)
    n_hyper = percent_to_count(width, hyper_pct)
    if n_hypo + n_hyper > width:
        raise ValueError(
            f"bands overlap: {n_hypo} hypo + {n_hyper} hyper on width {width}"
        )
    ranking = report.ranking
    hypo = ranking[:n_hypo]
    hyper = ranking[width - n_hyper:] if n_hyper else ranking[:0]
    mid = ranking[n_hypo: width - n_hyper]
    return hypo, mid, hyper
