"""Dense feedforward network core.

Conventions used throughout the toolkit:

* Weight matrices are ``(out_width, in_width)``; a batch of frames is
  ``(n_frames, n_features)`` and layer outputs are ``(n_frames, out_width)``.
* Hidden layers are addressed with 1-based indices, so ``layer 1`` is the first
  hidden layer and the final layer (usually softmax) is the output layer.
* All arithmetic is float64 and fully deterministic given seeds.

The module provides the raw building blocks: layers, forward with activation
tracing, cross-entropy backprop, plain SGD steps, and versioned JSON
checkpoints.  The training schedule lives in :mod:`prunekit.training`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .validation import as_frames, as_labels

ACTIVATIONS = ("sigmoid", "relu", "linear", "softmax")

CHECKPOINT_VERSION = 1


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def softmax(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def apply_activation(name, z):
    if name == "sigmoid":
        return sigmoid(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "linear":
        return z
    if name == "softmax":
        return softmax(z)
    raise ValueError(f"unknown activation {name!r}")


def activation_deriv(name, a):
    """Derivative of the activation expressed through its own output ``a``."""
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "relu":
        return (a > 0).astype(np.float64)
    if name == "linear":
        return np.ones_like(a)
    raise ValueError(f"no elementwise derivative for activation {name!r}")


@dataclass
class DenseLayer:
    """One fully connected layer: ``act(W x + b)``."""

    weights: np.ndarray
    biases: np.ndarray
    activation: str = "sigmoid"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be 2-D (out_width, in_width)")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"biases shape {self.biases.shape} does not match "
                f"out_width {self.weights.shape[0]}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("layer parameters must be finite")

    @property
    def out_width(self):
        return self.weights.shape[0]

    @property
    def in_width(self):
        return self.weights.shape[1]

    def copy(self):
        return DenseLayer(self.weights.copy(), self.biases.copy(), self.activation)


@dataclass
class ActivationTrace:
    """Per-layer post-activation values for a presented frame stream."""

    inputs: np.ndarray
    layer_outputs: list

    @property
    def frame_count(self):
        return self.inputs.shape[0]


class Network:
    """Ordered stack of dense layers.

    ``keep_masks`` optionally marks neurons of hidden layers as pruned: a
    masked neuron's post-activation output is forced to zero on every forward
    pass, so downstream computation depends only on kept neurons while the
    layer's parameters stay in place.  Keys are 1-based hidden layer indices.
    """

    def __init__(self, layers, input_width, keep_masks=None):
        layers = list(layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        self.input_width = int(input_width)
        if self.input_width <= 0:
            raise ValueError("input_width must be positive")
        prev = self.input_width
        for i, layer in enumerate(layers):
            if layer.in_width != prev:
                raise ValueError(
                    f"layer {i} expects in_width {layer.in_width}, got {prev} "
                    "(adjacent widths must chain)"
                )
            if layer.activation == "softmax" and i != len(layers) - 1:
                raise ValueError("softmax is allowed on the final layer only")
            prev = layer.out_width
        self.layers = layers
        self.keep_masks = {}
        if keep_masks:
            for k, v in keep_masks.items():
                self.set_keep_mask(int(k), v)

    @property
    def n_hidden(self):
        return max(0, len(self.layers) - 1)

    @property
    def output_width(self):
        return self.layers[-1].out_width

    @property
    def widths(self):
        return [self.input_width] + [layer.out_width for layer in self.layers]

    def hidden_layer(self, index):
        """Hidden layer by 1-based index (the output layer is not addressable)."""
        if not 1 <= index <= self.n_hidden:
            raise ValueError(
                f"layer index {index} out of range (network has {self.n_hidden} "
                "hidden layers)"
            )
        return self.layers[index - 1]

    def set_keep_mask(self, index, keep):
        keep = np.asarray(keep, dtype=bool)
        layer = self.hidden_layer(index)
        if keep.shape != (layer.out_width,):
            raise ValueError(
                f"keep mask for layer {index} has shape {keep.shape}, "
                f"expected ({layer.out_width},)"
            )
        if not keep.any():
            raise ValueError(f"keep mask for layer {index} removes every neuron")
        self.keep_masks[index] = keep

    def n_params(self):
        return sum(l.weights.size + l.biases.size for l in self.layers)

    def copy(self):
        return Network(
            [l.copy() for l in self.layers],
            self.input_width,
            keep_masks={k: v.copy() for k, v in self.keep_masks.items()},
        )

    def params_equal(self, other):
        """Bitwise parameter equality (architecture must match)."""
        if self.widths != other.widths:
            return False
        for a, b in zip(self.layers, other.layers):
            if not (np.array_equal(a.weights, b.weights) and np.array_equal(a.biases, b.biases)):
                return False
        return True


def init_network(input_width, hidden_widths, n_classes, hidden_activation="sigmoid",
                 seed=0):
    """Build a seeded network with uniform +-sqrt(6/(fan_in+fan_out)) weights."""
    rng = np.random.default_rng(seed)
    layers = []
    prev = int(input_width)
    for width in list(hidden_widths) + [int(n_classes)]:
        width = int(width)
        bound = np.sqrt(6.0 / (prev + width))
        weights = rng.uniform(-bound, bound, size=(width, prev))
        layers.append(DenseLayer(weights, np.zeros(width), hidden_activation))
        prev = width
    layers[-1].activation = "softmax"
    return Network(layers, input_width)


def forward(net, frames):
    """Run the network over a frame batch.

    Returns ``(outputs, trace)`` where ``outputs`` is the final layer's
    post-activation (rows of a softmax output sum to 1) and ``trace`` holds the
    post-activation values of every layer for the presented stream.
    """
    X = as_frames(frames)
    if X.shape[1] != net.input_width:
        raise ValueError(
            f"frames have {X.shape[1]} features but network expects {net.input_width}"
        )
    a = X
    outputs = []
    for i, layer in enumerate(net.layers):
        a = apply_activation(layer.activation, a @ layer.weights.T + layer.biases)
        mask = net.keep_masks.get(i + 1)
        if mask is not None:
            a = a * mask
        outputs.append(a)
    return outputs[-1], ActivationTrace(inputs=X, layer_outputs=outputs)


def predict_labels(net, frames):
    out, _ = forward(net, frames)
    return np.argmax(out, axis=1)


def cross_entropy(outputs, labels):
    """Mean negative log-likelihood of hard labels under softmax outputs."""
    p = outputs[np.arange(len(labels)), labels]
    return float(-np.mean(np.log(np.maximum(p, 1e-300))))


def backward(net, frames, labels, l2=0.0):
    """Gradients of mean cross-entropy (plus ``l2/2 * ||W||^2`` on weights).

    Returns one ``(d_weights, d_biases)`` pair per layer.  Biases carry no L2
    term.  The final layer must be softmax.
    """
    X = as_frames(frames)
    y = as_labels(labels, n_classes=net.output_width)
    if y.shape[0] != X.shape[0]:
        raise ValueError("frames and labels disagree on batch size")
    if net.layers[-1].activation != "softmax":
        raise ValueError("backward requires a softmax output layer")
    outputs, trace = forward(net, X)
    n = X.shape[0]

    delta = outputs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        below = trace.layer_outputs[i - 1] if i > 0 else trace.inputs
        d_w = delta.T @ below
        if l2:
            d_w = d_w + l2 * layer.weights
        d_b = delta.sum(axis=0)
        grads[i] = (d_w, d_b)
        if i > 0:
            prev_layer = net.layers[i - 1]
            delta = (delta @ layer.weights) * activation_deriv(
                prev_layer.activation, below
            )
            mask = net.keep_masks.get(i)
            if mask is not None:
                delta = delta * mask
    return grads


def sgd_step(net, grads, lr):
    """In-place ``w <- w - lr * g`` over every parameter; returns the network."""
    if lr < 0:
        raise ValueError("learning rate must be non-negative")
    if len(grads) != len(net.layers):
        raise ValueError("gradient list does not match layer count")
    for layer, (d_w, d_b) in zip(net.layers, grads):
        if d_w.shape != layer.weights.shape or d_b.shape != layer.biases.shape:
            raise ValueError("gradient shapes do not match layer parameters")
        layer.weights -= lr * d_w
        layer.biases -= lr * d_b
    return net


def save_checkpoint(net, path):
    """Write a versioned JSON checkpoint with full float round-trip precision."""
    doc = {
        "version": CHECKPOINT_VERSION,
        "input_width": net.input_width,
        "layers": [
            {
                "activation": layer.activation,
                "weights": layer.weights.ravel().tolist(),
                "biases": layer.biases.tolist(),
            }
            for layer in net.layers
        ],
    }
    if net.keep_masks:
        doc["keep_masks"] = {
            str(k): v.astype(int).tolist() for k, v in net.keep_masks.items()
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    prev = int(doc["input_width"])
    layers = []
    for spec in doc["layers"]:
        biases = np.asarray(spec["biases"], dtype=np.float64)
        weights = np.asarray(spec["weights"], dtype=np.float64).reshape(
            len(biases), prev
        )
        layers.append(DenseLayer(weights, biases, spec["activation"]))
        prev = len(biases)
    masks = {
        int(k): np.asarray(v, dtype=bool)
        for k, v in doc.get("keep_masks", {}).items()
    }
    return Network(layers, int(doc["input_width"]), keep_masks=masks)
