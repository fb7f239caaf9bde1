"""Mini-batch SGD training with a validation-driven learning rate schedule.

The schedule holds the learning rate constant for a fixed number of warm-up
epochs, then halves it on entry to any epoch whose preceding validation error
failed to improve.  Training stops early once validation error has gone
``patience`` consecutive epochs without beating the best value seen so far.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import backward, cross_entropy, forward, predict_labels, sgd_step
from .validation import frames_and_labels


class TrainingDiverged(RuntimeError):
    """Raised when parameters or losses stop being finite."""


@dataclass
class TrainConfig:
    initial_lr: float = 0.008
    constant_epochs: int = 4
    batch_size: int = 256
    max_epochs: int = 20
    l2: float = 0.0
    patience: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if self.constant_epochs < 0:
            raise ValueError("constant_epochs must be non-negative")
        if self.batch_size <= 0:
            raise ValueError("batch_size must be positive")
        if self.max_epochs <= 0:
            raise ValueError("max_epochs must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


def schedule_lr(initial_lr, constant_epochs, cv_errors):
    """Learning rate for the epoch about to run.

    ``cv_errors`` holds one validation error per completed epoch, so the
    upcoming epoch has 0-based index ``len(cv_errors)``.  Epochs before
    ``constant_epochs`` always run at ``initial_lr``.  From then on the rate
    halves, cumulatively, on entry to each epoch whose two most recent
    completed epochs show no improvement (last error >= the one before it).
    """
    lr = float(initial_lr)
    upcoming = len(cv_errors)
    for epoch in range(constant_epochs, upcoming + 1):
        history = cv_errors[:epoch]
        if len(history) >= 2 and history[-1] >= history[-2]:
            lr *= 0.5
    return lr


def should_stop(cv_errors, patience=2):
    """True once ``patience`` consecutive epochs failed to beat the best error."""
    if len(cv_errors) <= patience:
        return False
    streak = 0
    best = cv_errors[0]
    for err in cv_errors[1:]:
        if err < best:
            best = err
            streak = 0
        else:
            streak += 1
    return streak >= patience


def evaluate(net, corpus):
    """Frame error rate: fraction of frames whose argmax class is wrong."""
    X, y = frames_and_labels(corpus)
    return float(np.mean(predict_labels(net, X) != y))


def _check_finite(net):
    for layer in net.layers:
        if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.biases))):
            raise TrainingDiverged("network parameters are no longer finite")


def train(net, train_corpus, cv_corpus, config=None):
    """Train ``net`` in place; returns ``(net, history)``.

    ``history`` has one dict per completed epoch with keys ``epoch``, ``lr``,
    ``train_loss`` and ``cv_error``.
    """
    config = config or TrainConfig()
    X, y = frames_and_labels(train_corpus)
    rng = np.random.default_rng(config.seed)
    history = []
    cv_errors = []
    for epoch in range(config.max_epochs):
        lr = schedule_lr(config.initial_lr, config.constant_epochs, cv_errors)
        order = rng.permutation(len(X))
        for start in range(0, len(X), config.batch_size):
            batch = order[start:start + config.batch_size]
            grads = backward(net, X[batch], y[batch], l2=config.l2)
            # lr applies per frame: a batch's update is lr times the summed
            # per-frame gradient, so batch size does not shrink the step
            sgd_step(net, grads, lr * len(batch))
        _check_finite(net)
        outputs, _ = forward(net, X)
        train_loss = cross_entropy(outputs, y)
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"training loss became {train_loss} at epoch {epoch}")
        cv_error = evaluate(net, cv_corpus)
        cv_errors.append(cv_error)
        history.append(
            {"epoch": epoch, "lr": lr, "train_loss": train_loss, "cv_error": cv_error}
        )
        # stopping checks begin once the warm-up at constant lr is over
        if epoch >= config.constant_epochs and should_stop(cv_errors, config.patience):
            break
    return net, history
