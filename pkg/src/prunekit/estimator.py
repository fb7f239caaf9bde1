"""Scikit-learn style wrapper around the network core."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .network import forward, init_network
from .training import TrainConfig, train


class FrameNetClassifier(ClassifierMixin, BaseEstimator):
    """Dense softmax frame classifier trained with the halving-LR schedule.

    Follows the usual estimator contract: ``fit(X, y)``, ``predict``,
    ``predict_proba``, ``score``, and ``get_params``/``set_params`` for
    cloning.  The fitted network is exposed as ``network_`` so the saliency,
    pruning, and adaptation functions can operate on it directly.
    """

    def __init__(self, hidden_layers=3, hidden_width=128, activation="sigmoid",
                 initial_lr=0.008, constant_epochs=4, batch_size=64,
                 max_epochs=20, l2=0.0, patience=2, validation_fraction=0.1,
                 random_state=0):
        self.hidden_layers = hidden_layers
        self.hidden_width = hidden_width
        self.activation = activation
        self.initial_lr = initial_lr
        self.constant_epochs = constant_epochs
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.l2 = l2
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _encode(self, y, name="y"):
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        if np.any(self.classes_[idx] != y):
            raise ValueError(f"{name} contains labels unseen during fit")
        return idx

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y)
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least 2 classes")
        self.n_features_in_ = X.shape[1]

        if X_val is None:
            if not 0 < self.validation_fraction < 1:
                raise ValueError(
                    "validation_fraction must lie in (0, 1) when no validation "
                    "set is given"
                )
            rng = np.random.default_rng(self.random_state)
            order = rng.permutation(len(X))
            n_val = max(1, int(round(self.validation_fraction * len(X))))
            if n_val >= len(X):
                raise ValueError("validation split leaves no training data")
            val_idx, train_idx = order[:n_val], order[n_val:]
            X_tr, y_tr = X[train_idx], y_idx[train_idx]
            X_cv, y_cv = X[val_idx], y_idx[val_idx]
        else:
            if y_val is None:
                raise ValueError("y_val is required when X_val is given")
            X_cv, y_val = check_X_y(X_val, y_val)
            y_cv = self._encode(y_val, "y_val")
            X_tr, y_tr = X, y_idx

        net = init_network(
            self.n_features_in_,
            [self.hidden_width] * self.hidden_layers,
            len(self.classes_),
            hidden_activation=self.activation,
            seed=self.random_state,
        )
        cfg = TrainConfig(
            initial_lr=self.initial_lr,
            constant_epochs=self.constant_epochs,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            l2=self.l2,
            patience=self.patience,
            seed=self.random_state,
        )
        self.network_, self.history_ = train(net, (X_tr, y_tr), (X_cv, y_cv), cfg)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features but the model was fitted with "
                f"{self.n_features_in_}"
            )
        outputs, _ = forward(self.network_, X)
        return outputs

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[np.argmax(proba, axis=1)]
