"""Scikit-learn estimator wrapping the BP/DFA crossbar trainer.

`CimMlpClassifier` follows the fit/predict contract (get_params/set_params
via BaseEstimator), so the simulated-hardware training loop composes with
pipelines, grid search and cross-validation like any other classifier.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .analog import AnalogBackend, CrossbarConfig, DigitalBackend
from .dataio import Dataset
from .network import Topology, forward, predict, xavier_init
from .numerics import Quantizer, derive_rng
from .training import FeedbackBank, HyperParams, TrainerKind, softmax, train


class CimMlpClassifier(ClassifierMixin, BaseEstimator):
    """Fully connected classifier trained with BP or DFA on a digital or
    simulated-crossbar backend.

    Parameters mirror the training library: `algorithm` picks the learning
    rule, `backend` the compute substrate ("digital" or "analog" with an
    optional `crossbar` CrossbarConfig), and the four `*_bits` knobs enable
    fake quantization of weights, activations, errors and gradients at the
    given symmetric ranges.
    """

    def __init__(self, hidden_layer_sizes=(64,), activation="relu", algorithm="bp",
                 learning_rate=0.05, batch_size=128, epochs=25, seed=0,
                 backend="digital", crossbar=None,
                 weight_bits=None, weight_range=1.0,
                 activation_bits=None, activation_range=1.0,
                 error_bits=None, error_range=1.0,
                 gradient_bits=None, gradient_range=1.0,
                 validation_set=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.algorithm = algorithm
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.backend = backend
        self.crossbar = crossbar
        self.weight_bits = weight_bits
        self.weight_range = weight_range
        self.activation_bits = activation_bits
        self.activation_range = activation_range
        self.error_bits = error_bits
        self.error_range = error_range
        self.gradient_bits = gradient_bits
        self.gradient_range = gradient_range
        self.validation_set = validation_set

    def _quantizer(self, bits, rng) -> Quantizer | None:
        return None if bits is None else Quantizer(bits=bits, range=rng)

    def _hyperparams(self) -> HyperParams:
        return HyperParams(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            weight_quantizer=self._quantizer(self.weight_bits, self.weight_range),
            activation_quantizer=self._quantizer(self.activation_bits, self.activation_range),
            error_quantizer=self._quantizer(self.error_bits, self.error_range),
            gradient_quantizer=self._quantizer(self.gradient_bits, self.gradient_range),
        )

    def _make_backend(self):
        if self.backend == "analog":
            cfg = self.crossbar if self.crossbar is not None else CrossbarConfig()
            return AnalogBackend(cfg, derive_rng(self.seed, "analog"))
        if self.backend != "digital":
            raise ValueError(f"backend must be 'digital' or 'analog', got {self.backend!r}")
        return DigitalBackend()

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        self.n_features_in_ = X.shape[1]
        y_idx = np.searchsorted(self.classes_, y)

        dims = (X.shape[1], *map(int, self.hidden_layer_sizes), len(self.classes_))
        topology = Topology(dims, self.activation)
        train_ds = Dataset(X.T.astype(np.float64), y_idx, "train")
        test_ds = None
        if self.validation_set is not None:
            Xv, yv = self.validation_set
            Xv = check_array(Xv)
            test_ds = Dataset(Xv.T.astype(np.float64),
                              np.searchsorted(self.classes_, yv), "test")

        kind = TrainerKind(self.algorithm)
        self.backend_ = self._make_backend()
        mlp = xavier_init(topology, derive_rng(self.seed, "init"))
        bank = None
        if kind is TrainerKind.DFA:
            bank = FeedbackBank.create(topology, derive_rng(self.seed, "feedback"))
        self.mlp_, self.history_, self.bank_ = train(
            mlp, (train_ds, test_ds), self._hyperparams(), kind, self.backend_, bank=bank)
        self.diverged_ = self.history_.diverged
        return self

    def decision_function(self, X):
        check_is_fitted(self, "mlp_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        hp = self._hyperparams()
        trace = forward(self.mlp_, X.T.astype(np.float64), self.backend_,
                        activation_quantizer=hp.activation_quantizer)
        return trace.logits.T

    def predict_proba(self, X):
        return softmax(self.decision_function(X).T).T

    def predict(self, X):
        logits = self.decision_function(X)
        return self.classes_[np.argmax(logits, axis=1)]
