"""scikit-learn compatible wrappers.

``KAEAutoencoder`` trains one autoencoder and exposes it as a transformer
(``transform`` gives latent codes, ``inverse_transform`` decodes them), so it
drops into a ``Pipeline`` ahead of any estimator::

    pipe = make_pipeline(KAEAutoencoder(order=3), LatentNearestNeighbor())
    pipe.fit(X_train, y_train).score(X_test, y_test)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .metrics import knn_classify
from .model import AutoencoderConfig, build
from .optim import Adam
from .train import fit as train_model
from .train import reconstruction_mse

__all__ = ["KAEAutoencoder", "LatentNearestNeighbor"]


class KAEAutoencoder(TransformerMixin, BaseEstimator):
    """Shallow autoencoder with a selectable layer family.

    Parameters
    ----------
    family : {"kae", "ae", "kan", "fourierkan", "wavkan"}
        Layer family for both encoder and decoder. ``"kae"`` is the
        polynomial layer, ``"ae"`` the affine sigmoid layer.
    order : int
        Polynomial order (``family="kae"`` only).
    n_components : int
        Latent width.
    epochs, batch_size, learning_rate, weight_decay
        Adam training settings; weight decay is the coupled L2 form.
    random_state : int
        Master seed. Initialization and shuffling draw from separate streams
        derived from it.
    latent_sigmoid : bool
        Squash the latent code through a sigmoid. Off by default.
    """

    def __init__(self, family="kae", order=3, n_components=16, epochs=10, batch_size=256,
                 learning_rate=1e-4, weight_decay=1e-4, random_state=2024, latent_sigmoid=False,
                 poly_init="linear", grid_size=5, spline_order=3):
        self.family = family
        self.order = order
        self.n_components = n_components
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.random_state = random_state
        self.latent_sigmoid = latent_sigmoid
        self.poly_init = poly_init
        self.grid_size = grid_size
        self.spline_order = spline_order

    def _config(self, d_input: int) -> AutoencoderConfig:
        return AutoencoderConfig(
            d_input=d_input,
            d_latent=self.n_components,
            family=self.family,
            order_p=self.order,
            grid_size=self.grid_size,
            spline_order=self.spline_order,
            latent_sigmoid=self.latent_sigmoid,
            poly_init=self.poly_init,
            master_seed=int(self.random_state),
        )

    def fit(self, X, y=None, X_val=None, callback=None):
        """Train on ``X``; ``X_val`` (if given) is scored after every epoch."""
        X = check_array(X, dtype=np.float64)
        if X_val is not None:
            X_val = check_array(X_val, dtype=np.float64)
            if X_val.shape[1] != X.shape[1]:
                raise ValueError(f"X_val has {X_val.shape[1]} features, X has {X.shape[1]}")
        self.n_features_in_ = X.shape[1]
        self.model_ = build(self._config(X.shape[1]))
        self.optimizer_ = Adam(self.model_, lr=self.learning_rate, weight_decay=self.weight_decay)
        self.loss_curve_ = train_model(
            self.model_, X, epochs=self.epochs, batch_size=self.batch_size,
            seed=int(self.random_state), X_test=X_val, optimizer=self.optimizer_, callback=callback)
        return self

    def _validate(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, estimator was fitted with {self.n_features_in_}")
        return X

    def transform(self, X):
        X = self._validate(X)
        return self.model_.encode(X)

    def inverse_transform(self, Z):
        check_is_fitted(self, "model_")
        return self.model_.decode(check_array(Z, dtype=np.float64))

    def predict(self, X):
        """Reconstruction of ``X``."""
        X = self._validate(X)
        return self.model_.reconstruct(X)

    def reconstruction_error(self, X) -> float:
        X = self._validate(X)
        return reconstruction_mse(self.model_, X)

    def score(self, X, y=None) -> float:
        """Negative reconstruction MSE (greater is better)."""
        return -self.reconstruction_error(X)

    def n_parameters(self) -> int:
        check_is_fitted(self, "model_")
        return self.model_.n_parameters()


class LatentNearestNeighbor(ClassifierMixin, BaseEstimator):
    """Exact 1-nearest-neighbour classifier (ties go to the lowest training index)."""

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.unique(y)
        self.database_ = X
        self.labels_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "database_")
        X = check_array(X, dtype=np.float64)
        return knn_classify(self.database_, self.labels_, X)
