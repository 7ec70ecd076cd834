"""Polynomial Kolmogorov-Arnold autoencoders and baselines, in numpy."""

from .estimator import KAEAutoencoder, LatentNearestNeighbor
from .layers import LayerParams, LayerSpec, backward, count_parameters, forward, init_layer
from .model import Autoencoder, AutoencoderConfig, build, load_checkpoint, mse, save_checkpoint
from .ndcore import RngStream

__version__ = "0.1.0"

__all__ = [
    "Autoencoder",
    "AutoencoderConfig",
    "KAEAutoencoder",
    "LatentNearestNeighbor",
    "LayerParams",
    "LayerSpec",
    "RngStream",
    "backward",
    "build",
    "count_parameters",
    "forward",
    "init_layer",
    "load_checkpoint",
    "mse",
    "save_checkpoint",
]
