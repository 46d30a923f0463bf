from .archive import ArchiveError, load_tensors, load_weights, save_tensors, save_weights
from .idx import IdxError, load_idx_images, load_idx_labels, load_mnist
from .layers import (
    ApproxScope,
    backward_input_grad,
    conv2d_forward,
    dense_forward,
    forward,
    maxpool2d,
    predict,
    relu,
    softmax,
)
from .model import ModelSpec, ModelSpecError, lenet5
from .train import SGDConfig, init_weights, train_sgd

__all__ = [
    "ApproxScope",
    "ArchiveError",
    "IdxError",
    "ModelSpec",
    "ModelSpecError",
    "SGDConfig",
    "backward_input_grad",
    "conv2d_forward",
    "dense_forward",
    "forward",
    "init_weights",
    "lenet5",
    "load_idx_images",
    "load_idx_labels",
    "load_mnist",
    "load_tensors",
    "load_weights",
    "maxpool2d",
    "predict",
    "relu",
    "save_tensors",
    "save_weights",
    "softmax",
    "train_sgd",
]
