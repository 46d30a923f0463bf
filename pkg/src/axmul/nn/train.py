from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import backward, cross_entropy, forward_cached
from .model import ModelSpec


@dataclass(frozen=True)
class SGDConfig:
    lr: float = 0.05
    epochs: int = 5
    batch: int = 32
    seed: int = 0


def init_weights(model: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    """He-uniform weights, zero biases, drawn in parameter order from one seeded stream."""
    rng = np.random.default_rng(seed)
    out = {}
    for name, shape in model.param_shapes().items():
        if name.endswith(".bias"):
            out[name] = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            out[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return out


def loss_and_grads(model: ModelSpec, weights: dict, x, labels):
    logits, caches = forward_cached(model, weights, x)
    loss, g = cross_entropy(logits, labels)
    _, grads = backward(model, weights, caches, g)
    return loss, grads


def train_sgd(model: ModelSpec, images, labels, hyper: SGDConfig, weights: dict | None = None,
              log=None) -> dict[str, np.ndarray]:
    """Minibatch SGD on the mean cross-entropy, exact float32 arithmetic.

    Deterministic for a given seed: the initial weights (when not given) and
    the per-epoch shuffles come from the same seeded generator.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    if len(images) == 0:
        raise ValueError("empty training set")
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    rng = np.random.default_rng([hyper.seed, 1])
    if weights is None:
        weights = init_weights(model, hyper.seed)
    weights = {k: np.array(v, dtype=np.float32) for k, v in weights.items()}
    lr = np.float32(hyper.lr)
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(images))
        total = 0.0
        for lo in range(0, len(order), hyper.batch):
            idx = order[lo:lo + hyper.batch]
            loss, grads = loss_and_grads(model, weights, images[idx], labels[idx])
            total += float(loss)
            scale = lr / np.float32(len(idx))
            for name, g in grads.items():
                weights[name] -= (scale * g).astype(np.float32)
        if log is not None:
            log(f"epoch {epoch + 1}/{hyper.epochs} mean loss {total / len(images):.4f}")
    return weights
