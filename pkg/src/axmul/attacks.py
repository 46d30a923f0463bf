"""FGSM / PGD crafting and the distortion and confidence measures."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .nn.layers import backward_input_grad


class Method(enum.Enum):
    FGSM = "fgsm"
    PGD = "pgd"


@dataclass(frozen=True)
class AttackConfig:
    method: Method = Method.FGSM
    epsilon: float = 0.2
    alpha: float = 0.05
    iterations: int = 10
    clip_min: float = 0.0
    clip_max: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if not 0 <= self.epsilon <= 1:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.method is Method.PGD:
            if not 0 <= self.alpha <= self.epsilon:
                raise ValueError(f"need 0 <= alpha <= epsilon, got alpha={self.alpha}, epsilon={self.epsilon}")
            if self.iterations < 1:
                raise ValueError("PGD needs at least one iteration")
        if self.clip_min >= self.clip_max:
            raise ValueError("empty clip range")

    def to_dict(self) -> dict:
        d = {"method": self.method.value, "epsilon": self.epsilon}
        if self.method is Method.PGD:
            d.update(alpha=self.alpha, iterations=self.iterations)
        d.update(clip=[self.clip_min, self.clip_max])
        return d


class InfinitePSNR(ValueError):
    """Raised by :func:`psnr` when the two images are identical."""


def fgsm(model, weights, x, label, epsilon, clip=(0.0, 1.0)):
    """One signed-gradient step of size ``epsilon``, clipped to the valid range."""
    x = np.asarray(x, dtype=np.float32)
    if epsilon == 0:
        return x.copy()
    g = backward_input_grad(model, weights, x, label)
    eps = np.float32(epsilon)
    return np.clip(x + eps * np.sign(g).astype(np.float32), clip[0], clip[1]).astype(np.float32)


def pgd(model, weights, x, label, epsilon, alpha, iters, clip=(0.0, 1.0)):
    """Iterated signed-gradient steps, each projected onto the L-inf ball and clip range."""
    x = np.asarray(x, dtype=np.float32)
    eps = np.float32(epsilon)
    step = np.float32(alpha)
    lo = np.maximum(x - eps, np.float32(clip[0]))
    hi = np.minimum(x + eps, np.float32(clip[1]))
    adv = x.copy()
    for _ in range(iters):
        g = backward_input_grad(model, weights, adv, label)
        adv = np.clip(adv + step * np.sign(g).astype(np.float32), lo, hi).astype(np.float32)
    return adv


def craft(model, weights, x, label, cfg: AttackConfig):
    clip = (cfg.clip_min, cfg.clip_max)
    if cfg.method is Method.FGSM:
        return fgsm(model, weights, x, label, cfg.epsilon, clip)
    return pgd(model, weights, x, label, cfg.epsilon, cfg.alpha, cfg.iterations, clip)


def _pair(x, x_star):
    x = np.asarray(x, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    if x.shape != x_star.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_star.shape}")
    return x, x_star


def lp_distance(x, x_star, p) -> float:
    """L0 (changed elements), L2 (Euclidean) or L-inf (max abs) distance."""
    x, x_star = _pair(x, x_star)
    d = (x_star - x).ravel()
    if p == 0:
        return float(np.count_nonzero(d))
    if p == 2:
        return float(np.sqrt(np.dot(d, d)))
    if p in (np.inf, "inf"):
        return float(np.max(np.abs(d))) if d.size else 0.0
    raise ValueError(f"unsupported norm p={p}; use 0, 2 or inf")


def mse(x, x_star) -> float:
    x, x_star = _pair(x, x_star)
    return float(np.mean((x_star - x) ** 2))


def psnr(x, x_star, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB: 20 log10(MAX / sqrt(MSE))."""
    err = mse(x, x_star)
    if err == 0:
        raise InfinitePSNR("identical images: PSNR is infinite")
    return 20.0 * math.log10(max_value / math.sqrt(err))


def confidence(probs, label) -> float:
    """True-class probability minus the best other-class probability."""
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} outside 0..{probs.shape[-1] - 1}")
    others = np.delete(probs, label)
    return float(probs[label] - others.max())


def confidences(probs, labels) -> np.ndarray:
    """Vectorized :func:`confidence` over rows of ``probs``."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    idx = np.arange(len(labels))
    true = probs[idx, labels]
    rest = probs.copy()
    rest[idx, labels] = -np.inf
    return true - rest.max(axis=1)
