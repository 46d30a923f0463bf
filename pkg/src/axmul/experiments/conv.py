from __future__ import annotations

import numpy as np

from ..floatmul import NATIVE, MultiplierConfig
from ..nn.layers import conv2d_forward
from .report import EvalReport


def default_kernel() -> np.ndarray:
    """5x5 vertical-stroke detector: graded positive weights on the middle three columns."""
    k = np.zeros((5, 5), dtype=np.float32)
    rows = np.array([0.35, 0.6, 0.9, 0.6, 0.35], dtype=np.float32)
    k[:, 1] = 0.5 * rows
    k[:, 2] = rows
    k[:, 3] = 0.5 * rows
    return k


def default_patches(kernel: np.ndarray, count: int = 6) -> np.ndarray:
    """Patches blending from a zero-overlap pattern (t = 0) to the kernel itself (t = 1)."""
    kernel = np.asarray(kernel, dtype=np.float32)
    off = (kernel == 0).astype(np.float32)
    k_unit = kernel / np.linalg.norm(kernel)
    off_unit = off / np.linalg.norm(off)
    ts = np.linspace(0.0, 1.0, count)
    patches = [t * k_unit + (1 - t) * off_unit for t in ts]
    return np.stack(patches).astype(np.float32)


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def conv_similarity_experiment(kernel, patches, mul: MultiplierConfig) -> EvalReport:
    """Exact vs configured convolution of one kernel over patches ranked by similarity."""
    kernel = np.asarray(kernel, dtype=np.float32)
    patches = np.asarray(patches, dtype=np.float32)
    if patches.shape[1:] != kernel.shape:
        raise ValueError(f"patch shape {patches.shape[1:]} != kernel shape {kernel.shape}")
    sims = np.array([cosine_similarity(p, kernel) for p in patches])
    order = np.argsort(sims, kind="stable")
    k4 = kernel[None, None]
    bias = np.zeros(1, dtype=np.float32)
    x = patches[order][:, None]
    exact = conv2d_forward(x, k4, bias, mul=NATIVE).reshape(-1)
    approx = conv2d_forward(x, k4, bias, mul=mul).reshape(-1)
    gap = approx.astype(np.float64) - exact.astype(np.float64)
    steps = np.diff(gap)
    return EvalReport(
        experiment="conv-similarity",
        seed=None,
        config={"multiplier": mul.to_dict(), "kernel_shape": list(kernel.shape), "patches": len(patches)},
        table={
            "rank": np.arange(1, len(patches) + 1),
            "patch": order,
            "similarity": sims[order],
            "exact": exact,
            "approx": approx,
            "gap": gap,
        },
        summary={
            "approx_ge_exact": int(np.sum(approx >= exact)),
            # the lowest-ranked row counts as in order
            "gap_nondecreasing_rows": int(np.sum(steps >= 0)) + 1,
            "patches": len(patches),
        },
    )
