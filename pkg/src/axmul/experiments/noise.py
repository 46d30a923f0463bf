"""Multiplier noise characterization and MRED / NMED error metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..floatmul import MultiplierConfig, multiply, reference_multiply
from .report import EvalReport
from .sampling import map_chunks, operand_pairs

CHUNK = 1 << 16


def _noise_chunk(lo, hi, cfg, lo_val, hi_val, seed):
    x, y = operand_pairs(seed, lo, hi - lo, lo_val, hi_val)
    exact = reference_multiply(x, y)
    approx = multiply(x, y, cfg)
    return x, y, np.asarray(exact), np.asarray(approx)


def sample_products(cfg: MultiplierConfig, n: int, lo: float, hi: float, seed: int, workers: int = 1):
    """Seeded operand pairs with their exact and configured products."""
    if n <= 0:
        raise ValueError("need at least one sample")
    if not lo < hi:
        raise ValueError(f"empty range [{lo}, {hi}]")
    parts = map_chunks(_noise_chunk, n, CHUNK, workers, (cfg, lo, hi, seed))
    return tuple(np.concatenate(cols) for cols in zip(*parts))


def noise_summary(exact, approx) -> dict:
    """Trend statistics of the signed error approx - exact."""
    exact = np.asarray(exact, dtype=np.float32)
    approx = np.asarray(approx, dtype=np.float32)
    err = approx.astype(np.float64) - exact.astype(np.float64)
    abs_err = np.abs(err)
    mag = np.abs(exact.astype(np.float64))
    pos = exact > 0
    neg = exact < 0
    order = np.argsort(mag, kind="stable")
    deciles = [float(chunk.mean()) for chunk in np.array_split(abs_err[order], 10)]
    return {
        "n": int(exact.size),
        "inflation_fraction": float(np.mean(np.abs(approx) >= np.abs(exact))),
        "positive_product_higher_fraction": float(np.mean(approx[pos] > exact[pos])) if pos.any() else None,
        "negative_product_lower_fraction": float(np.mean(approx[neg] < exact[neg])) if neg.any() else None,
        "negative_error_fraction": float(np.mean(err < 0)),
        "positive_error_fraction": float(np.mean(err > 0)),
        "zero_error_fraction": float(np.mean(err == 0)),
        "mean_abs_error": float(abs_err.mean()),
        "median_abs_error": float(np.median(abs_err)),
        "max_abs_error": float(abs_err.max()),
        "decile_mean_abs_error": deciles,
    }


def characterize_noise(cfg: MultiplierConfig, n: int, lo: float, hi: float, seed: int,
                       workers: int = 1) -> EvalReport:
    x, y, exact, approx = sample_products(cfg, n, lo, hi, seed, workers)
    error = approx.astype(np.float64) - exact.astype(np.float64)
    return EvalReport(
        experiment="noise",
        seed=seed,
        config={"multiplier": cfg.to_dict(), "samples": n, "range": [lo, hi]},
        table={"index": np.arange(n), "x": x, "y": y, "exact": exact, "approx": approx, "error": error},
        summary=noise_summary(exact, approx),
        reference={"inflation_fraction": 0.96},
    )


@dataclass(frozen=True)
class ErrorMetrics:
    mred: float
    nmed: float
    n: int
    p_max: float
    zero_products: int

    def to_dict(self) -> dict:
        return {"mred": self.mred, "nmed": self.nmed, "n": self.n, "p_max": self.p_max,
                "zero_products": self.zero_products}


def compute_error_metrics(exact, approx, p_max: float) -> ErrorMetrics:
    """MRED over nonzero exact products; NMED over all samples, normalized by p_max."""
    y = np.asarray(exact, dtype=np.float64)
    y_hat = np.asarray(approx, dtype=np.float64)
    if y.size == 0:
        raise ValueError("no samples")
    nonzero = y != 0
    if not nonzero.any():
        raise ValueError("all exact products are zero; MRED undefined")
    dist = np.abs(y_hat - y)
    mred = float(np.mean(dist[nonzero] / np.abs(y[nonzero])))
    nmed = float(np.mean(dist) / p_max)
    return ErrorMetrics(mred, nmed, int(y.size), float(p_max), int((~nonzero).sum()))


def error_metrics(cfg: MultiplierConfig, n: int, lo: float, hi: float, seed: int,
                  workers: int = 1) -> ErrorMetrics:
    _, _, exact, approx = sample_products(cfg, n, lo, hi, seed, workers)
    # largest |x * y| attainable over the sampled square
    p_max = max(abs(lo), abs(hi)) ** 2
    return compute_error_metrics(exact, approx, p_max)


def error_metrics_report(cfg: MultiplierConfig, n: int, lo: float, hi: float, seed: int,
                         workers: int = 1) -> EvalReport:
    m = error_metrics(cfg, n, lo, hi, seed, workers)
    return EvalReport(
        experiment="metrics",
        seed=seed,
        config={"multiplier": cfg.to_dict(), "samples": n, "range": [lo, hi]},
        summary=m.to_dict(),
        reference={"ama5": {"mred": 0.33, "nmed": 0.08}},
    )
