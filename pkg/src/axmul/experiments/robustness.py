"""Robustness experiments that score a trained model under each multiplier backend."""

from __future__ import annotations

import numpy as np

from ..attacks import AttackConfig, Method, confidences, craft, lp_distance, mse, psnr
from ..floatmul import NATIVE, MultiplierConfig
from ..nn.layers import ApproxScope, forward
from .report import EvalReport
from .sampling import map_chunks

# Fixed batch grid for per-sample work; results never depend on worker count.
BATCH = 16
CDF_GRID = np.round(np.arange(0, 21) * 0.05, 2)
DEFAULT_SCHEDULE = tuple(round(0.02 * k, 2) for k in range(1, 26))


def _probs_chunk(lo, hi, model, weights, images, mul, scope):
    return forward(model, weights, images[lo:hi], mul, scope)


def batch_probs(model, weights, images, mul: MultiplierConfig = NATIVE,
                scope=ApproxScope.CONV_ONLY, workers: int = 1) -> np.ndarray:
    images = np.asarray(images, dtype=np.float32)
    if len(images) == 0:
        return np.zeros((0, model.num_classes), dtype=np.float32)
    parts = map_chunks(_probs_chunk, len(images), BATCH, workers, (model, weights, images, mul, scope))
    return np.concatenate(parts)


def accuracy_report(model, weights, images, labels, muls, scope=ApproxScope.CONV_ONLY,
                    workers: int = 1) -> EvalReport:
    labels = np.asarray(labels)
    table = {"index": np.arange(len(labels)), "label": labels}
    summary = {}
    for mul in muls:
        pred = batch_probs(model, weights, images, mul, scope, workers).argmax(axis=1)
        table[f"pred_{mul.name}"] = pred
        summary[mul.name] = {"accuracy": float(np.mean(pred == labels)), "correct": int(np.sum(pred == labels))}
    return EvalReport(
        experiment="accuracy",
        seed=None,
        config={"multipliers": [m.to_dict() for m in muls], "scope": ApproxScope(scope).value,
                "samples": int(len(labels))},
        table=table,
        summary=summary,
        reference={"lenet5_mnist_accuracy": {"exact": 0.9793, "ama5": 0.9767}},
    )


def cdf_at(values, grid=CDF_GRID) -> np.ndarray:
    """Empirical CDF: fraction of values <= each grid point."""
    values = np.sort(np.asarray(values, dtype=np.float64))
    if values.size == 0:
        return np.zeros(len(grid))
    return np.searchsorted(values, grid, side="right") / values.size


def confidence_cdf(model, weights, images, labels, muls, scope=ApproxScope.CONV_ONLY,
                   workers: int = 1, threshold: float = 0.8) -> EvalReport:
    """Confidence distribution per backend over samples every backend classifies correctly."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty dataset")
    probs = {m.name: batch_probs(model, weights, images, m, scope, workers) for m in muls}
    correct = np.ones(len(labels), dtype=bool)
    for p in probs.values():
        correct &= p.argmax(axis=1) == labels
    table = {"confidence": CDF_GRID}
    summary = {"samples": int(len(labels)), "common_correct": int(correct.sum()), "threshold": threshold}
    for name, p in probs.items():
        conf = confidences(p, labels)[correct]
        table[f"cdf_{name}"] = cdf_at(conf)
        summary[name] = {
            "correct": int(np.sum(p.argmax(axis=1) == labels)),
            "fraction_at_or_above_threshold": float(np.mean(conf >= threshold)) if conf.size else 0.0,
            "mean_confidence": float(conf.mean()) if conf.size else 0.0,
        }
    return EvalReport(
        experiment="confidence",
        seed=None,
        config={"multipliers": [m.to_dict() for m in muls], "scope": ApproxScope(scope).value},
        table=table,
        summary=summary,
        reference={"fraction_at_or_above_0.8": {"exact": "< 0.20", "ama5": 0.745}},
    )


def _craft_chunk(lo, hi, model, weights, images, labels, cfg):
    return craft(model, weights, images[lo:hi], labels[lo:hi], cfg)


def craft_set(model, weights, images, labels, cfg: AttackConfig, workers: int = 1) -> np.ndarray:
    """Adversarial counterparts of ``images`` crafted on the exact model."""
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    if len(images) == 0:
        return images.copy()
    parts = map_chunks(_craft_chunk, len(images), BATCH, workers, (model, weights, images, labels, cfg))
    return np.concatenate(parts)


def select_correct(model, weights, images, labels, count: int, muls=(NATIVE,),
                   scope=ApproxScope.CONV_ONLY, workers: int = 1) -> np.ndarray:
    """Indices of the first ``count`` samples every given backend classifies correctly."""
    labels = np.asarray(labels)
    chosen = []
    lo = 0
    step = max(count, BATCH)
    while len(chosen) < count and lo < len(labels):
        hi = min(lo + step, len(labels))
        ok = np.ones(hi - lo, dtype=bool)
        for m in muls:
            ok &= batch_probs(model, weights, images[lo:hi], m, scope, workers).argmax(axis=1) == labels[lo:hi]
        chosen.extend((lo + np.flatnonzero(ok)).tolist())
        lo = hi
    return np.array(chosen[:count], dtype=np.int64)


def transferability_eval(model, weights, x, x_star, labels, muls, scope=ApproxScope.CONV_ONLY,
                         workers: int = 1, attack: dict | None = None) -> EvalReport:
    """Success rate of exact-model adversarial examples on each backend.

    The transfer set is every sample the exact model classifies correctly
    on the clean input and wrongly on the adversarial one.  Per backend,
    success is counted over transfer-set samples that backend classifies
    correctly when clean.
    """
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty adversarial set")
    exact_clean = batch_probs(model, weights, x, NATIVE, scope, workers).argmax(axis=1)
    exact_adv = batch_probs(model, weights, x_star, NATIVE, scope, workers).argmax(axis=1)
    fooled = (exact_clean == labels) & (exact_adv != labels)
    table = {"index": np.arange(len(labels)), "label": labels, "exact_fooled": fooled}
    summary = {"samples": int(len(labels)), "exact_correct": int(np.sum(exact_clean == labels)),
               "transfer_set": int(fooled.sum())}
    for m in muls:
        if m.backend is NATIVE.backend:
            clean, adv = exact_clean, exact_adv
        else:
            clean = batch_probs(model, weights, x, m, scope, workers).argmax(axis=1)
            adv = batch_probs(model, weights, x_star, m, scope, workers).argmax(axis=1)
        eligible = fooled & (clean == labels)
        success = eligible & (adv != labels)
        table[f"clean_{m.name}"] = clean
        table[f"adv_{m.name}"] = adv
        summary[m.name] = {
            "eligible": int(eligible.sum()),
            "fooled": int(success.sum()),
            "success_rate": float(success.sum() / eligible.sum()) if eligible.any() else None,
        }
    return EvalReport(
        experiment="transfer",
        seed=None,
        config={"multipliers": [m.to_dict() for m in muls], "scope": ApproxScope(scope).value,
                "attack": attack or {}},
        table=table,
        summary=summary,
        reference={"success_rate": {"fgsm": {"exact": 1.0, "ama5": 0.12}, "pgd": {"exact": 1.0, "ama5": 0.28}}},
    )


def _whitebox_chunk(lo, hi, model, weights, images, labels, muls, scope, schedule, alpha_ratio, iters):
    x = images[lo:hi]
    y = labels[lo:hi]
    n = hi - lo
    first = {m.name: np.full(n, -1, dtype=np.int64) for m in muls}
    adv_at = {m.name: np.zeros_like(x) for m in muls}
    for step, eps in enumerate(schedule):
        pending = {m.name: first[m.name] < 0 for m in muls}
        if not any(p.any() for p in pending.values()):
            break
        cfg = AttackConfig(Method.PGD, eps, alpha_ratio * eps, iters)
        x_star = craft(model, weights, x, y, cfg)
        for m in muls:
            todo = np.flatnonzero(pending[m.name])
            if todo.size == 0:
                continue
            pred = forward(model, weights, x_star[todo], m, scope).argmax(axis=1)
            hit = todo[pred != y[todo]]
            first[m.name][hit] = step
            adv_at[m.name][hit] = x_star[hit]
    return first, adv_at


def whitebox_distortion_report(model, weights, images, labels, muls, schedule=DEFAULT_SCHEDULE,
                               alpha_ratio: float = 0.25, iters: int = 10,
                               scope=ApproxScope.CONV_ONLY, workers: int = 1) -> EvalReport:
    """Smallest scheduled PGD budget that fools each backend, with its distortion.

    Perturbations come from exact-model gradients; each backend only decides
    whether the perturbed input is misclassified.  Samples never fooled
    within the schedule are flagged and their distortion reported as inf.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("empty dataset")
    schedule = tuple(float(e) for e in schedule)
    if list(schedule) != sorted(schedule) or not schedule:
        raise ValueError("epsilon schedule must be non-empty and increasing")
    parts = map_chunks(_whitebox_chunk, len(labels), BATCH, workers,
                       (model, weights, images, labels, muls, scope, schedule, alpha_ratio, iters))

    names = [m.name for m in muls]
    cols = {k: [] for k in ("backend", "index", "label", "fooled", "epsilon", "l2", "linf", "mse", "psnr")}
    summary = {"samples": int(len(labels)), "schedule": list(schedule), "alpha_ratio": alpha_ratio,
               "iterations": iters}
    for name in names:
        first = np.concatenate([p[0][name] for p in parts])
        adv = np.concatenate([p[1][name] for p in parts])
        l2s = []
        for i in range(len(labels)):
            ok = first[i] >= 0
            if ok:
                l2 = lp_distance(images[i], adv[i], 2)
                linf = lp_distance(images[i], adv[i], np.inf)
                err = mse(images[i], adv[i])
                db = psnr(images[i], adv[i], 1.0)
                eps = schedule[first[i]]
            else:
                l2 = linf = err = float("inf")
                db = float("nan")
                eps = float("nan")
            l2s.append(l2)
            for key, val in (("backend", name), ("index", i), ("label", int(labels[i])), ("fooled", ok),
                             ("epsilon", eps), ("l2", l2), ("linf", linf), ("mse", err), ("psnr", db)):
                cols[key].append(val)
        l2s = np.array(l2s)
        fooled = np.isfinite(l2s)
        summary[name] = {
            "fooled": int(fooled.sum()),
            "median_l2": float(np.median(l2s)),
            "median_l2_fooled_only": float(np.median(l2s[fooled])) if fooled.any() else None,
            "mean_l2_fooled_only": float(l2s[fooled].mean()) if fooled.any() else None,
        }
    table = {
        "backend": np.array(cols["backend"]),
        "index": np.array(cols["index"], dtype=np.int64),
        "label": np.array(cols["label"], dtype=np.int64),
        "fooled": np.array(cols["fooled"], dtype=bool),
        **{k: np.array(cols[k], dtype=np.float64) for k in ("epsilon", "l2", "linf", "mse", "psnr")},
    }
    return EvalReport(
        experiment="whitebox",
        seed=None,
        config={"multipliers": [m.to_dict() for m in muls], "scope": ApproxScope(scope).value,
                "attack": "pgd"},
        table=table,
        summary=summary,
    )
