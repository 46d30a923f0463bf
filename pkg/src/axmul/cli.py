"""Command-line entry point: ``axmul <group> <command> [flags]``.

Errors are reported as one JSON line on stderr with a distinct exit code:
2 usage, 3 missing file, 4 invalid input or failed invariant, 1 internal.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, Method
from .floatmul import NATIVE, Backend, MultiplierConfig
from .nn import archive
from .nn.idx import load_mnist
from .nn.layers import ApproxScope
from .nn.model import ModelSpec, lenet5
from .nn.train import SGDConfig, train_sgd

log = logging.getLogger("axmul")

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_INVALID = 4
EXIT_INTERNAL = 1


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int):
        super().__init__(message)
        self.code = code
        self.status = status


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{self.prog}: {message}", EXIT_USAGE)


def _fmt():
    return argparse.ArgumentDefaultsHelpFormatter


# -- argument helpers -----------------------------------------------------------

def _add_backend(p, default="ama5"):
    p.add_argument("--backend", default=default, choices=[b.value for b in Backend],
                   help="scalar multiplier: exact (platform IEEE), exact-fpm, ama5 or bf16")
    p.add_argument("--roles", default="pp,sum,carry",
                   help="array cell wiring: signals driving adder ports A,B,Cin")


def _add_backends(p, default="exact,ama5"):
    p.add_argument("--backends", default=default,
                   help="comma-separated multiplier backends to compare")
    p.add_argument("--roles", default="pp,sum,carry",
                   help="array cell wiring for ama5: signals driving adder ports A,B,Cin")


def _add_scope(p):
    p.add_argument("--scope", default="conv", choices=[s.value for s in ApproxScope],
                   help="layers whose multiplies use the backend: conv only, or all")


def _add_model(p, weights=True):
    p.add_argument("--model", type=Path, default=None,
                   help="model JSON (default: built-in LeNet-5 for 28x28 digits)")
    if weights:
        p.add_argument("--weights", type=Path, required=True, help="AXTF weight archive")


def _add_common(p, seed_required=False):
    p.add_argument("--seed", type=int, default=None,
                   help="run seed (falls back to $AXM_SEED)" + ("; required" if seed_required else ""))
    p.add_argument("--workers", type=int, default=1, help="worker processes; output does not depend on it")
    p.add_argument("--out", type=Path, required=True, help="output path (file, or directory for default names)")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG rendered next to the report")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="axmul", description="Approximate multiplier emulation and robustness experiments.",
                     formatter_class=_fmt())
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    mul = groups.add_parser("mul", help="multiplier noise experiments").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    for name, helptext in (("characterize", "per-sample noise table and trend summary"),
                           ("metrics", "MRED / NMED error metrics")):
        p = mul.add_parser(name, help=helptext, formatter_class=_fmt())
        _add_backend(p)
        p.add_argument("--samples", type=int, default=1_000_000, help="number of operand pairs")
        p.add_argument("--range", type=float, nargs=2, default=[0.0, 1.0], metavar=("LO", "HI"),
                       help="operands drawn uniformly from [LO, HI]^2 (unitless)")
        _add_common(p, seed_required=True)
        p.set_defaults(func=cmd_mul_characterize if name == "characterize" else cmd_mul_metrics)

    nn = groups.add_parser("nn", help="train and evaluate the CNN").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    p = nn.add_parser("train", help="SGD training with exact arithmetic", formatter_class=_fmt())
    _add_model(p, weights=False)
    p.add_argument("--data", type=Path, required=True, help="directory with MNIST IDX files")
    p.add_argument("--epochs", type=int, default=5, help="passes over the training set")
    p.add_argument("--lr", type=float, default=0.05, help="SGD learning rate")
    p.add_argument("--batch", type=int, default=32, help="minibatch size (samples)")
    p.add_argument("--train-samples", type=int, default=None, help="use only the first N training samples")
    _add_common(p, seed_required=True)
    p.set_defaults(func=cmd_nn_train)

    p = nn.add_parser("eval", help="test accuracy per backend", formatter_class=_fmt())
    _add_model(p)
    p.add_argument("--data", type=Path, required=True, help="directory with MNIST IDX files")
    _add_backends(p)
    _add_scope(p)
    p.add_argument("--samples", type=int, default=None, help="first N test samples (default: all)")
    _add_common(p)
    p.set_defaults(func=cmd_nn_eval)

    conv = groups.add_parser("conv", help="convolution experiments").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    p = conv.add_parser("similarity", help="exact vs approximate conv over patches ranked by similarity",
                        formatter_class=_fmt())
    _add_backend(p)
    p.add_argument("--input", type=Path, default=None,
                   help="AXTF archive with 'kernel' (Kh x Kw) and 'patches' (P x Kh x Kw); default built-in")
    _add_common(p)
    p.set_defaults(func=cmd_conv_similarity)

    attack = groups.add_parser("attack", help="adversarial examples").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    p = attack.add_parser("craft", help="craft FGSM/PGD examples against the exact model", formatter_class=_fmt())
    _add_model(p)
    p.add_argument("--data", type=Path, required=True, help="directory with MNIST IDX files")
    p.add_argument("--method", default="fgsm", choices=[m.value for m in Method], help="attack")
    p.add_argument("--epsilon", type=float, default=0.2, help="L-inf budget (pixel units in [0, 1])")
    p.add_argument("--alpha", type=float, default=0.05, help="PGD step size (pixel units)")
    p.add_argument("--iters", type=int, default=10, help="PGD iterations")
    p.add_argument("--samples", type=int, default=100, help="correctly classified test samples to attack")
    _add_common(p)
    p.set_defaults(func=cmd_attack_craft)

    p = attack.add_parser("transfer", help="success rate of a crafted set per backend", formatter_class=_fmt())
    _add_model(p)
    p.add_argument("--adv", type=Path, required=True, help="AXTF archive from 'attack craft'")
    _add_backend(p)
    _add_scope(p)
    _add_common(p)
    p.set_defaults(func=cmd_attack_transfer)

    report = groups.add_parser("report", help="robustness reports").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    p = report.add_parser("confidence", help="confidence CDF per backend", formatter_class=_fmt())
    _add_model(p)
    p.add_argument("--data", type=Path, required=True, help="directory with MNIST IDX files")
    _add_backends(p)
    _add_scope(p)
    p.add_argument("--samples", type=int, default=1000, help="first N test samples")
    p.add_argument("--threshold", type=float, default=0.8, help="confidence threshold reported in the summary")
    _add_common(p)
    p.set_defaults(func=cmd_report_confidence)

    p = report.add_parser("whitebox", help="distortion needed to fool each backend", formatter_class=_fmt())
    _add_model(p)
    p.add_argument("--data", type=Path, required=True, help="directory with MNIST IDX files")
    _add_backends(p)
    _add_scope(p)
    p.add_argument("--samples", type=int, default=50, help="test samples correct under every backend")
    p.add_argument("--schedule", default=None,
                   help="comma-separated increasing L-inf budgets (default 0.02..0.50 step 0.02)")
    p.add_argument("--alpha-ratio", type=float, default=0.25, help="PGD step as a fraction of epsilon")
    p.add_argument("--iters", type=int, default=10, help="PGD iterations per budget")
    _add_common(p)
    p.set_defaults(func=cmd_report_whitebox)
    return parser


# -- shared plumbing -------------------------------------------------------------

def _require_file(path: Path, what: str):
    if path is not None and not path.exists():
        raise CliError("missing_file", f"{what} not found: {path}", EXIT_MISSING)


def _check_out(out: Path):
    parent = out if out.is_dir() else out.parent
    if not parent.exists():
        raise CliError("missing_file", f"output directory does not exist: {parent}", EXIT_MISSING)


def _seed(args, required: bool) -> int | None:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("AXM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise CliError("usage", f"AXM_SEED is not an integer: {env!r}", EXIT_USAGE) from None
    if required:
        raise CliError("usage", "this command needs --seed or AXM_SEED", EXIT_USAGE)
    return None


def _mul(args) -> MultiplierConfig:
    return MultiplierConfig.parse(args.backend, args.roles)


def _muls(args) -> list[MultiplierConfig]:
    names = [n.strip() for n in args.backends.split(",") if n.strip()]
    if not names:
        raise CliError("usage", "--backends is empty", EXIT_USAGE)
    return [MultiplierConfig.parse(n, args.roles) for n in names]


def _model(args) -> ModelSpec:
    if args.model is None:
        return lenet5()
    _require_file(args.model, "model file")
    return ModelSpec.load(args.model)


def _weights(args, model):
    _require_file(args.weights, "weights")
    return archive.load_weights(args.weights, model)


def _data(args, split):
    if not args.data.is_dir():
        raise CliError("missing_file", f"data directory not found: {args.data}", EXIT_MISSING)
    return load_mnist(args.data, split)


def _emit(report, args):
    written = report.write(args.out)
    if not args.no_figure:
        from .experiments.figures import render
        primary = written.get("csv", written["json"])
        fig = render(report, primary.with_suffix(".png"))
        if fig is not None:
            written["figure"] = fig
    for kind, path in written.items():
        log.info("wrote %s %s", kind, path)


# -- commands --------------------------------------------------------------------

def cmd_mul_characterize(args):
    from .experiments.noise import characterize_noise
    seed = _seed(args, required=True)
    lo, hi = args.range
    report = characterize_noise(_mul(args), args.samples, lo, hi, seed, args.workers)
    _emit(report, args)


def cmd_mul_metrics(args):
    from .experiments.noise import error_metrics_report
    seed = _seed(args, required=True)
    lo, hi = args.range
    report = error_metrics_report(_mul(args), args.samples, lo, hi, seed, args.workers)
    _emit(report, args)


def cmd_nn_train(args):
    seed = _seed(args, required=True)
    model = _model(args)
    images, labels = _data(args, "train")
    if args.train_samples is not None:
        images, labels = images[:args.train_samples], labels[:args.train_samples]
    hyper = SGDConfig(lr=args.lr, epochs=args.epochs, batch=args.batch, seed=seed)
    weights = train_sgd(model, images, labels, hyper, log=log.info)
    archive.save_weights(weights, args.out, model)
    log.info("wrote weights %s", args.out)


def cmd_nn_eval(args):
    from .experiments.robustness import accuracy_report
    model = _model(args)
    weights = _weights(args, model)
    images, labels = _data(args, "test")
    if args.samples is not None:
        images, labels = images[:args.samples], labels[:args.samples]
    report = accuracy_report(model, weights, images, labels, _muls(args), args.scope, args.workers)
    report.seed = _seed(args, required=False)
    _emit(report, args)


def cmd_conv_similarity(args):
    from .experiments.conv import conv_similarity_experiment, default_kernel, default_patches
    if args.input is not None:
        _require_file(args.input, "input archive")
        tensors = archive.load_tensors(args.input)
        if "kernel" not in tensors or "patches" not in tensors:
            raise CliError("invalid_input", "input archive needs 'kernel' and 'patches'", EXIT_INVALID)
        kernel, patches = tensors["kernel"], tensors["patches"]
    else:
        kernel = default_kernel()
        patches = default_patches(kernel)
    report = conv_similarity_experiment(kernel, patches, _mul(args))
    report.seed = _seed(args, required=False)
    _emit(report, args)


_METHOD_CODES = {Method.FGSM: 0.0, Method.PGD: 1.0}


def cmd_attack_craft(args):
    from .experiments.robustness import craft_set, select_correct
    model = _model(args)
    weights = _weights(args, model)
    images, labels = _data(args, "test")
    cfg = AttackConfig(Method(args.method), args.epsilon, args.alpha, args.iters)
    idx = select_correct(model, weights, images, labels, args.samples, workers=args.workers)
    x, y = images[idx], labels[idx]
    x_star = craft_set(model, weights, x, y, cfg, args.workers)
    params = np.array([_METHOD_CODES[cfg.method], cfg.epsilon, cfg.alpha, cfg.iterations], dtype=np.float32)
    archive.save_tensors({"x": x, "x_star": x_star, "labels": y.astype(np.float32),
                          "indices": idx.astype(np.float32), "attack": params}, args.out)
    log.info("wrote %d adversarial examples to %s", len(idx), args.out)


def _attack_from_params(params) -> dict:
    code, eps, alpha, iters = (float(v) for v in params)
    method = Method.PGD if code == 1.0 else Method.FGSM
    d = {"method": method.value, "epsilon": round(eps, 6)}
    if method is Method.PGD:
        d.update(alpha=round(alpha, 6), iterations=int(iters))
    return d


def cmd_attack_transfer(args):
    from .experiments.robustness import transferability_eval
    model = _model(args)
    weights = _weights(args, model)
    _require_file(args.adv, "adversarial set")
    tensors = archive.load_tensors(args.adv)
    for key in ("x", "x_star", "labels"):
        if key not in tensors:
            raise CliError("invalid_input", f"adversarial archive lacks tensor {key!r}", EXIT_INVALID)
    labels = tensors["labels"].astype(np.int64)
    mul = _mul(args)
    muls = [NATIVE] if mul.backend is Backend.NATIVE else [NATIVE, mul]
    attack = _attack_from_params(tensors["attack"]) if "attack" in tensors else None
    report = transferability_eval(model, weights, tensors["x"], tensors["x_star"], labels, muls,
                                  args.scope, args.workers, attack)
    report.seed = _seed(args, required=False)
    _emit(report, args)


def cmd_report_confidence(args):
    from .experiments.robustness import confidence_cdf
    model = _model(args)
    weights = _weights(args, model)
    images, labels = _data(args, "test")
    images, labels = images[:args.samples], labels[:args.samples]
    report = confidence_cdf(model, weights, images, labels, _muls(args), args.scope, args.workers,
                            args.threshold)
    report.seed = _seed(args, required=False)
    _emit(report, args)


def cmd_report_whitebox(args):
    from .experiments.robustness import DEFAULT_SCHEDULE, select_correct, whitebox_distortion_report
    model = _model(args)
    weights = _weights(args, model)
    images, labels = _data(args, "test")
    muls = _muls(args)
    schedule = DEFAULT_SCHEDULE
    if args.schedule:
        try:
            schedule = tuple(float(v) for v in args.schedule.split(","))
        except ValueError:
            raise CliError("usage", f"bad --schedule {args.schedule!r}", EXIT_USAGE) from None
    idx = select_correct(model, weights, images, labels, args.samples, muls, args.scope, args.workers)
    report = whitebox_distortion_report(model, weights, images[idx], labels[idx], muls, schedule,
                                        args.alpha_ratio, args.iters, args.scope, args.workers)
    report.seed = _seed(args, required=False)
    report.config["test_indices"] = idx.tolist()
    _emit(report, args)


def _validate(args):
    for name in ("model", "weights", "adv", "input"):
        path = getattr(args, name, None)
        if path is not None:
            _require_file(path, name)
    data = getattr(args, "data", None)
    if data is not None and not data.is_dir():
        raise CliError("missing_file", f"data directory not found: {data}", EXIT_MISSING)
    _check_out(args.out)
    if args.workers < 1:
        raise CliError("usage", "--workers must be >= 1", EXIT_USAGE)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        _validate(args)
        args.func(args)
        return 0
    except CliError as exc:
        _report_error(exc.code, str(exc))
        return exc.status
    except FileNotFoundError as exc:
        _report_error("missing_file", str(exc))
        return EXIT_MISSING
    except ValueError as exc:
        _report_error("invalid_input", str(exc))
        return EXIT_INVALID
    except SystemExit as exc:
        # --help exits through argparse with status 0
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        _report_error("internal", f"{type(exc).__name__}: {exc}")
        return EXIT_INTERNAL


def _report_error(code: str, message: str):
    sys.stderr.write(json.dumps({"error": code, "message": message}) + "\n")


if __name__ == "__main__":
    sys.exit(main())
