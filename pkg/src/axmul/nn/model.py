"""Model description: an ordered list of layers, loadable from JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


class ModelSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Conv2d:
    in_ch: int
    out_ch: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    padding: int = 0


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2d:
    size: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Softmax:
    pass


LAYER_TYPES = {
    "conv2d": Conv2d,
    "relu": ReLU,
    "maxpool2d": MaxPool2d,
    "flatten": Flatten,
    "dense": Dense,
    "softmax": Softmax,
}
_TYPE_NAMES = {cls: name for name, cls in LAYER_TYPES.items()}
# JSON key -> dataclass field, where they differ
_DENSE_KEYS = {"in": "in_features", "out": "out_features"}


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, ...]
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        self.shapes()  # validates

    def shapes(self) -> list[tuple[int, ...]]:
        """Per-sample activation shape after each layer (index 0 is the input)."""
        shape = self.input_shape
        out = [shape]
        softmax_count = sum(isinstance(layer, Softmax) for layer in self.layers)
        if softmax_count != 1 or not isinstance(self.layers[-1], Softmax):
            raise ModelSpecError("model must end with exactly one softmax layer")
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Conv2d):
                if len(shape) != 3 or shape[0] != layer.in_ch:
                    raise ModelSpecError(f"layer {i}: conv2d expects {layer.in_ch} channels, got {shape}")
                c, h, w = shape
                oh = (h + 2 * layer.padding - layer.kernel_h) // layer.stride + 1
                ow = (w + 2 * layer.padding - layer.kernel_w) // layer.stride + 1
                if oh < 1 or ow < 1:
                    raise ModelSpecError(f"layer {i}: kernel larger than input {shape}")
                shape = (layer.out_ch, oh, ow)
            elif isinstance(layer, MaxPool2d):
                if len(shape) != 3:
                    raise ModelSpecError(f"layer {i}: maxpool2d needs a C x H x W input, got {shape}")
                c, h, w = shape
                shape = (c, (h - layer.size) // layer.stride + 1, (w - layer.size) // layer.stride + 1)
            elif isinstance(layer, Flatten):
                n = 1
                for d in shape:
                    n *= d
                shape = (n,)
            elif isinstance(layer, Dense):
                if shape != (layer.in_features,):
                    raise ModelSpecError(f"layer {i}: dense expects ({layer.in_features},), got {shape}")
                shape = (layer.out_features,)
            out.append(shape)
        return out

    @property
    def num_classes(self) -> int:
        return self.shapes()[-1][0]

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        out = {}
        for name, layer in self.named_layers():
            if isinstance(layer, Conv2d):
                out[f"{name}.weight"] = (layer.out_ch, layer.in_ch, layer.kernel_h, layer.kernel_w)
                out[f"{name}.bias"] = (layer.out_ch,)
            elif isinstance(layer, Dense):
                out[f"{name}.weight"] = (layer.out_features, layer.in_features)
                out[f"{name}.bias"] = (layer.out_features,)
        return out

    def named_layers(self):
        """Yield (name, layer); parametrized layers are named conv1, conv2, dense1, ..."""
        counts = {}
        for layer in self.layers:
            kind = "conv" if isinstance(layer, Conv2d) else _TYPE_NAMES[type(layer)]
            counts[kind] = counts.get(kind, 0) + 1
            yield f"{kind}{counts[kind]}", layer

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            d = {"type": _TYPE_NAMES[type(layer)]}
            body = asdict(layer)
            if isinstance(layer, Dense):
                body = {"in": layer.in_features, "out": layer.out_features}
            d.update(body)
            layers.append(d)
        return {"input_shape": list(self.input_shape), "layers": layers}

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSpec":
        if not isinstance(doc, dict):
            raise ModelSpecError("model document must be a JSON object")
        unknown = set(doc) - {"input_shape", "layers"}
        if unknown:
            raise ModelSpecError(f"unknown keys: {sorted(unknown)}")
        if "input_shape" not in doc or "layers" not in doc:
            raise ModelSpecError("model document needs 'input_shape' and 'layers'")
        layers = []
        for i, entry in enumerate(doc["layers"]):
            entry = dict(entry)
            kind = entry.pop("type", None)
            if kind not in LAYER_TYPES:
                raise ModelSpecError(f"layer {i}: unknown type {kind!r}")
            layer_cls = LAYER_TYPES[kind]
            if layer_cls is Dense:
                entry = {_DENSE_KEYS.get(k, "?" + k): v for k, v in entry.items()}
            allowed = {f.name for f in fields(layer_cls)}
            bad = set(entry) - allowed
            if bad:
                raise ModelSpecError(f"layer {i} ({kind}): unknown keys {sorted(k.lstrip('?') for k in bad)}")
            try:
                layers.append(layer_cls(**entry))
            except TypeError as exc:
                raise ModelSpecError(f"layer {i} ({kind}): {exc}") from None
        return cls(tuple(doc["input_shape"]), tuple(layers))

    @classmethod
    def load(cls, path) -> "ModelSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ModelSpecError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(doc)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def lenet5() -> ModelSpec:
    """LeNet-5-shaped network for 1 x 28 x 28 inputs."""
    return ModelSpec(
        (1, 28, 28),
        (
            Conv2d(1, 6, 5, 5),
            ReLU(),
            MaxPool2d(2, 2),
            Conv2d(6, 16, 5, 5),
            ReLU(),
            MaxPool2d(2, 2),
            Flatten(),
            Dense(256, 120),
            ReLU(),
            Dense(120, 84),
            ReLU(),
            Dense(84, 10),
            Softmax(),
        ),
    )
