import gzip
import struct

import numpy as np
import pytest

from conftest import central_difference, max_relative_error

from axmul.experiments.conv import default_kernel, default_patches
from axmul.floatmul import AX_FPM, BFLOAT16, EXACT_FPM, NATIVE
from axmul.nn import (
    ApproxScope,
    ArchiveError,
    IdxError,
    ModelSpecError,
    backward_input_grad,
    conv2d_forward,
    dense_forward,
    forward,
    init_weights,
    lenet5,
    load_idx_images,
    load_idx_labels,
    load_weights,
    maxpool2d,
    relu,
    save_weights,
    softmax,
    train_sgd,
)
from axmul.nn.archive import dumps, loads
from axmul.nn.idx import write_idx_images, write_idx_labels
from axmul.nn.layers import cross_entropy, forward_cached
from axmul.nn.model import Conv2d, Dense, Flatten, MaxPool2d, ModelSpec, ReLU, Softmax
from axmul.nn.train import SGDConfig, loss_and_grads

ALL_BACKENDS = [NATIVE, EXACT_FPM, AX_FPM, BFLOAT16]


def loss_of(model, weights, x, labels):
    logits, _ = forward_cached(model, weights, x)
    return cross_entropy(logits, labels)[0]


def finite_difference_grad(model, weights, x, labels, h=1e-3):
    return central_difference(lambda: loss_of(model, weights, x, labels), x, h)


class TestConv:
    def test_one_by_one(self):
        out = conv2d_forward(np.array([[[3.0]]]), np.array([[[[2.0]]]]), np.zeros(1))
        assert out.tolist() == [[[6.0]]]

    @pytest.mark.parametrize("mul", ALL_BACKENDS, ids=lambda m: m.name)
    def test_zero_kernel_gives_bias(self, mul):
        x = np.random.default_rng(0).uniform(0, 1, (2, 6, 6)).astype(np.float32)
        bias = np.array([0.5, -1.25], dtype=np.float32)
        out = conv2d_forward(x, np.zeros((2, 2, 3, 3)), bias, mul=mul)
        assert out.shape == (2, 4, 4)
        np.testing.assert_array_equal(out, np.broadcast_to(bias[:, None, None], out.shape))

    def test_ama5_example(self):
        out = conv2d_forward(np.array([[[0.75]]]), np.array([[[[0.75]]]]), np.array([0.125]), mul=AX_FPM)
        assert out.tolist() == [[[0.875]]]

    def test_matches_direct_loop(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 7, 6)).astype(np.float32)
        k = rng.normal(size=(3, 2, 3, 2)).astype(np.float32)
        b = rng.normal(size=3).astype(np.float32)
        out = conv2d_forward(x, k, b, stride=2, padding=1)
        xp = np.pad(x.astype(np.float64), ((0, 0), (1, 1), (1, 1)))
        oh, ow = out.shape[1:]
        ref = np.zeros(out.shape)
        for o in range(3):
            for i in range(oh):
                for j in range(ow):
                    ref[o, i, j] = np.sum(xp[:, 2 * i:2 * i + 3, 2 * j:2 * j + 2] * k[o]) + b[o]
        np.testing.assert_allclose(out, ref, rtol=1e-5, atol=1e-5)

    def test_linearity_exact(self):
        rng = np.random.default_rng(2)
        x1, x2 = rng.uniform(0, 1, (2, 1, 3, 8, 8)).astype(np.float32)
        k = rng.normal(size=(4, 3, 3, 3)).astype(np.float32)
        b = rng.normal(size=4).astype(np.float32)
        lhs = conv2d_forward(x1 + x2, k, b)
        rhs = conv2d_forward(x1, k, b) + conv2d_forward(x2, k, b) - b[:, None, None]
        np.testing.assert_allclose(lhs, rhs, rtol=1e-5, atol=1e-5)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            conv2d_forward(np.zeros((2, 5, 5)), np.zeros((1, 3, 3, 3)), np.zeros(1))
        with pytest.raises(ValueError):
            conv2d_forward(np.zeros((3, 5, 5)), np.zeros((1, 3, 3, 3)), np.zeros(2))

    @pytest.mark.parametrize("mul", ALL_BACKENDS, ids=lambda m: m.name)
    def test_batch_invariance(self, mul):
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 1, (5, 2, 6, 6)).astype(np.float32)
        k = rng.normal(size=(3, 2, 3, 3)).astype(np.float32)
        b = rng.normal(size=3).astype(np.float32)
        batch = conv2d_forward(x, k, b, mul=mul)
        for i in range(5):
            np.testing.assert_array_equal(batch[i], conv2d_forward(x[i], k, b, mul=mul))

    def test_similarity_amplification(self):
        kernel = default_kernel()
        patches = default_patches(kernel)
        k4 = kernel[None, None]
        exact = np.array([conv2d_forward(p[None], k4, np.zeros(1)).item() for p in patches])
        approx = np.array([conv2d_forward(p[None], k4, np.zeros(1), mul=AX_FPM).item() for p in patches])
        gap = approx - exact
        assert np.sum(approx >= exact) == 6
        assert np.sum(np.diff(gap) >= 0) + 1 >= 5


class TestElementwise:
    def test_relu(self):
        assert relu(np.array([-1.0, 2.0])).tolist() == [0.0, 2.0]

    def test_softmax(self):
        assert softmax(np.array([0.0, 0.0])).tolist() == [0.5, 0.5]
        p = softmax(np.array([1000.0, 0.0, -1000.0]))
        assert np.isfinite(p).all() and abs(p.sum() - 1) < 1e-12

    def test_maxpool(self):
        assert maxpool2d(np.array([[1.0, 2.0], [3.0, 4.0]]), 2, 2).tolist() == [[4.0]]

    def test_maxpool_batch(self):
        x = np.arange(2 * 3 * 4 * 4, dtype=np.float32).reshape(2, 3, 4, 4)
        out = maxpool2d(x, 2, 2)
        assert out.shape == (2, 3, 2, 2)
        assert out[1, 2, 1, 1] == x[1, 2, 3, 3]

    def test_dense(self):
        w = np.array([[1.0, 2.0], [0.5, -1.0]])
        assert dense_forward(np.array([3.0, 4.0]), w, np.array([0.0, 1.0])).tolist() == [11.0, -1.5]

    def test_dense_shape_mismatch(self):
        with pytest.raises(ValueError):
            dense_forward(np.zeros(3), np.zeros((2, 2)), np.zeros(2))


class TestForward:
    def test_zero_weights_uniform(self):
        model = lenet5()
        w = {k: np.zeros(s, dtype=np.float32) for k, s in model.param_shapes().items()}
        x = np.random.default_rng(0).uniform(0, 1, (1, 28, 28))
        for mul in ALL_BACKENDS:
            np.testing.assert_allclose(forward(model, w, x, mul), np.full(10, 0.1), atol=1e-7)

    @pytest.mark.parametrize("mul", ALL_BACKENDS, ids=lambda m: m.name)
    def test_purity_and_normalization(self, mul):
        model = lenet5()
        w = init_weights(model, 4)
        x = np.random.default_rng(1).uniform(0, 1, (3, 1, 28, 28)).astype(np.float32)
        p1 = forward(model, w, x, mul, ApproxScope.ALL)
        p2 = forward(model, w, x, mul, ApproxScope.ALL)
        assert p1.tobytes() == p2.tobytes()
        assert (p1 >= 0).all()
        np.testing.assert_allclose(p1.sum(axis=1), 1, atol=1e-5)

    def test_scope_changes_only_dense(self):
        model = lenet5()
        w = init_weights(model, 5)
        x = np.random.default_rng(2).uniform(0, 1, (2, 1, 28, 28)).astype(np.float32)
        conv_only = forward(model, w, x, AX_FPM, ApproxScope.CONV_ONLY)
        all_mul = forward(model, w, x, AX_FPM, ApproxScope.ALL)
        assert not np.array_equal(conv_only, all_mul)
        # exact-fpm is bit-exact with the platform multiply, so scope is irrelevant there
        np.testing.assert_array_equal(forward(model, w, x, EXACT_FPM, ApproxScope.ALL),
                                      forward(model, w, x, NATIVE, ApproxScope.ALL))

    def test_input_shape_checked(self):
        model = lenet5()
        with pytest.raises(ValueError):
            forward(model, init_weights(model, 0), np.zeros((1, 27, 28)))

    def test_trained_model_fits_training_data(self, small_model, mnist_train):
        model, w = small_model
        x, y = mnist_train
        pred = forward(model, w, x[:200]).argmax(axis=1)
        assert np.mean(pred == y[:200]) >= 0.9


class TestGradient:
    def test_finite_difference_dense(self, toy_model):
        model, w = toy_model
        x = np.random.default_rng(0).normal(size=(3, 4))
        labels = np.array([0, 2, 1])
        g = backward_input_grad(model, w, x, labels)
        fd = finite_difference_grad(model, w, x.copy(), labels)
        assert max_relative_error(g, fd) <= 1e-3

    def test_finite_difference_conv(self):
        model = ModelSpec((2, 7, 7), (Conv2d(2, 3, 3, 3, 1, 1), ReLU(), MaxPool2d(2, 2), Flatten(),
                                      Dense(27, 4), Softmax()))
        rng = np.random.default_rng(1)
        w = {k: rng.normal(size=s) for k, s in model.param_shapes().items()}
        x = rng.normal(size=(2, 2, 7, 7))
        labels = np.array([1, 3])
        g = backward_input_grad(model, w, x, labels)
        fd = finite_difference_grad(model, w, x.copy(), labels)
        assert max_relative_error(g, fd) <= 1e-3

    def test_parameter_gradients(self):
        model = ModelSpec((1, 6, 6), (Conv2d(1, 2, 3, 3), ReLU(), MaxPool2d(2, 2), Flatten(), Dense(8, 3),
                                      Softmax()))
        rng = np.random.default_rng(4)
        w = {k: rng.normal(size=s) for k, s in model.param_shapes().items()}
        x = rng.normal(size=(3, 1, 6, 6))
        labels = np.array([0, 2, 1])
        _, grads = loss_and_grads(model, w, x, labels)
        for name, param in w.items():
            fd = central_difference(lambda: loss_of(model, w, x, labels), param)
            assert max_relative_error(grads[name], fd) <= 1e-3, name

    def test_symmetric_architecture(self):
        # mirrored kernels and a mirror-invariant readout: the gradient at zero is mirror-symmetric
        model = ModelSpec((1, 4, 4), (Conv2d(1, 2, 2, 2), ReLU(), Flatten(), Dense(18, 2), Softmax()))
        k = np.array([[1.0, 2.0], [3.0, 4.0]])
        w = {"conv1.weight": np.stack([k, k[:, ::-1]])[:, None],
             "conv1.bias": np.array([0.1, 0.1]),
             "dense1.weight": np.ones((2, 18)) * np.array([[1.0], [-1.0]]),
             "dense1.bias": np.zeros(2)}
        g = backward_input_grad(model, w, np.zeros((1, 4, 4)), 0)
        np.testing.assert_allclose(g, g[:, :, ::-1], atol=1e-12)

    def test_ascent_direction(self, toy_model):
        model, w = toy_model
        x = np.random.default_rng(2).normal(size=(1, 4))
        g = backward_input_grad(model, w, x, [1])
        step = 1e-3 * np.sign(g)
        assert np.sum(g * step) >= 0
        assert loss_of(model, w, x + step, [1]) > loss_of(model, w, x, [1])

    def test_label_count_checked(self, toy_model):
        model, w = toy_model
        with pytest.raises(ValueError):
            backward_input_grad(model, w, np.zeros((2, 4)), [0])


class TestTraining:
    def test_zero_lr_keeps_weights(self):
        model = lenet5()
        x = np.random.default_rng(0).uniform(0, 1, (8, 1, 28, 28)).astype(np.float32)
        y = np.arange(8) % 10
        w0 = init_weights(model, 2)
        w1 = train_sgd(model, x, y, SGDConfig(lr=0.0, epochs=1, batch=4, seed=2), weights=w0)
        for k in w0:
            np.testing.assert_array_equal(w0[k], w1[k])

    def test_single_sample_overfit(self, mnist_train):
        model = lenet5()
        x, y = mnist_train
        w = train_sgd(model, x[:1], y[:1], SGDConfig(lr=0.05, epochs=200, batch=1, seed=0))
        logits, _ = forward_cached(model, w, x[:1])
        assert cross_entropy(logits, y[:1])[0] <= 0.01

    def test_deterministic_archive(self, tmp_path, mnist_train):
        model = lenet5()
        x, y = mnist_train
        hyper = SGDConfig(lr=0.05, epochs=1, batch=16, seed=9)
        save_weights(train_sgd(model, x[:200], y[:200], hyper), tmp_path / "a.axtf", model)
        save_weights(train_sgd(model, x[:200], y[:200], hyper), tmp_path / "b.axtf", model)
        assert (tmp_path / "a.axtf").read_bytes() == (tmp_path / "b.axtf").read_bytes()

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            train_sgd(lenet5(), np.zeros((0, 1, 28, 28)), np.zeros(0, dtype=int), SGDConfig())


class TestModelSpec:
    def test_json_roundtrip(self, tmp_path):
        model = lenet5()
        model.save(tmp_path / "m.json")
        assert ModelSpec.load(tmp_path / "m.json") == model

    def test_lenet_shapes(self):
        shapes = lenet5().shapes()
        assert shapes[6] == (16, 4, 4)
        assert shapes[7] == (256,)
        assert lenet5().num_classes == 10

    def test_unknown_keys_rejected(self):
        doc = lenet5().to_dict()
        doc["layers"][0]["dilation"] = 2
        with pytest.raises(ModelSpecError):
            ModelSpec.from_dict(doc)
        doc = lenet5().to_dict()
        doc["optimizer"] = "adam"
        with pytest.raises(ModelSpecError):
            ModelSpec.from_dict(doc)

    def test_incompatible_shapes(self):
        with pytest.raises(ModelSpecError):
            ModelSpec((1, 28, 28), (Flatten(), Dense(100, 10), Softmax()))

    def test_needs_terminal_softmax(self):
        with pytest.raises(ModelSpecError):
            ModelSpec((4,), (Dense(4, 2),))
        with pytest.raises(ModelSpecError):
            ModelSpec((4,), (Softmax(), Dense(4, 2), Softmax()))


class TestArchive:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        model = lenet5()
        w = {k: rng.normal(size=s).astype(np.float32) for k, s in model.param_shapes().items()}
        save_weights(w, tmp_path / "w.axtf", model)
        back = load_weights(tmp_path / "w.axtf", model)
        assert list(back) == list(w)
        for k in w:
            assert back[k].tobytes() == w[k].tobytes()

    def test_layout(self):
        data = dumps({"ab": np.array([[1.0, 2.0]], dtype=np.float32)})
        assert data[:4] == b"\x41\x58\x54\x46"
        assert struct.unpack("<II", data[4:12]) == (1, 1)
        assert struct.unpack("<H", data[12:14]) == (2,)
        assert data[14:16] == b"ab"
        assert data[16:18] == b"\x01\x02"
        assert struct.unpack("<II", data[18:26]) == (1, 2)
        assert np.frombuffer(data[26:], dtype="<f4").tolist() == [1.0, 2.0]

    def test_truncated(self):
        data = dumps({"w": np.ones((3, 3), dtype=np.float32)})
        for cut in (3, 10, len(data) - 1):
            with pytest.raises(ArchiveError):
                loads(data[:cut])

    def test_bad_magic_and_version(self):
        data = dumps({"w": np.ones(2, dtype=np.float32)})
        with pytest.raises(ArchiveError, match="magic"):
            loads(b"AXTG" + data[4:])
        with pytest.raises(ArchiveError, match="version"):
            loads(data[:4] + struct.pack("<I", 2) + data[8:])

    def test_shape_mismatch_against_model(self, tmp_path):
        model = lenet5()
        w = {k: np.zeros(s, dtype=np.float32) for k, s in model.param_shapes().items()}
        w["conv1.weight"] = np.zeros((6, 1, 3, 3), dtype=np.float32)
        from axmul.nn.archive import save_tensors
        save_tensors(w, tmp_path / "w.axtf")
        with pytest.raises(ArchiveError):
            load_weights(tmp_path / "w.axtf", model)


class TestIdx:
    def test_images(self, tmp_path):
        raw = np.zeros((10, 28, 28), dtype=np.uint8)
        raw[3, 5, 7] = 255
        write_idx_images(raw, tmp_path / "img")
        assert (tmp_path / "img").read_bytes()[:4] == struct.pack(">I", 2051)
        x = load_idx_images(tmp_path / "img")
        assert x.shape == (10, 1, 28, 28) and x.dtype == np.float32
        assert x[3, 0, 5, 7] == 1.0 and x.sum() == 1.0

    def test_labels_and_gzip(self, tmp_path):
        write_idx_labels(np.arange(10), tmp_path / "lab.gz")
        assert gzip.decompress((tmp_path / "lab.gz").read_bytes())[:4] == struct.pack(">I", 2049)
        assert load_idx_labels(tmp_path / "lab.gz").tolist() == list(range(10))

    def test_bad_magic(self, tmp_path):
        write_idx_labels(np.arange(10), tmp_path / "lab")
        with pytest.raises(IdxError, match="magic"):
            load_idx_images(tmp_path / "lab")

    def test_count_mismatch(self, tmp_path):
        (tmp_path / "img").write_bytes(struct.pack(">IIII", 2051, 10, 28, 28) + bytes(100))
        with pytest.raises(IdxError):
            load_idx_images(tmp_path / "img")

    def test_dim_overflow(self, tmp_path):
        (tmp_path / "img").write_bytes(struct.pack(">IIII", 2051, 2**31, 2**31, 28))
        with pytest.raises(IdxError, match="overflow"):
            load_idx_images(tmp_path / "img")

    def test_shipped_subset(self, mnist_train, mnist_test):
        assert mnist_train[0].shape == (4000, 1, 28, 28)
        assert mnist_test[0].shape == (1000, 1, 28, 28)
        assert np.bincount(mnist_test[1]).tolist() == [100] * 10
