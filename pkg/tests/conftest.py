import re
from pathlib import Path

import numpy as np
import pytest

from axmul.nn import lenet5, load_mnist, train_sgd
from axmul.nn.model import Dense, ModelSpec, ReLU, Softmax
from axmul.nn.train import SGDConfig

ROOT = Path(__file__).resolve().parents[1]
DATA_DIR = ROOT / "data" / "mnist"

# Desk-model training recipe shared by the acceptance and CLI tests.
DESK_HYPER = SGDConfig(lr=0.05, epochs=15, batch=32, seed=1)

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def data_dir():
    if not DATA_DIR.exists():
        pytest.skip("data/mnist missing; run scripts/make_mnist_subset.py")
    return DATA_DIR


@pytest.fixture(scope="session")
def mnist_train(data_dir):
    return load_mnist(data_dir, "train")


@pytest.fixture(scope="session")
def mnist_test(data_dir):
    return load_mnist(data_dir, "test")


@pytest.fixture(scope="session")
def small_model(mnist_train):
    """Quickly trained LeNet for tests that only need a sensible classifier."""
    model = lenet5()
    x, y = mnist_train
    return model, train_sgd(model, x[:2000], y[:2000], SGDConfig(lr=0.05, epochs=5, batch=32, seed=3))


@pytest.fixture
def toy_model():
    """4 -> 5 -> 3 dense network with seeded float64 weights."""
    model = ModelSpec((4,), (Dense(4, 5), ReLU(), Dense(5, 3), Softmax()))
    rng = np.random.default_rng(11)
    weights = {
        "dense1.weight": rng.normal(size=(5, 4)),
        "dense1.bias": rng.normal(size=5),
        "dense2.weight": rng.normal(size=(3, 5)),
        "dense2.bias": rng.normal(size=3),
    }
    return model, weights


def central_difference(f, arr, h=1e-3):
    """Gradient of scalar ``f()`` w.r.t. ``arr`` by central differences, perturbing in place."""
    grad = np.zeros(arr.shape)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        grad.reshape(-1)[i] = (up - down) / (2 * h)
    return grad


def max_relative_error(analytic, numeric):
    """Largest absolute deviation relative to the largest numeric component."""
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-12))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda text: int(re.search(r"AC(\d+)", text).group(1))):
            terminalreporter.write_line(line)
