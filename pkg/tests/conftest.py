import os
from pathlib import Path

import numpy as np
import pytest

from spikesparse.datasets import LabeledImageSet, write_mnist

H = 1e-5


def numeric_grad(f, x: np.ndarray, h: float = H) -> np.ndarray:
    """Central finite differences of scalar ``f`` with respect to array ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def max_rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-3) -> float:
    """max |a - b| / max(|a|, |b|, floor), elementwise."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_blobs(n: int = 60, classes: int = 3, side: int = 6, seed: int = 0) -> LabeledImageSet:
    """Tiny separable image set: each class lights up its own band of rows."""
    r = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    pixels = r.integers(0, 40, size=(n, 1, side, side))
    band = side // classes
    for i, y in enumerate(labels):
        pixels[i, 0, y * band:(y + 1) * band] = r.integers(180, 256, size=(band, side))
    return LabeledImageSet(pixels.astype(np.uint8), labels.astype(np.int64), classes)


@pytest.fixture
def blobs():
    return make_blobs()


def _mlxtend_mnist():
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    # shipped sorted by class; shuffle once so prefixes are representative like the published files
    order = np.random.default_rng(0).permutation(len(y))
    return X[order].reshape(-1, 1, 28, 28).astype(np.uint8), y[order].astype(np.int64)


@pytest.fixture(scope="session")
def mnist_source(tmp_path_factory):
    """Directory with MNIST training IDX files plus a description of where they came from.

    Uses the published files from ``$SPIKESPARSE_MNIST_DIR`` when set; otherwise the
    5,000 real MNIST digits bundled with mlxtend, written out as IDX.
    """
    real = os.environ.get("SPIKESPARSE_MNIST_DIR")
    if real:
        return Path(real), "published", 12500
    try:
        pixels, labels = _mlxtend_mnist()
    except ImportError:
        pytest.skip("no MNIST source: set SPIKESPARSE_MNIST_DIR or install mlxtend")
    d = tmp_path_factory.mktemp("mnist5k")
    write_mnist(d, pixels, labels)
    return d, "mlxtend-5k", 5000


@pytest.fixture
def tiny_mnist_dir(tmp_path):
    """120 synthetic 28x28 digits in MNIST IDX layout (fast CLI tests)."""
    r = np.random.default_rng(7)
    labels = np.arange(120) % 10
    pixels = r.integers(0, 30, size=(120, 28, 28))
    for i, y in enumerate(labels):
        pixels[i, 2 * y:2 * y + 6, 4:24] = 230
    write_mnist(tmp_path / "mnist", pixels.astype(np.uint8), labels)
    return tmp_path / "mnist"


_acceptance: dict[str, str] = {}
_notes: dict[str, str] = {}


@pytest.fixture
def note(request):
    """Attach a one-line measurement to this test's acceptance summary line."""
    name = request.node.nodeid.split("::", 1)[1]
    return lambda text: _notes.__setitem__(name, text)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::", 1)[1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[name] = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        extra = f"  [{_notes[name]}]" if name in _notes else ""
        terminalreporter.write_line(f"{outcome:5s} {name}{extra}")
