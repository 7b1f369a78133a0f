import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from imhash.hashing import TrainConfig, train
from imhash.types import FeatureMatrix

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

MNIST_DIR = Path(os.environ.get("IMH_MNIST_DIR", "/root/data/mnist"))


def mnist_paths():
    images = MNIST_DIR / "train-images.idx3-ubyte"
    labels = MNIST_DIR / "train-labels.idx1-ubyte"
    if not images.exists():
        images = images.with_name(images.name + ".gz")
        labels = labels.with_name(labels.name + ".gz")
    return images, labels


def blobs(n_per=30, centers=((0.0, 0.0), (6.0, 6.0), (-6.0, 6.0)), scale=0.5, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    data = np.vstack([c + scale * rng.standard_normal((n_per, centers.shape[1])) for c in centers])
    labels = np.repeat(np.arange(len(centers)), n_per)
    return FeatureMatrix(data, labels)


@pytest.fixture
def toy():
    return blobs()


@pytest.fixture(scope="session")
def toy_model():
    X = blobs(n_per=40, seed=3)
    cfg = TrainConfig(backend="tsne", m=12, k=3, bits=4, tsne_iters=300, kmeans_seed=1, tsne_seed=2)
    return X, train(X, cfg)


ACCEPTANCE_LINES = []


def report_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
