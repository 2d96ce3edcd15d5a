import os
from pathlib import Path

import numpy as np
import pytest

from xormixfl.dataset import Dataset

REPO_DATA = Path(__file__).resolve().parent.parent / "data" / "mnist"


def mnist_dir() -> Path | None:
    for candidate in (os.environ.get("XORMIXFL_DATA"), REPO_DATA):
        if not candidate:
            continue
        d = Path(candidate)
        if any((d / f"train-labels-idx1-ubyte{ext}").exists() for ext in ("", ".gz")):
            return d
    return None


@pytest.fixture(scope="session")
def data_dir():
    d = mnist_dir()
    if d is None:
        pytest.skip("MNIST not found; set XORMIXFL_DATA")
    return d


@pytest.fixture(scope="session")
def mnist(data_dir):
    from xormixfl.experiment import load_data
    return load_data(data_dir)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def toy_dataset(counts: dict[int, int], n_pixels=16, seed=0) -> Dataset:
    """Random-pixel dataset with the given per-label counts."""
    g = np.random.default_rng(seed)
    labels = np.concatenate([np.full(c, k) for k, c in sorted(counts.items())]) if counts else np.zeros(0)
    images = g.integers(0, 256, size=(len(labels), n_pixels), dtype=np.uint8)
    return Dataset(images, labels.astype(np.int64))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
