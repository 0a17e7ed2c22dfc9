import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

# Property suites run this many randomized instances each.
N_PROPERTY = 1000
CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def dataset_dir():
    """Directory with real dataset files, if the user provided one."""
    return os.environ.get("INTSPIKE_DATA", "/root/datasets")


def mnist_available():
    root = dataset_dir()
    return all(
        any(os.path.exists(os.path.join(root, n + suffix))
            for suffix in ("", ".gz"))
        for n in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                  "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"))


def shd_available():
    root = dataset_dir()
    return (os.path.exists(os.path.join(root, "shd_train.bin"))
            and os.path.exists(os.path.join(root, "shd_test.bin")))
