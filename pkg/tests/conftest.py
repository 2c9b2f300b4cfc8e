"""Shared fixtures: the committed digits classifier and its data split."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from boxrepair.specio import load_network

DATA_DIR = Path(__file__).resolve().parent / "data"


@pytest.fixture(scope="session")
def digits_net():
    """3x100 relu classifier trained on digits (see data/make_fixtures.py)."""
    return load_network(DATA_DIR / "digits_3x100.json")


@pytest.fixture(scope="session")
def digits_split():
    """(X_train, y_train, X_test, y_test) with the generator's exact split."""
    from sklearn.datasets import load_digits

    digits = load_digits()
    X = digits.data / 16.0
    y = digits.target
    perm = np.random.default_rng(0).permutation(len(X))
    X, y = X[perm], y[perm]
    return X[:1200], y[:1200], X[1200:], y[1200:]
