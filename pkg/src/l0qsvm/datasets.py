"""Bundled and synthetic desk-scale datasets."""

from __future__ import annotations

from importlib import resources

import numpy as np


def iris_path() -> str:
    """Filesystem path of the bundled Iris CSV (150 rows, 4 features)."""
    return str(resources.files("l0qsvm.data").joinpath("iris.csv"))


def make_ellipse(m: int = 200, margin: float = 0.1, seed: int = 0,
                 outer_radius2: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """2-D points labeled by sign(x1^2 + x2^2 - 1), margin-separated.

    Half the points fall inside the unit circle (label -1), half outside
    (label +1); no squared radius lands within `margin` of 1, so the classes
    are exactly separable by a diagonal quadratic surface.  The default outer
    ring keeps the squared-radius class means symmetric about 1, so the
    margin-regression (quadratic loss) boundary also falls inside the gap.
    """
    rng = np.random.default_rng(seed)
    half = m // 2
    r2_in = rng.uniform(0.0, 1.0 - margin, size=half)
    r2_out = rng.uniform(1.0 + margin, outer_radius2, size=m - half)
    r2 = np.concatenate([r2_in, r2_out])
    theta = rng.uniform(0.0, 2.0 * np.pi, size=m)
    X = np.sqrt(r2)[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    y = np.sign(X[:, 0] ** 2 + X[:, 1] ** 2 - 1.0)
    perm = rng.permutation(m)
    return X[perm], y[perm]


def make_blobs(m: int = 60, gap: float = 3.0, seed: int = 0,
               n: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Two linearly separable Gaussian blobs along the first axis."""
    rng = np.random.default_rng(seed)
    half = m // 2
    shift = np.zeros(n)
    shift[0] = gap
    X = np.vstack([
        rng.standard_normal((half, n)) * 0.4 + shift,
        rng.standard_normal((m - half, n)) * 0.4 - shift,
    ])
    y = np.concatenate([np.ones(half), -np.ones(m - half)])
    perm = rng.permutation(m)
    return X[perm], y[perm]
