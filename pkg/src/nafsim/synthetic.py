"""Bundled synthetic regression datasets.

These ship in-code so the full pipeline (training, sweeps, retraining,
acceptance tests, CLI) runs with zero external downloads. Both carry a
small Gaussian label noise, which gives the clean fit a realistic error
floor instead of an arbitrarily small one.

Dataset references of the form ``synthetic:sine`` / ``synthetic:quadratic``
are resolved here; anything else is treated as a featurized-CSV path.
"""

from __future__ import annotations

import json

import numpy as np

from .data import Dataset, DatasetError, load_dataset


def make_sine_dataset(n: int = 400, seed: int = 0, noise: float = 0.005) -> Dataset:
    """y = sin(3x) + noise on x uniform in [-1, 1]."""
    rng = np.random.default_rng([seed, 101])
    x = rng.uniform(-1.0, 1.0, size=n)
    y = np.sin(3.0 * x) + noise * rng.standard_normal(n)
    provenance = json.dumps(
        {"generator": "sine", "n": n, "seed": seed, "noise": noise}, sort_keys=True
    )
    return Dataset(
        name="synthetic_sine",
        X=x[:, None],
        y=y,
        ids=[f"sine_{i}" for i in range(n)],
        unit="arb",
        provenance=provenance,
    )


def make_quadratic_dataset(n: int = 500, seed: int = 0, noise: float = 0.005) -> Dataset:
    """y = x1^2 - 0.5*x2^2 + x1*x2 + noise on the unit square."""
    rng = np.random.default_rng([seed, 102])
    X = rng.uniform(-1.0, 1.0, size=(n, 2))
    y = X[:, 0] ** 2 - 0.5 * X[:, 1] ** 2 + X[:, 0] * X[:, 1] + noise * rng.standard_normal(n)
    provenance = json.dumps(
        {"generator": "quadratic", "n": n, "seed": seed, "noise": noise}, sort_keys=True
    )
    return Dataset(
        name="synthetic_quadratic",
        X=X,
        y=y,
        ids=[f"quad_{i}" for i in range(n)],
        unit="arb",
        provenance=provenance,
    )


def resolve_dataset(ref: str) -> Dataset:
    """Resolve ``synthetic:<name>`` or a featurized-CSV path to a Dataset."""
    if ref.startswith("synthetic:"):
        name = ref.split(":", 1)[1]
        if name == "sine":
            return make_sine_dataset()
        if name == "quadratic":
            return make_quadratic_dataset()
        raise DatasetError(f"unknown synthetic dataset {name!r} (have: sine, quadratic)")
    return load_dataset(ref)
