"""Coulomb-matrix eigenspectrum descriptors and min-max scaling.

The Coulomb matrix uses the standard definition: 0.5 * Z^2.4 on the
diagonal, Z_i * Z_j / d_ij off it, with internuclear distances in Bohr.
Its eigenvalues, sorted by descending absolute value and zero-padded to a
fixed length, are permutation- and rigid-motion-invariant molecular
descriptors.

Scaling maps each feature dimension and the target affinely onto [-1, 1]
using training-split extrema only; held-out data may land outside that
interval (no clipping), and constant dimensions pass through unscaled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ANGSTROM_PER_BOHR = 0.529177210903
DISTANCE_EPSILON = 1e-6  # Angstrom; closer pairs mean a broken geometry


class GeometryInconsistent(ValueError):
    """Two atoms are (numerically) on top of each other."""


@dataclass(frozen=True, eq=False)
class Molecule:
    numbers: np.ndarray
    positions: np.ndarray
    id: str = ""

    def __post_init__(self):
        numbers = np.asarray(self.numbers, dtype=int)
        positions = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "numbers", numbers)
        object.__setattr__(self, "positions", positions)
        n = numbers.shape[0]
        if n < 1:
            raise ValueError("molecule needs at least one atom")
        if positions.shape != (n, 3):
            raise ValueError(f"positions shape {positions.shape}, expected {(n, 3)}")
        if np.any(numbers < 1):
            raise ValueError("atomic numbers must be >= 1")
        if not np.all(np.isfinite(positions)):
            raise ValueError("positions must be finite")

    @property
    def n_atoms(self) -> int:
        return int(self.numbers.shape[0])

    def formula(self) -> str:
        uniq, counts = np.unique(self.numbers, return_counts=True)
        return "/".join(f"{z}:{c}" for z, c in zip(uniq, counts))


def coulomb_matrix(mol: Molecule, distance_epsilon: float = DISTANCE_EPSILON) -> np.ndarray:
    z = mol.numbers.astype(float)
    pos = mol.positions
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    n = mol.n_atoms
    if n > 1:
        off = ~np.eye(n, dtype=bool)
        dmin = dist[off].min()
        if dmin <= distance_epsilon:
            i, j = np.argwhere(off & (dist <= distance_epsilon))[0]
            raise GeometryInconsistent(
                f"molecule {mol.id!r}: atoms {i} and {j} are {dmin:.3g} Angstrom apart"
            )
    c = np.zeros((n, n))
    if n > 1:
        dist_bohr = dist / ANGSTROM_PER_BOHR
        with np.errstate(divide="ignore"):
            c = np.where(np.eye(n, dtype=bool), 0.0, np.outer(z, z) / np.where(dist_bohr == 0, 1.0, dist_bohr))
    np.fill_diagonal(c, 0.5 * z**2.4)
    return c


def ecm(mol: Molecule, pad_to: int, sort: str = "abs") -> np.ndarray:
    """Coulomb-matrix eigenspectrum, zero-padded to ``pad_to``.

    ``sort`` picks the eigenvalue ordering: "abs" (descending absolute
    value, the standard convention) or "signed" (descending value, kept as a
    diagnostic for reproduction mismatches).
    """
    if mol.n_atoms > pad_to:
        raise ValueError(f"molecule {mol.id!r} has {mol.n_atoms} atoms > pad_to={pad_to}")
    vals = np.linalg.eigvalsh(coulomb_matrix(mol))
    if sort == "abs":
        order = np.argsort(-np.abs(vals), kind="stable")
    elif sort == "signed":
        order = np.argsort(-vals, kind="stable")
    else:
        raise ValueError(f"unknown sort {sort!r}; use 'abs' or 'signed'")
    out = np.zeros(pad_to)
    out[: mol.n_atoms] = vals[order]
    return out


@dataclass
class ScalingParams:
    """Train-split extrema for affine mapping onto [-1, 1], target included."""

    x_min: np.ndarray
    x_max: np.ndarray
    y_min: float
    y_max: float

    @property
    def x_const(self) -> np.ndarray:
        return self.x_max == self.x_min

    @property
    def y_const(self) -> bool:
        return self.y_max == self.y_min

    def apply_features(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        span = np.where(self.x_const, 1.0, self.x_max - self.x_min)
        scaled = 2.0 * (X - self.x_min) / span - 1.0
        return np.where(self.x_const, X, scaled)

    def invert_features(self, Xs: np.ndarray) -> np.ndarray:
        Xs = np.atleast_2d(np.asarray(Xs, dtype=float))
        span = np.where(self.x_const, 1.0, self.x_max - self.x_min)
        raw = (Xs + 1.0) * span / 2.0 + self.x_min
        return np.where(self.x_const, Xs, raw)

    def apply_target(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.y_const:
            return y.copy()
        return 2.0 * (y - self.y_min) / (self.y_max - self.y_min) - 1.0

    def invert_target(self, ys: np.ndarray) -> np.ndarray:
        ys = np.asarray(ys, dtype=float)
        if self.y_const:
            return ys.copy()
        return (ys + 1.0) * (self.y_max - self.y_min) / 2.0 + self.y_min

    def to_dict(self) -> dict:
        return {
            "x_min": self.x_min.tolist(),
            "x_max": self.x_max.tolist(),
            "y_min": self.y_min,
            "y_max": self.y_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingParams":
        return cls(
            x_min=np.asarray(d["x_min"], dtype=float),
            x_max=np.asarray(d["x_max"], dtype=float),
            y_min=float(d["y_min"]),
            y_max=float(d["y_max"]),
        )


def fit_scaling(train_X: np.ndarray, train_y: np.ndarray) -> ScalingParams:
    """Fit per-dimension extrema on the training split only (no leakage)."""
    train_X = np.atleast_2d(np.asarray(train_X, dtype=float))
    train_y = np.asarray(train_y, dtype=float)
    if train_X.shape[0] == 0:
        raise ValueError("cannot fit scaling on an empty training split")
    return ScalingParams(
        x_min=train_X.min(axis=0),
        x_max=train_X.max(axis=0),
        y_min=float(train_y.min()),
        y_max=float(train_y.max()),
    )
