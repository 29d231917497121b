"""Neuron activation functions and their analog-circuit perturbations.

Three evaluation regimes for a hidden neuron's transfer function:

* clean: the analytic tanh sigmoid, evaluated directly (never tabulated);
* random recall noise: additive uniform noise ``amplitude * (r - 0.5)``
  drawn fresh per evaluation, applied only at recall time;
* smooth shape perturbation: additive ``amplitude * (rands(x) - 0.5)``
  where ``rands`` is a seeded, Gaussian-smoothed random function with
  values spanning exactly [0, 1], realized once per neuron as a lookup
  table with derivative access.

Tables are pure functions of (seed, neuron_id, sigma, domain, step) and
are bit-identical across process restarts, so a retraining run can use
exactly the realized activation shapes of a simulated (or measured)
circuit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d


class PerturbMode(Enum):
    NONE = "none"
    RANDOM_NOISE = "random-noise"
    SMOOTH_SHAPE = "smooth-shape"


class NafKind(Enum):
    CLEAN = "clean"
    SMOOTH_PERTURBED = "smooth-perturbed"


class TableError(ValueError):
    """A smooth-table configuration or serialized table is invalid."""


def eval_clean(x):
    """Hyperbolic-tangent sigmoid (e^x - e^-x)/(e^x + e^-x).

    Saturates to +-1 for large |x| without overflow; NaN propagates.
    """
    return np.tanh(x)


def eval_clean_derivative(x):
    """Derivative of the clean sigmoid, 1 - tanh(x)^2.

    Non-negative for all finite x, decaying to 0 at saturation.
    """
    y = np.tanh(x)
    return 1.0 - y * y


@dataclass(frozen=True)
class PerturbationConfig:
    """How to perturb activation functions at recall (and retraining) time.

    ``sigma``, the Gaussian smoothing width of the smooth-shape mode, is
    expressed in pre-activation units; the 0.2 default is one tenth of the
    length-2 span of inputs scaled on [-1, 1].
    """

    mode: PerturbMode
    amplitude: float
    seed: int
    sigma: float = 0.2
    domain_lo: float = -10.0
    domain_hi: float = 10.0
    step: float = 0.01

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.domain_lo < self.domain_hi:
            raise ValueError(
                f"domain_lo must be < domain_hi, got [{self.domain_lo}, {self.domain_hi}]"
            )
        if self.step <= 0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True, eq=False)
class SmoothPerturbationTable:
    """One realized smooth random function on a monotone grid.

    ``values`` span exactly [0, 1] (min 0, max 1 after the affine rescale);
    ``derivative_values`` hold d(values)/dx on the same grid. ``seed`` /
    ``neuron_id`` / ``sigma`` record the construction recipe when the table
    was generated here; they are ``None`` for tables loaded from a measured
    CSV.
    """

    xs: np.ndarray
    values: np.ndarray
    derivative_values: np.ndarray
    seed: int | None = None
    neuron_id: int | None = None
    sigma: float | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        dvals = np.asarray(self.derivative_values, dtype=float)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "derivative_values", dvals)
        n = xs.shape[0]
        if n < 2:
            raise TableError(f"table needs at least 2 grid points, got {n}")
        if vals.shape != (n,) or dvals.shape != (n,):
            raise TableError(
                f"inconsistent table lengths: xs {n}, values {vals.shape}, "
                f"derivative_values {dvals.shape}"
            )
        if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(vals)) and np.all(np.isfinite(dvals))):
            raise TableError("table contains non-finite entries")
        if not np.all(np.diff(xs) > 0):
            raise TableError("table grid must be strictly increasing")
        if vals.min() != 0.0 or vals.max() != 1.0:
            raise TableError(
                f"table values must span [0, 1] exactly, got "
                f"[{vals.min()}, {vals.max()}]"
            )

    @property
    def domain_lo(self) -> float:
        return float(self.xs[0])

    @property
    def domain_hi(self) -> float:
        return float(self.xs[-1])

    @property
    def step(self) -> float:
        return float((self.xs[-1] - self.xs[0]) / (self.xs.shape[0] - 1))

    @property
    def n_points(self) -> int:
        return int(self.xs.shape[0])


def make_smooth_table(config: PerturbationConfig, neuron_id: int) -> SmoothPerturbationTable:
    """Realize one neuron's smooth perturbation function from its seed.

    Draws i.i.d. uniform [0, 1] samples on the configured grid from a stream
    keyed by (config.seed, neuron_id), smooths them with a normalized
    Gaussian kernel (truncated at 4 sigma, reflected boundaries), then
    rescales affinely so the values span [0, 1] exactly. The derivative
    table comes from the analytic Gaussian-derivative kernel with the same
    affine scale factor, so it is the derivative of the smoothed signal,
    not a finite difference of the table.

    Distinct neuron_id values give statistically independent tables;
    identical arguments give bit-identical tables across process restarts.
    """
    if config.mode is not PerturbMode.SMOOTH_SHAPE:
        raise TableError(f"smooth tables require mode=smooth-shape, got {config.mode.value}")
    if neuron_id < 0:
        raise TableError(f"neuron_id must be non-negative, got {neuron_id}")
    span = config.domain_hi - config.domain_lo
    n = int(round(span / config.step)) + 1
    if n < 2:
        raise TableError(
            f"grid [{config.domain_lo}, {config.domain_hi}] with step {config.step} "
            f"has fewer than 2 points"
        )
    if config.sigma < config.step:
        raise TableError(
            f"sigma {config.sigma} < step {config.step}: table would be undersmoothed"
        )
    rng = np.random.default_rng([config.seed, neuron_id])
    raw = rng.random(n)
    sigma_pts = config.sigma / config.step
    smoothed = gaussian_filter1d(raw, sigma_pts, mode="reflect", truncate=4.0)
    lo = smoothed.min()
    scale = smoothed.max() - lo
    if scale == 0.0:
        raise TableError("smoothed samples are constant; cannot rescale to [0, 1]")
    values = (smoothed - lo) / scale
    d_per_index = gaussian_filter1d(raw, sigma_pts, order=1, mode="reflect", truncate=4.0)
    derivative_values = d_per_index / (config.step * scale)
    xs = np.linspace(config.domain_lo, config.domain_hi, n)
    return SmoothPerturbationTable(
        xs=xs,
        values=values,
        derivative_values=derivative_values,
        seed=config.seed,
        neuron_id=neuron_id,
        sigma=config.sigma,
    )


@dataclass(frozen=True, eq=False)
class NafInstance:
    """One neuron's activation function: clean, or clean plus a realized shape.

    Evaluation is pure and deterministic. At amplitude 0 both kinds are
    bit-identical to the clean sigmoid.
    """

    kind: NafKind = NafKind.CLEAN
    amplitude: float = 0.0
    table: SmoothPerturbationTable | None = None

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if self.kind is NafKind.SMOOTH_PERTURBED and self.table is None:
            raise ValueError("smooth-perturbed activation requires a table")

    @classmethod
    def clean(cls) -> "NafInstance":
        return cls(NafKind.CLEAN)

    @classmethod
    def smooth(cls, amplitude: float, table: SmoothPerturbationTable) -> "NafInstance":
        return cls(NafKind.SMOOTH_PERTURBED, amplitude, table)

    @property
    def is_effectively_clean(self) -> bool:
        return self.kind is NafKind.CLEAN or self.amplitude == 0.0

    def evaluate(self, x):
        """Activation value; perturbation interpolated linearly, clamped outside the grid."""
        base = eval_clean(x)
        if self.is_effectively_clean:
            return base
        t = self.table
        return base + self.amplitude * (np.interp(x, t.xs, t.values) - 0.5)

    def derivative(self, x):
        """Activation slope; zero perturbation slope outside the grid (clamped region)."""
        base = eval_clean_derivative(x)
        if self.is_effectively_clean:
            return base
        t = self.table
        pert = np.interp(x, t.xs, t.derivative_values)
        inside = (np.asarray(x) >= t.xs[0]) & (np.asarray(x) <= t.xs[-1])
        return base + self.amplitude * np.where(inside, pert, 0.0)


def apply_recall_noise(y_clean, amplitude: float, rng: np.random.Generator):
    """Add uniform recall noise amplitude*(r - 0.5), fresh per element.

    Each element models one neuron-activation evaluation on one sample; the
    caller owns the stream exclusively. Returns a copy; amplitude 0 copies
    the input bit-exactly without consuming the stream.
    """
    if amplitude < 0:
        raise ValueError(f"amplitude must be >= 0, got {amplitude}")
    y = np.asarray(y_clean, dtype=float)
    if amplitude == 0.0:
        return y.copy()
    return y + amplitude * (rng.random(y.shape) - 0.5)


_TABLE_HEADER = ["x", "rands", "drands_dx"]


def save_table_csv(table: SmoothPerturbationTable, path) -> None:
    """Write a table as CSV (columns x, rands, drands_dx) at full precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_TABLE_HEADER)
        for x, v, d in zip(table.xs, table.values, table.derivative_values):
            writer.writerow([repr(float(x)), repr(float(v)), repr(float(d))])


def load_table_csv(path, normalize: bool = False) -> SmoothPerturbationTable:
    """Load a table from CSV; accepts any strictly monotone x grid.

    This is the ingestion path for measured transfer curves. With
    ``normalize=True`` the values are affinely rescaled to span [0, 1]
    (derivatives scaled consistently); otherwise the stored values must
    already satisfy the table invariants.
    """
    path = Path(path)
    xs, vals, dvals = [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != _TABLE_HEADER:
            raise TableError(f"{path}: expected header {','.join(_TABLE_HEADER)}")
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TableError(f"{path}:{i}: expected 3 columns, got {len(row)}")
            try:
                xs.append(float(row[0]))
                vals.append(float(row[1]))
                dvals.append(float(row[2]))
            except ValueError as exc:
                raise TableError(f"{path}:{i}: {exc}") from None
    xs = np.asarray(xs)
    vals = np.asarray(vals)
    dvals = np.asarray(dvals)
    if normalize and vals.size:
        lo = vals.min()
        scale = vals.max() - lo
        if scale == 0.0:
            raise TableError(f"{path}: constant values cannot be normalized")
        vals = (vals - lo) / scale
        dvals = dvals / scale
    return SmoothPerturbationTable(xs=xs, values=vals, derivative_values=dvals)
