"""Levenberg-Marquardt least-squares training with validation early stopping.

One epoch is one full-batch LM iteration: solve (J'J + mu*I) d = -J'r, accept
the step only if the training MSE drops (then mu shrinks), otherwise grow mu
and retry within the epoch. The returned parameters are the ones with the
best validation MSE seen, including the starting point, so a warm-started
retraining run can never come back worse on validation than it began.

The damping defaults (mu0 1e-3, grow 10, shrink 0.1, cap 1e10, six
consecutive validation failures, gradient floor 1e-7) follow common
feed-forward toolbox practice; grid search exposes mu0 where a learning
rate would normally be swept, since LM itself has none.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .activation import PerturbMode, PerturbationConfig
from .network import Network, forward, init_network, jacobian, smooth_nafs_for

_MU_FLOOR = 1e-20


class TrainingDivergence(RuntimeError):
    """Residuals became non-finite at the starting point of a run."""


class StopReason(Enum):
    MAX_EPOCHS = "max-epochs"
    VALIDATION_FAILURES = "validation-failures"
    MU_OVERFLOW = "mu-overflow"
    GRADIENT_TOLERANCE = "gradient-tolerance"


@dataclass
class TrainConfig:
    max_epochs: int = 1000
    mu0: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_max: float = 1e10
    max_validation_failures: int = 6
    grad_tol: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.mu0 <= 0:
            raise ValueError("mu0 must be > 0")
        if self.mu_inc <= 1:
            raise ValueError("mu_inc must be > 1")
        if not 0 < self.mu_dec < 1:
            raise ValueError("mu_dec must be in (0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.max_validation_failures < 1:
            raise ValueError("max_validation_failures must be >= 1")


@dataclass
class TrainReport:
    """Per-epoch record of one training run (accepted epochs only)."""

    epochs_run: int
    train_mse_history: list[float]
    validation_mse_history: list[float]
    mu_history: list[float]
    stop_reason: StopReason
    best_epoch: int
    best_validation_mse: float
    initial_validation_mse: float
    warm_start: bool | None = None

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_mse", "val_mse", "mu", "accepted"])
            for i in range(self.epochs_run):
                writer.writerow(
                    [
                        i,
                        repr(self.train_mse_history[i]),
                        repr(self.validation_mse_history[i]),
                        repr(self.mu_history[i]),
                        1,
                    ]
                )


def lm_core(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    residual_jac_fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    theta0: np.ndarray,
    config: TrainConfig,
    validation_fn: Callable[[np.ndarray], float] | None = None,
) -> tuple[np.ndarray, TrainReport]:
    """Damped Gauss-Newton on a generic residual function.

    ``residual_fn`` evaluates residuals only (used for candidate steps);
    ``residual_jac_fn`` returns (residuals, Jacobian) at accepted points.
    With a ``validation_fn`` the best-validation parameters are returned and
    consecutive validation failures stop the run; without one the final
    accepted parameters are returned.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    r, J = residual_jac_fn(theta)
    if not np.all(np.isfinite(r)):
        raise TrainingDivergence("non-finite residuals at the starting parameters")
    mse = float(np.mean(r * r))
    mu = config.mu0

    initial_val = math.nan
    best_val = math.inf
    best_theta = theta.copy()
    best_epoch = -1
    val_failures = 0
    if validation_fn is not None:
        initial_val = float(validation_fn(theta))
        best_val = initial_val

    train_hist: list[float] = []
    val_hist: list[float] = []
    mu_hist: list[float] = []
    stop = StopReason.MAX_EPOCHS

    for epoch in range(config.max_epochs):
        g = J.T @ r
        if float(np.max(np.abs(g))) <= config.grad_tol:
            stop = StopReason.GRADIENT_TOLERANCE
            break
        H = J.T @ J
        eye = np.eye(H.shape[0])
        accepted = False
        while mu <= config.mu_max:
            try:
                factor = cho_factor(H + mu * eye, lower=True)
            except (LinAlgError, ValueError):
                # not positive definite at this mu, or overflowed entries
                mu *= config.mu_inc
                continue
            delta = cho_solve(factor, -g)
            candidate = theta + delta
            r_new = residual_fn(candidate)
            if np.all(np.isfinite(r_new)):
                mse_new = float(np.mean(r_new * r_new))
                if mse_new < mse:
                    theta = candidate
                    mse = mse_new
                    mu = max(mu * config.mu_dec, _MU_FLOOR)
                    accepted = True
                    break
            mu *= config.mu_inc
        if not accepted:
            stop = StopReason.MU_OVERFLOW
            break
        r, J = residual_jac_fn(theta)
        train_hist.append(mse)
        mu_hist.append(mu)
        if validation_fn is not None:
            vmse = float(validation_fn(theta))
            val_hist.append(vmse)
            if vmse < best_val:
                best_val = vmse
                best_theta = theta.copy()
                best_epoch = epoch
                val_failures = 0
            else:
                val_failures += 1
                if val_failures >= config.max_validation_failures:
                    stop = StopReason.VALIDATION_FAILURES
                    break
        else:
            val_hist.append(math.nan)
            best_theta = theta.copy()
            best_epoch = epoch

    report = TrainReport(
        epochs_run=len(train_hist),
        train_mse_history=train_hist,
        validation_mse_history=val_hist,
        mu_history=mu_hist,
        stop_reason=stop,
        best_epoch=best_epoch,
        best_validation_mse=best_val if validation_fn is not None else math.nan,
        initial_validation_mse=initial_val,
    )
    return best_theta, report


def train_lm(
    net: Network,
    train_X: np.ndarray,
    train_y: np.ndarray,
    val_X: np.ndarray,
    val_y: np.ndarray,
    config: TrainConfig,
) -> tuple[Network, TrainReport]:
    """Train a copy of ``net`` on scaled data; returns best-validation weights.

    Activations must be differentiable (clean or smooth-perturbed); recall
    noise never participates in training.
    """
    work = net.copy()
    train_y = np.asarray(train_y, dtype=float)
    val_y = np.asarray(val_y, dtype=float)

    def residual_fn(theta):
        work.set_flat_params(theta)
        try:
            return forward(work, train_X) - train_y
        except FloatingPointError:
            return np.full(train_y.shape, np.nan)

    def residual_jac_fn(theta):
        work.set_flat_params(theta)
        return jacobian(work, train_X, train_y)

    def validation_fn(theta):
        work.set_flat_params(theta)
        try:
            diff = forward(work, val_X) - val_y
        except FloatingPointError:
            return math.inf
        return float(np.mean(diff * diff))

    theta_best, report = lm_core(
        residual_fn, residual_jac_fn, net.get_flat_params(), config, validation_fn
    )
    work.set_flat_params(theta_best)
    return work, report


def retrain_with_realized_nafs(
    trained: Network,
    perturbation: PerturbationConfig,
    train_X: np.ndarray,
    train_y: np.ndarray,
    val_X: np.ndarray,
    val_y: np.ndarray,
    config: TrainConfig,
    warm_start: bool = True,
) -> tuple[Network, TrainReport]:
    """Re-optimize weights with one realized smooth activation per neuron.

    The perturbation seed is fixed, so every epoch sees the same activation
    shapes (as a printed circuit would). Warm-starting from the clean-trained
    parameters is the default; ``warm_start=False`` re-initializes from
    ``config.seed`` instead. The returned network carries its realized
    activations, ready for perturbed recall.
    """
    if perturbation.mode is not PerturbMode.SMOOTH_SHAPE:
        raise ValueError(
            f"retraining applies to smooth shape perturbations only, got {perturbation.mode.value}"
        )
    nafs = smooth_nafs_for(trained.architecture, perturbation)
    if warm_start:
        start = trained.with_nafs(nafs)
    else:
        start = init_network(trained.architecture, config.seed).with_nafs(nafs)
    retrained, report = train_lm(start, train_X, train_y, val_X, val_y, config)
    report.warm_start = warm_start
    return retrained, report


class UndefinedCorrelation(ValueError):
    """Pearson R is undefined because one of the vectors is constant."""


def pearson_r(a: np.ndarray, b: np.ndarray) -> float | None:
    """Sample correlation; None (not NaN) when either vector is constant."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da = a - a.mean()
    db = b - b.mean()
    sa = float(np.sqrt(np.sum(da * da)))
    sb = float(np.sqrt(np.sum(db * db)))
    if sa == 0.0 or sb == 0.0:
        return None
    return float(np.sum(da * db) / (sa * sb))


def evaluate(
    net: Network,
    X: np.ndarray,
    y: np.ndarray,
    noise: tuple[float, np.random.Generator] | None = None,
    target_scaling=None,
) -> tuple[float, float | None]:
    """(RMSE, Pearson R) of predictions against targets in original units.

    ``target_scaling`` (a features.ScalingParams) maps scaled-domain
    predictions back to target units before the metrics; pass None when the
    network was trained on unscaled targets.
    """
    y = np.asarray(y, dtype=float)
    pred = forward(net, X, noise=noise)
    if target_scaling is not None:
        pred = target_scaling.invert_target(pred)
    diff = pred - y
    rmse = float(np.sqrt(np.mean(diff * diff)))
    return rmse, pearson_r(pred, y)
