"""Dense feed-forward regression network with per-neuron activation functions.

Hidden neurons each own a NafInstance (clean or smooth-perturbed); the
output layer is affine (a weighted average of the last hidden layer plus a
bias), matching the summation stage of an analog circuit, and carries no
activation and no noise. Random recall noise is a forward-pass argument,
never network state, so gradients are always taken through deterministic
activations.

Parameter flattening order is fixed: layer by layer from the input side
(hidden layers, then the output layer), weights in row-major order followed
by that layer's biases. The Jacobian, serialization, and the trainer all
rely on this order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .activation import (
    NafInstance,
    NafKind,
    PerturbMode,
    PerturbationConfig,
    SmoothPerturbationTable,
    make_smooth_table,
)


@dataclass(frozen=True)
class Architecture:
    """Layer sizes: input width, hidden layer widths, output width (1 here)."""

    input_dim: int
    hidden_layers: tuple[int, ...]
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if len(self.hidden_layers) < 1 or any(h < 1 for h in self.hidden_layers):
            raise ValueError("need at least one hidden layer, all sizes >= 1")

    @property
    def total_hidden(self) -> int:
        return int(sum(self.hidden_layers))

    @property
    def n_layers(self) -> int:
        """Number of weight layers including the affine output layer."""
        return len(self.hidden_layers) + 1

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(n_out, n_in) per weight layer, output layer last."""
        dims = [self.input_dim, *self.hidden_layers, self.output_dim]
        return [(dims[i + 1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(o * i + o for o, i in self.layer_shapes())

    def label(self) -> str:
        """Bracketed hidden-layer sizes, e.g. ``[30]`` or ``[15 15]``."""
        return "[" + " ".join(str(h) for h in self.hidden_layers) + "]"


@dataclass
class Network:
    architecture: Architecture
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    nafs: list[NafInstance]

    def __post_init__(self):
        shapes = self.architecture.layer_shapes()
        if len(self.weights) != len(shapes) or len(self.biases) != len(shapes):
            raise ValueError("weight/bias layer count does not match architecture")
        for layer, ((o, i), w, b) in enumerate(zip(shapes, self.weights, self.biases)):
            if w.shape != (o, i):
                raise ValueError(f"layer {layer}: weight shape {w.shape}, expected {(o, i)}")
            if b.shape != (o,):
                raise ValueError(f"layer {layer}: bias shape {b.shape}, expected {(o,)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {layer}: non-finite parameters")
        if len(self.nafs) != self.architecture.total_hidden:
            raise ValueError(
                f"need one activation per hidden neuron: got {len(self.nafs)}, "
                f"expected {self.architecture.total_hidden}"
            )

    def copy(self) -> "Network":
        return Network(
            architecture=self.architecture,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            nafs=list(self.nafs),
        )

    @property
    def n_params(self) -> int:
        return self.architecture.n_params

    def get_flat_params(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_flat_params(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        pos = 0
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            k = w.size
            self.weights[layer] = theta[pos : pos + k].reshape(w.shape).copy()
            pos += k
            self.biases[layer] = theta[pos : pos + b.size].copy()
            pos += b.size

    def layer_nafs(self, layer: int) -> list[NafInstance]:
        start = sum(self.architecture.hidden_layers[:layer])
        return self.nafs[start : start + self.architecture.hidden_layers[layer]]

    def with_nafs(self, nafs: list[NafInstance]) -> "Network":
        net = self.copy()
        net.nafs = list(nafs)
        return net


def init_network(arch: Architecture, seed: int) -> Network:
    """Deterministic Nguyen-Widrow initialization, clean activations.

    Hidden layers assume inputs spanning [-1, 1] (scaled features for the
    first layer, sigmoid outputs after that); the output layer gets small
    uniform weights.
    """
    rng = np.random.default_rng(seed)
    shapes = arch.layer_shapes()
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for n_out, n_in in shapes[:-1]:
        raw = rng.uniform(-1.0, 1.0, size=(n_out, n_in))
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        norms[norms == 0.0] = 1.0
        beta = 0.7 * n_out ** (1.0 / n_in)
        w = beta * raw / norms
        if n_out > 1:
            signs = np.where(w[:, 0] >= 0.0, 1.0, -1.0)
            b = beta * np.linspace(-1.0, 1.0, n_out) * signs
        else:
            b = np.zeros(1)
        weights.append(w)
        biases.append(b)
    n_out, n_in = shapes[-1]
    weights.append(rng.uniform(-0.5, 0.5, size=(n_out, n_in)))
    biases.append(rng.uniform(-0.5, 0.5, size=n_out))
    nafs = [NafInstance.clean() for _ in range(arch.total_hidden)]
    return Network(architecture=arch, weights=weights, biases=biases, nafs=nafs)


def _activate(nafs: list[NafInstance], z: np.ndarray) -> np.ndarray:
    if all(naf.is_effectively_clean for naf in nafs):
        return np.tanh(z)
    a = np.empty_like(z)
    for j, naf in enumerate(nafs):
        a[:, j] = naf.evaluate(z[:, j])
    return a


def _activate_with_derivative(nafs, z):
    if all(naf.is_effectively_clean for naf in nafs):
        a = np.tanh(z)
        return a, 1.0 - a * a
    a = np.empty_like(z)
    da = np.empty_like(z)
    for j, naf in enumerate(nafs):
        a[:, j] = naf.evaluate(z[:, j])
        da[:, j] = naf.derivative(z[:, j])
    return a, da


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite {what}: network parameters have diverged")


def forward(net: Network, X: np.ndarray, noise: tuple[float, np.random.Generator] | None = None):
    """Predictions for a batch of scaled-domain feature rows.

    ``noise``, when given as (amplitude, rng), applies uniform recall noise
    to every hidden activation (fresh per sample, per neuron); the affine
    output stays noise-free. Returns a vector for output_dim 1, else a
    matrix.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    arch = net.architecture
    if X.shape[1] != arch.input_dim:
        raise ValueError(f"expected {arch.input_dim} feature columns, got {X.shape[1]}")
    amplitude = 0.0
    rng = None
    if noise is not None:
        amplitude, rng = noise
        if amplitude < 0:
            raise ValueError(f"noise amplitude must be >= 0, got {amplitude}")
    a = X
    with np.errstate(over="ignore", invalid="ignore"):
        for layer in range(len(arch.hidden_layers)):
            z = a @ net.weights[layer].T + net.biases[layer]
            _check_finite(z, f"pre-activation in hidden layer {layer}")
            a = _activate(net.layer_nafs(layer), z)
            if noise is not None and amplitude > 0.0:
                a = a + amplitude * (rng.random(a.shape) - 0.5)
        out = a @ net.weights[-1].T + net.biases[-1]
    _check_finite(out, "network output")
    return out[:, 0] if arch.output_dim == 1 else out


def jacobian(net: Network, X: np.ndarray, y: np.ndarray, noise=None):
    """Residuals r = prediction - y and J[i, k] = dr_i / dtheta_k.

    Reverse-mode recursion through the layers using each neuron's activation
    derivative; columns follow the fixed parameter flattening order. Random
    recall noise is not differentiable, so requesting it here is an error.
    """
    if noise is not None and noise[0] > 0.0:
        raise ValueError("cannot differentiate through random recall noise")
    arch = net.architecture
    if arch.output_dim != 1:
        raise ValueError("jacobian supports scalar-output networks only")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    if y.shape != (n,):
        raise ValueError(f"target shape {y.shape} does not match {n} samples")

    n_hidden = len(arch.hidden_layers)
    acts = [X]
    dacts = []
    a = X
    with np.errstate(over="ignore", invalid="ignore"):
        for layer in range(n_hidden):
            z = a @ net.weights[layer].T + net.biases[layer]
            _check_finite(z, f"pre-activation in hidden layer {layer}")
            a, da = _activate_with_derivative(net.layer_nafs(layer), z)
            acts.append(a)
            dacts.append(da)
        pred = (a @ net.weights[-1].T + net.biases[-1])[:, 0]
    _check_finite(pred, "network output")
    residuals = pred - y

    # dr/dz per hidden layer, back to front
    deltas: list[np.ndarray | None] = [None] * n_hidden
    deltas[n_hidden - 1] = net.weights[-1][0][None, :] * dacts[n_hidden - 1]
    for layer in range(n_hidden - 2, -1, -1):
        deltas[layer] = (deltas[layer + 1] @ net.weights[layer + 1]) * dacts[layer]

    J = np.empty((n, net.n_params))
    pos = 0
    for layer in range(n_hidden):
        d = deltas[layer]
        a_prev = acts[layer]
        k = d.shape[1] * a_prev.shape[1]
        J[:, pos : pos + k] = (d[:, :, None] * a_prev[:, None, :]).reshape(n, k)
        pos += k
        J[:, pos : pos + d.shape[1]] = d
        pos += d.shape[1]
    J[:, pos : pos + acts[-1].shape[1]] = acts[-1]
    pos += acts[-1].shape[1]
    J[:, pos] = 1.0
    return residuals, J


def smooth_nafs_for(arch: Architecture, config: PerturbationConfig) -> list[NafInstance]:
    """One realized smooth activation per hidden neuron, flat-indexed.

    Neuron ids run layer by layer from the input side; a fixed config seed
    therefore pins every activation shape in the network.
    """
    return [
        NafInstance.smooth(config.amplitude, make_smooth_table(config, i))
        for i in range(arch.total_hidden)
    ]


_FORMAT = "nafsim-network-v1"


def _table_to_dict(table: SmoothPerturbationTable) -> dict:
    if table.seed is not None and table.sigma is not None and table.neuron_id is not None:
        return {
            "recipe": {
                "seed": table.seed,
                "neuron_id": table.neuron_id,
                "sigma": table.sigma,
                "domain_lo": table.domain_lo,
                "domain_hi": table.domain_hi,
                "step": table.step,
            }
        }
    return {
        "embedded": {
            "xs": table.xs.tolist(),
            "values": table.values.tolist(),
            "derivative_values": table.derivative_values.tolist(),
        }
    }


def _table_from_dict(d: dict) -> SmoothPerturbationTable:
    if "recipe" in d:
        r = d["recipe"]
        config = PerturbationConfig(
            mode=PerturbMode.SMOOTH_SHAPE,
            amplitude=0.0,
            seed=int(r["seed"]),
            sigma=float(r["sigma"]),
            domain_lo=float(r["domain_lo"]),
            domain_hi=float(r["domain_hi"]),
            step=float(r["step"]),
        )
        return make_smooth_table(config, int(r["neuron_id"]))
    e = d["embedded"]
    return SmoothPerturbationTable(
        xs=np.asarray(e["xs"]),
        values=np.asarray(e["values"]),
        derivative_values=np.asarray(e["derivative_values"]),
    )


def _naf_to_dict(naf: NafInstance) -> dict:
    if naf.kind is NafKind.CLEAN:
        return {"kind": "clean"}
    return {
        "kind": "smooth-perturbed",
        "amplitude": naf.amplitude,
        "table": _table_to_dict(naf.table),
    }


def _naf_from_dict(d: dict) -> NafInstance:
    if d["kind"] == "clean":
        return NafInstance.clean()
    return NafInstance.smooth(float(d["amplitude"]), _table_from_dict(d["table"]))


def network_to_dict(net: Network) -> dict:
    return {
        "format": _FORMAT,
        "architecture": {
            "input_dim": net.architecture.input_dim,
            "hidden_layers": list(net.architecture.hidden_layers),
            "output_dim": net.architecture.output_dim,
        },
        "parameters": net.get_flat_params().tolist(),
        "nafs": [_naf_to_dict(naf) for naf in net.nafs],
    }


def network_from_dict(d: dict) -> Network:
    if d.get("format") != _FORMAT:
        raise ValueError(f"not a {_FORMAT} payload")
    a = d["architecture"]
    arch = Architecture(
        input_dim=int(a["input_dim"]),
        hidden_layers=tuple(a["hidden_layers"]),
        output_dim=int(a["output_dim"]),
    )
    net = init_network(arch, seed=0)
    net.set_flat_params(np.asarray(d["parameters"], dtype=float))
    net.nafs = [_naf_from_dict(nd) for nd in d["nafs"]]
    return net


def save_network(net: Network, path) -> None:
    """Self-describing JSON; float repr round-trips parameters bit-exactly."""
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1))


def load_network(path) -> Network:
    return network_from_dict(json.loads(Path(path).read_text()))
