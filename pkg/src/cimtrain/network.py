"""Fully connected network: topology, init, forward pass, checkpoints.

Networks carry no bias terms; layer i computes a_i = W_i h_{i-1} through
a pluggable compute backend, with h_i = f(a_i) for hidden layers and the
last pre-activation serving as logits.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import Quantizer, check_matrix, quantize

ACTIVATIONS = ("relu", "tanh")

CHECKPOINT_MAGIC = b"CIMTRAIN1"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Topology:
    """Layer dimensions [d_0, ..., d_N] (input, hidden..., classes) and activation."""

    layer_dims: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValueError("topology needs at least one weight layer (>= 2 dims)")
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer dims must be >= 1, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_dims) - 1

    @property
    def n_classes(self) -> int:
        return self.layer_dims[-1]

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return self.layer_dims[1:-1]

    def weight_shape(self, i: int) -> tuple[int, int]:
        """Shape of W_i (1-based layer index): d_i x d_{i-1}."""
        return (self.layer_dims[i], self.layer_dims[i - 1])


@dataclass
class Mlp:
    """Network parameters: weights[i-1] is W_i with shape d_i x d_{i-1}."""

    topology: Topology
    weights: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != self.topology.n_layers:
            raise ValueError("weight count does not match topology depth")
        for i, w in enumerate(self.weights, start=1):
            w = check_matrix(w, f"W_{i}")
            if w.shape != self.topology.weight_shape(i):
                raise ValueError(
                    f"W_{i} has shape {w.shape}, expected {self.topology.weight_shape(i)}"
                )
            self.weights[i - 1] = w


@dataclass
class ForwardTrace:
    """Per-layer record of a forward pass over one batch (columns = samples).

    pre[i-1] is a_i; post[i] is h_i with post[0] the input; logits = a_N.
    """

    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def logits(self) -> np.ndarray:
        return self.pre[-1]

    @property
    def batch_size(self) -> int:
        return self.post[0].shape[1]


def activation_fn(name: str, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(a, 0.0)
    return np.tanh(a)


def activation_grad(name: str, a: np.ndarray) -> np.ndarray:
    """f'(a); the ReLU subgradient at exactly 0 is defined as 0."""
    if name == "relu":
        return (a > 0.0).astype(np.float64)
    t = np.tanh(a)
    return 1.0 - t * t


def xavier_init(topology: Topology, rng: np.random.Generator) -> Mlp:
    """Uniform Xavier init: W_i ~ U(+-sqrt(6/(d_i + d_{i-1})))."""
    weights = []
    for i in range(1, topology.n_layers + 1):
        d_out, d_in = topology.weight_shape(i)
        bound = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-bound, bound, size=(d_out, d_in)))
    return Mlp(topology, weights)


def forward(mlp: Mlp, x: np.ndarray, backend, activation_quantizer: Quantizer | None = None,
            rng: np.random.Generator | None = None) -> ForwardTrace:
    """Run the network on a batch (d_0 x batch) via the backend's matvec.

    The optional activation quantizer is applied to each hidden h_i.
    """
    x = check_matrix(x, "input")
    if x.shape[0] != mlp.topology.layer_dims[0]:
        raise ValueError(
            f"input has {x.shape[0]} features, topology expects {mlp.topology.layer_dims[0]}"
        )
    backend.ensure_programmed(mlp)
    pre, post = [], [x]
    h = x
    for i in range(1, mlp.topology.n_layers + 1):
        a = backend.matvec(i, h)
        pre.append(a)
        if i < mlp.topology.n_layers:
            h = activation_fn(mlp.topology.activation, a)
            if activation_quantizer is not None:
                h = quantize(h, activation_quantizer, rng)
            post.append(h)
    return ForwardTrace(pre=pre, post=post)


def predict(trace: ForwardTrace) -> np.ndarray:
    """Class index per batch column (argmax over logits; ties to lowest index)."""
    return np.argmax(trace.logits, axis=0)


def save_checkpoint(path, mlp: Mlp, feedback_master: np.ndarray | None = None) -> None:
    """Write a versioned binary checkpoint (little-endian float64 payload)."""
    act_code = ACTIVATIONS.index(mlp.topology.activation)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IB", CHECKPOINT_VERSION, act_code))
        dims = mlp.topology.layer_dims
        f.write(struct.pack("<I", len(dims)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        for w in mlp.weights:
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        if feedback_master is None:
            f.write(struct.pack("<B", 0))
        else:
            f.write(struct.pack("<BII", 1, feedback_master.shape[0], feedback_master.shape[1]))
            f.write(np.ascontiguousarray(feedback_master, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Mlp, np.ndarray | None]:
    """Read a checkpoint written by save_checkpoint."""
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic: {magic!r}")
        version, act_code = struct.unpack("<IB", f.read(5))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (n_dims,) = struct.unpack("<I", f.read(4))
        dims = struct.unpack(f"<{n_dims}I", f.read(4 * n_dims))
        topology = Topology(dims, ACTIVATIONS[act_code])
        weights = []
        for i in range(1, topology.n_layers + 1):
            d_out, d_in = topology.weight_shape(i)
            buf = f.read(8 * d_out * d_in)
            if len(buf) != 8 * d_out * d_in:
                raise ValueError("truncated checkpoint")
            weights.append(np.frombuffer(buf, dtype="<f8").reshape(d_out, d_in).copy())
        (has_bank,) = struct.unpack("<B", f.read(1))
        master = None
        if has_bank:
            rows, cols = struct.unpack("<II", f.read(8))
            buf = f.read(8 * rows * cols)
            if len(buf) != 8 * rows * cols:
                raise ValueError("truncated checkpoint")
            master = np.frombuffer(buf, dtype="<f8").reshape(rows, cols).copy()
    return Mlp(topology, weights), master
