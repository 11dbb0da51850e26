"""BP and DFA learning rules, the shared feedback bank, and the epoch loop.

Error convention: softmax cross-entropy with e = p - y per batch column,
so the output delta is the error itself. BP transports deltas through the
backend's transposed-read path layer by layer (re-quantizing at each hop
when an error quantizer is configured); DFA projects the once-quantized
output error straight to every hidden layer through fixed random slices
of one master feedback matrix.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .analog import Event
from .dataio import Dataset, batches
from .network import ForwardTrace, Mlp, activation_grad, forward, predict
from .numerics import Quantizer, check_matrix, derive_rng, matmul, quantize


class TrainerKind(str, enum.Enum):
    BP = "bp"
    DFA = "dfa"


@dataclass(frozen=True)
class HyperParams:
    """Training knobs; the optional quantizers enable fake-quantized runs."""

    learning_rate: float = 0.05
    batch_size: int = 128
    epochs: int = 25
    seed: int = 0
    weight_quantizer: Quantizer | None = None
    activation_quantizer: Quantizer | None = None
    error_quantizer: Quantizer | None = None
    gradient_quantizer: Quantizer | None = None
    # BP re-quantizes the transported delta at every layer by default;
    # toggling this off makes BP quantize the error once, like DFA.
    bp_requantize_error: bool = True

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


class FeedbackBank:
    """Fixed random feedback matrices as slices of one master array.

    master has shape (max hidden width x n_classes); layer i's matrix is
    the top slice master[:d_i, :]. The master is drawn once and frozen.
    """

    def __init__(self, master: np.ndarray, topology):
        self.master = np.array(master, dtype=np.float64)
        self.master.setflags(write=False)
        self.topology = topology
        hidden = topology.hidden_dims
        if hidden and (self.master.shape[0] < max(hidden)
                       or self.master.shape[1] != topology.n_classes):
            raise ValueError(
                f"master {self.master.shape} cannot cover hidden dims {hidden} "
                f"with {topology.n_classes} classes"
            )

    @classmethod
    def create(cls, topology, rng: np.random.Generator) -> "FeedbackBank":
        c = topology.n_classes
        width = max(topology.hidden_dims) if topology.hidden_dims else 0
        bound = 1.0 / np.sqrt(c)
        master = rng.uniform(-bound, bound, size=(width, c))
        return cls(master, topology)

    def layer_matrix(self, i: int) -> np.ndarray:
        """B_i for hidden layer i (1 <= i <= N-1): a view, never a copy."""
        if not (1 <= i < self.topology.n_layers):
            raise ValueError(f"no feedback matrix for layer {i}")
        return self.master[: self.topology.layer_dims[i], :]

    @property
    def mapped_cells(self) -> int:
        """Feedback cells mapped on-chip (shared slices of the master)."""
        return int(self.master.size)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=0, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=0, keepdims=True)


def output_error(logits, targets) -> np.ndarray:
    """e = softmax(logits) - targets, the output delta for cross-entropy."""
    logits = check_matrix(logits, "logits")
    targets = check_matrix(targets, "targets")
    if logits.shape != targets.shape:
        raise ValueError(f"shape mismatch: logits {logits.shape} vs targets {targets.shape}")
    return softmax(logits) - targets


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy over batch columns (labels are indices)."""
    z = logits - np.max(logits, axis=0, keepdims=True)
    log_p = z - np.log(np.sum(np.exp(z), axis=0, keepdims=True))
    return float(-np.mean(log_p[labels, np.arange(logits.shape[1])]))


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((n_classes, len(labels)))
    out[labels, np.arange(len(labels))] = 1.0
    return out


def bp_backward(trace: ForwardTrace, mlp: Mlp, e: np.ndarray, backend,
                error_quantizer: Quantizer | None = None,
                requantize: bool = True,
                rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Sequential error transport: delta_i = (W_{i+1}^T delta_{i+1}) * f'(a_i).

    Returns [delta_1, ..., delta_N]. The transposed product routes through
    the backend; with an error quantizer, delta_N = quantize(e) and each
    transported delta is re-quantized when `requantize` is on.
    """
    n = mlp.topology.n_layers
    act = mlp.topology.activation
    delta = e if error_quantizer is None else quantize(e, error_quantizer, rng)
    deltas = [delta]
    for i in range(n - 1, 0, -1):
        t = backend.matvec_t(i + 1, delta)
        delta = t * activation_grad(act, trace.pre[i - 1])
        if error_quantizer is not None and requantize:
            delta = quantize(delta, error_quantizer, rng)
        deltas.append(delta)
    deltas.reverse()
    return deltas


def dfa_backward(trace: ForwardTrace, bank: FeedbackBank, e: np.ndarray,
                 backend=None,
                 error_quantizer: Quantizer | None = None,
                 rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Direct projection: delta_i = (B_i e) * f'(a_i), independently per layer.

    The error is quantized once, before projection. The projection itself
    is exact digital arithmetic (it runs on the weight-gradient units, not
    on the crossbars), so the backend takes no part in the numerics.
    """
    n = bank.topology.n_layers
    act = bank.topology.activation
    e_q = e if error_quantizer is None else quantize(e, error_quantizer, rng)
    deltas = []
    for i in range(1, n):
        proj = matmul(bank.layer_matrix(i), e_q)
        deltas.append(proj * activation_grad(act, trace.pre[i - 1]))
    deltas.append(e_q)
    return deltas


def apply_updates(mlp: Mlp, deltas: list[np.ndarray], trace: ForwardTrace,
                  hp: HyperParams,
                  rng: np.random.Generator | None = None) -> Mlp:
    """One SGD step: W_i <- q_w(W_i - lr * q_g(delta_i h_{i-1}^T / batch)).

    Returns a new Mlp; the input is left untouched.
    """
    batch = trace.batch_size
    new_weights = []
    for i in range(1, mlp.topology.n_layers + 1):
        grad = (deltas[i - 1] @ trace.post[i - 1].T) / batch
        if hp.gradient_quantizer is not None:
            grad = quantize(grad, hp.gradient_quantizer, rng)
        w = mlp.weights[i - 1] - hp.learning_rate * grad
        if hp.weight_quantizer is not None:
            w = quantize(w, hp.weight_quantizer, rng)
        new_weights.append(w)
    return Mlp(mlp.topology, new_weights)


@dataclass
class HistoryRow:
    epoch: int
    split: str
    loss: float
    accuracy: float
    wall_seconds: float


@dataclass
class TrainingHistory:
    rows: list[HistoryRow] = field(default_factory=list)
    diverged: bool = False

    def final(self, split: str) -> HistoryRow | None:
        for row in reversed(self.rows):
            if row.split == split:
                return row
        return None

    def series(self, split: str, metric: str = "accuracy") -> list[float]:
        return [getattr(r, metric) for r in self.rows if r.split == split]


HISTORY_COLUMNS = ("epoch", "split", "loss", "accuracy", "wall_seconds")


def write_history_csv(history: TrainingHistory, path, measured_wall: bool = False) -> None:
    """Emit the per-epoch history table.

    Wall timing is inherently non-reproducible, so the default writes 0.0
    in that column to keep artifacts byte-identical across repeated runs
    (measured values live in the run manifest); pass measured_wall=True
    to record them here instead.
    """
    with open(path, "w", newline="") as f:
        f.write(",".join(HISTORY_COLUMNS) + "\n")
        for r in history.rows:
            wall = r.wall_seconds if measured_wall else 0.0
            f.write(f"{r.epoch},{r.split},{r.loss:.10g},{r.accuracy:.10g},{wall:.10g}\n")


def evaluate(mlp: Mlp, backend, ds: Dataset, hp: HyperParams) -> tuple[float, float]:
    """Loss and accuracy on a dataset, with cost events muted."""
    was_enabled = backend.bus.enabled
    backend.bus.enabled = False
    try:
        trace = forward(mlp, ds.images, backend,
                        activation_quantizer=hp.activation_quantizer)
        loss = cross_entropy(trace.logits, ds.labels)
        acc = float(np.mean(predict(trace) == ds.labels))
    finally:
        backend.bus.enabled = was_enabled
    return loss, acc


def train(mlp: Mlp, data: tuple[Dataset, Dataset | None], hp: HyperParams,
          kind: TrainerKind, backend, observers: tuple = (),
          bank: FeedbackBank | None = None) -> tuple[Mlp, TrainingHistory, FeedbackBank | None]:
    """Epoch loop over seeded shuffled batches; deterministic given hp.seed.

    Observers receive every forward read, transposed read, program write
    and gradient-compute event. A non-finite loss stops training with the
    history flagged as diverged.
    """
    kind = TrainerKind(kind)
    train_ds, test_ds = data
    topo = mlp.topology
    n = topo.n_layers
    c = topo.n_classes

    shuffle_rng = derive_rng(hp.seed, "shuffle")
    quant_rng = derive_rng(hp.seed, "quant")
    if kind is TrainerKind.DFA and bank is None:
        bank = FeedbackBank.create(topo, derive_rng(hp.seed, "feedback"))

    bus = backend.bus
    for obs in observers:
        bus.observers.append(obs)
    try:
        for i, w in enumerate(mlp.weights, start=1):
            backend.program(i, w)

        history = TrainingHistory()
        t0 = time.perf_counter()
        for epoch in range(1, hp.epochs + 1):
            losses, hits, seen = [], 0, 0
            for xb, yb in batches(train_ds, hp.batch_size, shuffle_rng):
                trace = forward(mlp, xb, backend,
                                activation_quantizer=hp.activation_quantizer,
                                rng=quant_rng)
                loss = cross_entropy(trace.logits, yb)
                if not np.isfinite(loss):
                    history.diverged = True
                    return mlp, history, bank
                losses.append(loss * xb.shape[1])
                hits += int(np.sum(predict(trace) == yb))
                seen += xb.shape[1]

                e = output_error(trace.logits, one_hot(yb, c))
                if kind is TrainerKind.BP:
                    deltas = bp_backward(trace, mlp, e, backend,
                                         error_quantizer=hp.error_quantizer,
                                         requantize=hp.bp_requantize_error,
                                         rng=quant_rng)
                else:
                    deltas = dfa_backward(trace, bank, e,
                                          error_quantizer=hp.error_quantizer,
                                          rng=quant_rng)
                    for i in range(1, n):
                        d = topo.layer_dims[i]
                        bus.emit(Event("gradient_compute", i, d, c, 1,
                                       vectors=xb.shape[1], macs=d * c * xb.shape[1]))
                for i in range(1, n + 1):
                    d_out, d_in = topo.weight_shape(i)
                    bus.emit(Event("gradient_compute", i, d_out, d_in, 1,
                                   vectors=xb.shape[1], macs=d_out * d_in * xb.shape[1]))

                try:
                    mlp = apply_updates(mlp, deltas, trace, hp, rng=quant_rng)
                except ValueError:
                    # non-finite weights: numeric blow-up, same terminal event
                    history.diverged = True
                    return mlp, history, bank
                for i, w in enumerate(mlp.weights, start=1):
                    backend.program(i, w)

            wall = time.perf_counter() - t0
            train_loss = float(np.sum(losses) / seen)
            history.rows.append(HistoryRow(epoch, "train", train_loss, hits / seen, wall))
            if test_ds is not None:
                test_loss, test_acc = evaluate(mlp, backend, test_ds, hp)
                history.rows.append(
                    HistoryRow(epoch, "test", test_loss, test_acc,
                               time.perf_counter() - t0))
        return mlp, history, bank
    finally:
        for obs in observers:
            bus.observers.remove(obs)
