"""Minimal fully connected network core in numpy.

Layers are affine maps followed by an activation (relu or linear). Batches
are row-major: ``X`` has shape (n_samples, in_dim) and each layer computes
``X @ W.T + b`` with ``W`` of shape (out_dim, in_dim).

Anything that exposes ``arrays()``, ``predict(*xs)``, ``loss_and_grads(xs, y)``
and ``copy()`` can be trained with :func:`train`; :class:`NetworkParams` is the
single-input case.
"""

import json
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError, LoadError, TrainingError
from .metrics import ccc, mse

ACTIVATIONS = ("relu", "linear")


@dataclass(frozen=True)
class DenseLayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise InputError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise InputError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class NetworkSpec:
    layers: Tuple[DenseLayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InputError("a network needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise InputError(
                    f"layer chain broken: {prev.out_dim} outputs feed {nxt.in_dim} inputs"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def to_dict(self):
        return {"layers": [[l.in_dim, l.out_dim, l.activation] for l in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(DenseLayerSpec(int(i), int(o), a) for i, o, a in d["layers"]))


def mlp_spec(input_dim: int, hidden: Sequence[int], output_dim: int = 1,
             hidden_activation: str = "relu",
             output_activation: str = "linear") -> NetworkSpec:
    """Stack of hidden layers followed by an output layer."""
    dims = [input_dim, *hidden]
    layers = [DenseLayerSpec(a, b, hidden_activation) for a, b in zip(dims, dims[1:])]
    layers.append(DenseLayerSpec(dims[-1], output_dim, output_activation))
    return NetworkSpec(tuple(layers))


def stack_spec(input_dim: int, widths: Sequence[int], activation: str = "relu") -> NetworkSpec:
    """Stack of layers sharing one activation (no separate output layer)."""
    dims = [input_dim, *widths]
    return NetworkSpec(tuple(DenseLayerSpec(a, b, activation) for a, b in zip(dims, dims[1:])))


class NetworkParams:
    """Weights and biases of a :class:`NetworkSpec`."""

    kind = "mlp"

    def __init__(self, spec: NetworkSpec, weights, biases):
        self.spec = spec
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        if len(self.weights) != len(spec.layers) or len(self.biases) != len(spec.layers):
            raise InputError("parameter count does not match the layer count")
        for i, (layer, w, b) in enumerate(zip(spec.layers, self.weights, self.biases)):
            if w.shape != (layer.out_dim, layer.in_dim) or b.shape != (layer.out_dim,):
                raise InputError(
                    f"layer {i}: expected W {(layer.out_dim, layer.in_dim)} and "
                    f"b {(layer.out_dim,)}, got {w.shape} and {b.shape}"
                )

    def arrays(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.spec, [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases])

    def predict(self, x) -> np.ndarray:
        out = forward(self, x)
        return out[..., 0] if self.spec.out_dim == 1 else out

    def loss_and_grads(self, xs, y):
        (x,) = xs
        return backward(self, x, y)

    def header(self):
        return {"kind": self.kind, "spec": self.spec.to_dict()}

    @classmethod
    def from_arrays(cls, spec: NetworkSpec, arrays) -> "NetworkParams":
        arrays = list(arrays)
        return cls(spec, arrays[0::2], arrays[1::2])


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> NetworkParams:
    """Fan-in scaled uniform weights (He-uniform), zero biases."""
    weights, biases = [], []
    for layer in spec.layers:
        limit = np.sqrt(6.0 / layer.in_dim)
        weights.append(rng.uniform(-limit, limit, size=(layer.out_dim, layer.in_dim)))
        biases.append(np.zeros(layer.out_dim))
    return NetworkParams(spec, weights, biases)


def _activate(z, activation):
    return np.maximum(z, 0.0) if activation == "relu" else z


def _check_input(params, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.spec.in_dim:
        raise InputError(
            f"input has shape {x.shape}; expected last dimension {params.spec.in_dim}"
        )
    return x


def forward(params: NetworkParams, x) -> np.ndarray:
    """Output for a single vector (in_dim,) or a batch (n, in_dim)."""
    a = _check_input(params, x)
    for layer, w, b in zip(params.spec.layers, params.weights, params.biases):
        a = _activate(a @ w.T + b, layer.activation)
    return a


def forward_cached(params: NetworkParams, x):
    """Batch forward pass that also returns each layer's input and pre-activation."""
    a = np.atleast_2d(_check_input(params, x))
    cache = []
    for layer, w, b in zip(params.spec.layers, params.weights, params.biases):
        z = a @ w.T + b
        cache.append((a, z))
        a = _activate(z, layer.activation)
    return a, cache


def backprop(params: NetworkParams, cache, d_out, input_grad=True):
    """Propagate ``d_out`` (dLoss/dOutput) back through the cached pass.

    Returns the parameter gradients in ``arrays()`` order and dLoss/dInput
    (None when ``input_grad`` is false).
    """
    grads = [None] * (2 * len(params.weights))
    delta = d_out
    for i in reversed(range(len(params.weights))):
        a_in, z = cache[i]
        if params.spec.layers[i].activation == "relu":
            delta = delta * (z > 0.0)
        grads[2 * i] = delta.T @ a_in
        grads[2 * i + 1] = delta.sum(axis=0)
        if i == 0 and not input_grad:
            return grads, None
        delta = delta @ params.weights[i]
    return grads, delta


def mse_output_grad(out, y):
    """MSE over all output elements and its gradient w.r.t. ``out``."""
    y = np.asarray(y, dtype=np.float64)
    if y.size != out.size:
        raise InputError(f"{y.size} targets for {out.size} outputs")
    y = y.reshape(out.shape)
    resid = out - y
    loss = float(np.mean(resid * resid))
    return loss, (2.0 / resid.size) * resid


def backward(params: NetworkParams, x, y):
    """MSE loss on the batch and its gradients, ``[dW0, db0, dW1, db1, ...]``."""
    x = np.atleast_2d(_check_input(params, x))
    if x.shape[0] == 0:
        raise InputError("empty batch")
    out, cache = forward_cached(params, x)
    loss, d_out = mse_output_grad(out, y)
    grads, _ = backprop(params, cache, d_out, input_grad=False)
    return loss, grads


# -- optimisation -------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    rng_seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate < 0:
            raise InputError("learning rate must be non-negative")
        if self.epochs <= 0 or self.batch_size <= 0:
            raise InputError("epochs and batch size must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise InputError(f"unknown optimizer {self.optimizer!r}")


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg.learning_rate) if cfg.optimizer == "adam" else SGD(cfg.learning_rate)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    dev_loss: float
    dev_ccc: float


@dataclass
class Checkpoint:
    best_params: object
    best_epoch: int
    best_dev_ccc: float
    best_dev_loss: float
    monitor: str = "ccc"
    log: List[EpochRecord] = field(default_factory=list)


def _rows(xs, idx):
    return tuple(x[idx] for x in xs)


def train(model, train_data, dev_data, cfg: TrainConfig, monitor: str = "ccc") -> Checkpoint:
    """Mini-batch training with best-epoch selection on the dev set.

    ``train_data`` and ``dev_data`` are ``(xs, y)`` pairs where ``xs`` is a
    tuple of input matrices sharing their first axis. ``model`` is updated in
    place; the returned checkpoint holds a copy of the best epoch's weights.
    Shuffling is driven by ``cfg.rng_seed`` only.
    """
    if monitor not in ("ccc", "loss"):
        raise InputError(f"monitor must be 'ccc' or 'loss', got {monitor!r}")
    train_xs, train_y = tuple(train_data[0]), np.asarray(train_data[1], dtype=np.float64)
    dev_xs, dev_y = tuple(dev_data[0]), np.asarray(dev_data[1], dtype=np.float64)
    n = train_y.shape[0]
    if n == 0 or dev_y.shape[0] == 0:
        raise InputError("train and dev sets must be non-empty")
    if any(x.shape[0] != n for x in train_xs) or any(x.shape[0] != dev_y.shape[0] for x in dev_xs):
        raise InputError("inputs and targets disagree on the number of samples")

    rng = np.random.default_rng(cfg.rng_seed)
    opt = make_optimizer(cfg)
    params = model.arrays()
    log = []
    best = None
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = model.loss_and_grads(_rows(train_xs, idx), train_y[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss in epoch {epoch}", epoch)
            opt.step(params, grads)
        train_pred = model.predict(*train_xs)
        dev_pred = model.predict(*dev_xs)
        if not (np.all(np.isfinite(train_pred)) and np.all(np.isfinite(dev_pred))):
            raise TrainingError(f"training diverged in epoch {epoch}", epoch)
        train_mse = mse(train_pred, train_y)
        rec = EpochRecord(epoch, train_mse, mse(dev_pred, dev_y), ccc(dev_pred, dev_y))
        log.append(rec)
        if best is None or _improves(rec, best[0], monitor):
            best = (rec, model.copy())
    rec, params_copy = best
    return Checkpoint(params_copy, rec.epoch, rec.dev_ccc, rec.dev_loss, monitor, log)


def _improves(rec, incumbent, monitor):
    if monitor == "ccc":
        return rec.dev_ccc > incumbent.dev_ccc
    return rec.dev_loss < incumbent.dev_loss


# -- checkpoint files ---------------------------------------------------------
#
# Layout: the 8-byte magic b"MMFCKPT1", a little-endian uint64 header length,
# a UTF-8 JSON header, then every array as raw little-endian float64 in C
# order. The header's "arrays" entry lists the shapes in file order.

MAGIC = b"MMFCKPT1"


def write_checkpoint(path, header: dict, arrays: Sequence[np.ndarray]) -> None:
    header = dict(header)
    header["arrays"] = [list(a.shape) for a in arrays]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Return ``(header, arrays)`` from a file written by :func:`write_checkpoint`."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise LoadError(f"{path}: {exc.strerror}") from exc
    if data[:8] != MAGIC:
        raise LoadError(f"{path}: not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    arrays = []
    for shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise LoadError(f"{path}: truncated array data")
        arrays.append(np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape))
        offset = end
    if offset != len(data):
        raise LoadError(f"{path}: {len(data) - offset} trailing bytes")
    return header, arrays


def checkpoint_header(ckpt: Checkpoint, extra: Optional[dict] = None) -> dict:
    header = ckpt.best_params.header()
    header.update({
        "best_epoch": ckpt.best_epoch,
        "best_dev_ccc": ckpt.best_dev_ccc,
        "best_dev_loss": ckpt.best_dev_loss,
        "monitor": ckpt.monitor,
    })
    if extra:
        header.update(extra)
    return header
