"""Minimal dense neural-network engine with mask-aware training.

Everything is float64 numpy. The same stack serves both the model being
pruned (softmax cross-entropy head) and the agent's Q-network (identity
head with a squared-error loss built on top of `forward_cached` +
`backprop_from_logits`).

Masks are binary arrays shaped like the weights. The invariant maintained
by every mutating operation here is: wherever mask == 0, the weight is
exactly 0.0. Gradients are *reported* unmasked; `sgd_step` is the one
place that zeroes them, so finite-difference checks see the raw chain rule.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError, DimensionError, NumericError

ACTIVATIONS = ("relu", "identity")

DEFAULT_BATCH = 32
DEFAULT_LR = 0.05


@dataclass
class DenseLayer:
    """One fully connected layer: y = act(W x + b), W masked."""

    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    mask: np.ndarray  # (out, in), entries in {0.0, 1.0}
    activation: str  # "relu" | "identity"

    @classmethod
    def init(cls, rng: np.random.Generator, n_in: int, n_out: int, activation: str) -> "DenseLayer":
        scale = np.sqrt(2.0 / n_in)
        return cls(
            weights=rng.normal(0.0, scale, size=(n_out, n_in)),
            bias=np.zeros(n_out),
            mask=np.ones((n_out, n_in)),
            activation=activation,
        )

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.mask.copy(), self.activation)

    def validate(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.weights.shape != self.mask.shape:
            raise DimensionError("mask shape differs from weight shape")
        if self.bias.shape != (self.n_out,):
            raise DimensionError("bias length differs from output width")
        if not np.isin(self.mask, (0.0, 1.0)).all():
            raise ConfigError("mask entries must be 0 or 1")
        if not np.all(self.weights[self.mask == 0.0] == 0.0):
            raise ConfigError("masked weights must be exactly 0")
        if not np.isfinite(self.weights).all() or not np.isfinite(self.bias).all():
            raise NumericError("non-finite layer parameters")


@dataclass
class Network:
    """Ordered dense layers; the final layer feeds softmax cross-entropy."""

    layers: list[DenseLayer]

    @property
    def n_prunable(self) -> int:
        return len(self.layers)

    def copy(self) -> "Network":
        return Network([layer.copy() for layer in self.layers])

    def validate(self) -> None:
        for i, layer in enumerate(self.layers):
            layer.validate()
            if i > 0 and layer.n_in != self.layers[i - 1].n_out:
                raise DimensionError(f"layer {i} input width {layer.n_in} != previous output {self.layers[i - 1].n_out}")


def build_mlp(rng: np.random.Generator, sizes: list[int]) -> Network:
    """ReLU MLP over the given layer widths; identity output layer."""
    if len(sizes) < 2:
        raise ConfigError("need at least input and output sizes")
    layers = []
    for i in range(len(sizes) - 1):
        act = "identity" if i == len(sizes) - 2 else "relu"
        layers.append(DenseLayer.init(rng, sizes[i], sizes[i + 1], act))
    return Network(layers)


@dataclass
class Dataset:
    """Train/test splits plus the retraining subset (indices into train)."""

    train_inputs: np.ndarray
    train_labels: np.ndarray
    test_inputs: np.ndarray
    test_labels: np.ndarray
    num_classes: int
    retrain_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def split(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        if name == "train":
            return self.train_inputs, self.train_labels
        if name == "test":
            return self.test_inputs, self.test_labels
        if name == "retrain_subset":
            idx = self.retrain_indices
            return self.train_inputs[idx], self.train_labels[idx]
        raise ConfigError(f"unknown split {name!r}")

    def validate(self) -> None:
        for inputs, labels in (self.split("train"), self.split("test")):
            if inputs.shape[0] != labels.shape[0]:
                raise DimensionError("inputs/labels row counts differ")
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise ConfigError("labels outside class range")
        if self.retrain_indices.size:
            if self.retrain_indices.min() < 0 or self.retrain_indices.max() >= self.train_inputs.shape[0]:
                raise ConfigError("retrain indices outside train split")


def draw_retrain_subset(dataset: Dataset, size: int, rng: np.random.Generator) -> Dataset:
    """Fix the retraining subset for a run: a seeded sample without replacement."""
    n = dataset.train_inputs.shape[0]
    if not 0 < size <= n:
        raise ConfigError(f"retrain subset size {size} not in 1..{n}")
    idx = np.sort(rng.choice(n, size=size, replace=False))
    return Dataset(
        dataset.train_inputs,
        dataset.train_labels,
        dataset.test_inputs,
        dataset.test_labels,
        dataset.num_classes,
        retrain_indices=idx,
    )


# ---------------------------------------------------------------------------
# forward / backward


def _apply_activation(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def forward_cached(net: Network, batch: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Forward pass keeping per-layer inputs for backprop.

    Returns (logits, cache) where cache[i] is the input fed to layer i
    and cache[-1] is the logits.
    """
    if batch.ndim != 2:
        raise DimensionError("batch must be 2-D (examples x features)")
    if batch.shape[1] != net.layers[0].n_in:
        raise DimensionError(f"batch has {batch.shape[1]} features, layer 0 expects {net.layers[0].n_in}")
    cache = [batch]
    x = batch
    for layer in net.layers:
        z = x @ layer.weights.T + layer.bias
        x = _apply_activation(z, layer.activation)
        cache.append(x)
    return x, cache


def forward(net: Network, batch: np.ndarray) -> np.ndarray:
    """Class logits for a batch; masked weights contribute zero."""
    logits, _ = forward_cached(net, batch)
    return logits


def backprop_from_logits(net: Network, cache: list[np.ndarray], dlogits: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients (dW, db) per layer given the loss gradient at the logits.

    Gradients at masked positions are reported as-is; zeroing them is the
    optimizer's job (see sgd_step).
    """
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore[list-item]
    delta = dlogits
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation == "relu":
            delta = delta * (cache[i + 1] > 0.0)
        grads[i] = (delta.T @ cache[i], delta.sum(axis=0))
        if i > 0:
            delta = delta @ layer.weights
    return grads


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(net: Network, batch: np.ndarray, labels: np.ndarray) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean softmax cross-entropy and per-parameter gradients."""
    if batch.shape[0] == 0:
        raise DimensionError("empty batch")
    logits, cache = forward_cached(net, batch)
    n = batch.shape[0]
    probs = _softmax(logits)
    picked = probs[np.arange(n), labels]
    loss = float(-np.log(picked).mean())
    if not np.isfinite(loss):
        for i, act in enumerate(cache[1:]):
            if not np.isfinite(act).all():
                raise NumericError(f"non-finite activations at layer {i}", layer_index=i)
        raise NumericError("non-finite loss")
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, backprop_from_logits(net, cache, dlogits)


def sgd_step(net: Network, grads: list[tuple[np.ndarray, np.ndarray]], lr: float) -> None:
    """In-place w <- w - lr*g on unmasked positions; masked stay exactly 0."""
    if lr <= 0.0:
        raise ConfigError("learning rate must be positive")
    for layer, (dw, db) in zip(net.layers, grads):
        layer.weights -= lr * (dw * layer.mask)
        layer.bias -= lr * db


def retrain(
    net: Network,
    dataset: Dataset,
    split: str,
    epochs: int,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
) -> None:
    """Minibatch SGD passes over a split, masks preserved throughout."""
    inputs, labels = dataset.split(split)
    n = inputs.shape[0]
    if n == 0:
        raise ConfigError(f"split {split!r} is empty")
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grads = loss_and_grads(net, inputs[idx], labels[idx])
            sgd_step(net, grads, lr)


def evaluate_accuracy(net: Network, dataset: Dataset, split: str = "test") -> float:
    """Argmax accuracy; ties resolve to the lowest class id."""
    inputs, labels = dataset.split(split)
    if inputs.shape[0] == 0:
        raise ConfigError(f"split {split!r} is empty")
    logits = forward(net, inputs)
    predictions = np.argmax(logits, axis=1)
    return float((predictions == labels).mean())


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(net: Network, path: str, seed: int = 0, role: str | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "seed": int(seed),
        "layers": [
            {
                "in": layer.n_in,
                "out": layer.n_out,
                "activation": layer.activation,
                "weights": layer.weights.reshape(-1).tolist(),
                "bias": layer.bias.tolist(),
                "mask": [int(v) for v in layer.mask.reshape(-1)],
            }
            for layer in net.layers
        ],
    }
    if role is not None:
        doc["role"] = role
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path: str) -> Network:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("version") != CHECKPOINT_VERSION:
        raise DataFormatError(f"unsupported checkpoint version {doc.get('version')!r} in {path}")
    layers = []
    try:
        for entry in doc["layers"]:
            n_in, n_out = int(entry["in"]), int(entry["out"])
            layer = DenseLayer(
                weights=np.asarray(entry["weights"], dtype=np.float64).reshape(n_out, n_in),
                bias=np.asarray(entry["bias"], dtype=np.float64),
                mask=np.asarray(entry["mask"], dtype=np.float64).reshape(n_out, n_in),
                activation=str(entry["activation"]),
            )
            layers.append(layer)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed checkpoint {path}: {exc}") from exc
    net = Network(layers)
    net.validate()
    return net


def network_checksum(net: Network) -> str:
    """SHA-256 over shapes and raw parameter bytes; bit-level identity check."""
    digest = hashlib.sha256()
    for layer in net.layers:
        digest.update(f"{layer.n_out}x{layer.n_in}:{layer.activation};".encode())
        digest.update(layer.weights.tobytes())
        digest.update(layer.bias.tobytes())
        digest.update(layer.mask.tobytes())
    return digest.hexdigest()
