"""Feed-forward network mapping measurement frequencies to Cholesky alpha-vectors.

The network is a plain numpy multilayer perceptron: three hidden leaky-ReLU
layers and a linear output of d*d units.  Training minimizes the mean squared
error against alpha_encode(cholesky_decompose(rho)) with mini-batch Adam.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidParameter, NonFiniteLoss, ShapeMismatch
from .qstate import alpha_to_density
from .store import BinaryReader, BinaryWriter, atomic_write_bytes

if TYPE_CHECKING:
    from .datasets import Dataset

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"DNNQST01"
LEAKY_SLOPE = 0.01
HIDDEN_LAYERS = 3


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    # 0 picks the width from the state family (see config.default_hidden_width).
    hidden_width: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0.0:
            raise InvalidParameter(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidParameter(f"Adam betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if self.adam_epsilon <= 0.0:
            raise InvalidParameter(f"adam_epsilon must be > 0, got {self.adam_epsilon}")
        if self.batch_size < 1 or self.epochs < 1:
            raise InvalidParameter("batch_size and epochs must be >= 1")
        if self.hidden_width < 0:
            raise InvalidParameter(f"hidden_width must be >= 0, got {self.hidden_width}")


@dataclass
class MLPModel:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    manifest: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.weights or len(self.weights) != len(self.biases):
            raise ShapeMismatch("model needs one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeMismatch(f"layer {i}: weights {w.shape} do not match biases {b.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeMismatch(f"layer {i} expects {w.shape[0]} inputs, previous layer gives {self.weights[i - 1].shape[1]}")

    @property
    def layer_sizes(self) -> Tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def input_dim(self) -> int:
        return int(self.weights[0].shape[0])

    @property
    def output_dim(self) -> int:
        return int(self.weights[-1].shape[1])

    def copy(self) -> "MLPModel":
        return MLPModel([w.copy() for w in self.weights], [b.copy() for b in self.biases], dict(self.manifest))


def init_model(
    input_dim: int,
    hidden_width: int,
    output_dim: int,
    seed: int,
    hidden_layers: int = HIDDEN_LAYERS,
) -> MLPModel:
    """Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)) stored (fan_in, fan_out); biases zero."""
    if min(input_dim, hidden_width, output_dim) < 1 or hidden_layers < 1:
        raise InvalidParameter(f"layer sizes must be positive: {input_dim}, {hidden_width}, {output_dim}")
    rng = np.random.default_rng(seed)
    sizes = [input_dim] + [hidden_width] * hidden_layers + [output_dim]
    weights = []
    biases = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLPModel(weights, biases)


def leaky_relu(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, z, LEAKY_SLOPE * z)


def _leaky_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0.0, 1.0, LEAKY_SLOPE)


def _as_batch(model: MLPModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeMismatch(f"model expects {model.input_dim} features, got shape {np.shape(features)}")
    return x


def _forward_pass(model: MLPModel, x: np.ndarray) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Activations a_0..a_L and pre-activations z_0..z_{L-1}."""
    activations = [x]
    pre = []
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = activations[-1] @ w + b
        pre.append(z)
        activations.append(z if i == last else leaky_relu(z))
    return activations, pre


def forward(model: MLPModel, features: np.ndarray) -> np.ndarray:
    """Alpha-vector(s) for one feature vector or a (batch, input_dim) array."""
    single = np.ndim(features) == 1
    activations, _ = _forward_pass(model, _as_batch(model, features))
    out = activations[-1]
    return out[0] if single else out


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} and target {target.shape} differ")
    return float(np.mean((pred - target) ** 2))


def loss_and_gradients(
    model: MLPModel,
    features: np.ndarray,
    targets: np.ndarray,
) -> Tuple[float, List[np.ndarray], List[np.ndarray]]:
    x = _as_batch(model, features)
    y = np.asarray(targets, dtype=float).reshape(x.shape[0], -1)
    activations, pre = _forward_pass(model, x)
    out = activations[-1]
    loss = mse_loss(out, y)

    grad_w: List[np.ndarray] = [np.empty(0)] * len(model.weights)
    grad_b: List[np.ndarray] = [np.empty(0)] * len(model.biases)
    delta = 2.0 * (out - y) / out.size
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = activations[i].T @ delta
        grad_b[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ model.weights[i].T) * _leaky_grad(pre[i - 1])
    return loss, grad_w, grad_b


class AdamOptimizer:
    def __init__(self, model: MLPModel, cfg: TrainConfig) -> None:
        self.cfg = cfg
        self.step_count = 0
        self._m = [np.zeros_like(p) for p in model.weights + model.biases]
        self._v = [np.zeros_like(p) for p in model.weights + model.biases]

    def step(self, model: MLPModel, grad_w: Sequence[np.ndarray], grad_b: Sequence[np.ndarray]) -> None:
        cfg = self.cfg
        self.step_count += 1
        correction1 = 1.0 - cfg.beta1**self.step_count
        correction2 = 1.0 - cfg.beta2**self.step_count
        params = model.weights + model.biases
        grads = list(grad_w) + list(grad_b)
        for param, grad, m, v in zip(params, grads, self._m, self._v):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * grad
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * grad * grad
            param -= cfg.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + cfg.adam_epsilon)


TrainData = Union["Dataset", Tuple[np.ndarray, np.ndarray]]


def _training_arrays(data: TrainData) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(data, tuple):
        features, targets = data
    else:
        features, targets = data.features, data.targets
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2 or targets.ndim != 2 or features.shape[0] != targets.shape[0]:
        raise ShapeMismatch(f"features {features.shape} and targets {targets.shape} do not pair up")
    if features.shape[0] == 0:
        raise ShapeMismatch("cannot train on an empty dataset")
    return features, targets


def train(
    model: MLPModel,
    data: TrainData,
    cfg: Optional[TrainConfig] = None,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> Tuple[MLPModel, List[float]]:
    """Mini-batch Adam on the MSE; updates model in place.

    Returns the model and the per-epoch mean training loss (sample-weighted over
    the epoch's batches).
    """
    cfg = cfg or TrainConfig()
    features, targets = _training_arrays(data)
    if features.shape[1] != model.input_dim or targets.shape[1] != model.output_dim:
        raise ShapeMismatch(
            f"model {model.input_dim}->{model.output_dim} cannot train on {features.shape[1]}->{targets.shape[1]} data"
        )
    rng = np.random.default_rng(cfg.seed)
    optimizer = AdamOptimizer(model, cfg)
    count = features.shape[0]
    history: List[float] = []

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(count)
        total = 0.0
        for start in range(0, count, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grad_w, grad_b = loss_and_gradients(model, features[batch], targets[batch])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}, batch starting at {start}")
            optimizer.step(model, grad_w, grad_b)
            total += loss * batch.size
        epoch_loss = total / count
        history.append(epoch_loss)
        logger.debug("epoch %d/%d loss=%.6e", epoch, cfg.epochs, epoch_loss)
        if on_epoch is not None:
            on_epoch(epoch, epoch_loss)

    logger.info("trained %s for %d epochs: loss %.4e -> %.4e", model.layer_sizes, cfg.epochs, history[0], history[-1])
    model.manifest.setdefault("train_config", json.dumps(asdict(cfg), sort_keys=True))
    return model, history


def predict_state(model: MLPModel, features: np.ndarray) -> np.ndarray:
    """One feed-forward pass, then alpha -> L -> L L^dagger / Tr."""
    alpha = forward(model, np.asarray(features, dtype=float).ravel())
    return alpha_to_density(alpha)


def predict_states(model: MLPModel, features: np.ndarray) -> List[np.ndarray]:
    return [alpha_to_density(alpha) for alpha in forward(model, np.atleast_2d(features))]


def model_to_bytes(model: MLPModel) -> bytes:
    writer = BinaryWriter(MODEL_MAGIC)
    writer.u64(len(model.weights))
    for w, b in zip(model.weights, model.biases):
        writer.u64(w.shape[0])
        writer.u64(w.shape[1])
        writer.f64_array(w)
        writer.f64_array(b)
    writer.text(json.dumps(model.manifest, sort_keys=True))
    return writer.payload()


def _read_model(reader: BinaryReader) -> MLPModel:
    weights = []
    biases = []
    for _ in range(reader.u64()):
        rows, cols = reader.u64(), reader.u64()
        weights.append(reader.f64_array(rows * cols).reshape(rows, cols))
        biases.append(reader.f64_array(cols))
    manifest = reader.manifest()
    reader.expect_end()
    return MLPModel(weights, biases, manifest)


def save_model(model: MLPModel, path: Union[str, Path]) -> Path:
    target = atomic_write_bytes(path, model_to_bytes(model))
    logger.info("wrote model %s to %s", model.layer_sizes, target)
    return target


def load_model(path: Union[str, Path]) -> MLPModel:
    return _read_model(BinaryReader.from_path(path, MODEL_MAGIC))

