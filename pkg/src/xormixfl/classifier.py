"""One-hidden-layer softmax classifier trained with plain mini-batch SGD.

The functional core (``train``, ``evaluate``, ``loss_and_grads``) works on
:class:`ModelParams`; :class:`SoftmaxMLP` wraps it in the scikit-learn
estimator protocol so it drops into pipelines and model selection tools.
"""

from __future__ import annotations

import io
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_features, check_features_labels
from .dataset import NUM_CLASSES, Dataset
from .errors import ConfigError, DivergedLoss, ShapeMismatch
from .seeding import substream

MAGIC = b"XMFL"
FORMAT_VERSION = 1
PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 32
    epochs: int = 20
    hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("train.learning_rate", "must be > 0")
        for key in ("batch_size", "epochs", "hidden"):
            if getattr(self, key) < 1:
                raise ConfigError(f"train.{key}", "must be >= 1")


@dataclass(eq=False)
class ModelParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.w1.shape[0], self.w1.shape[1], self.w2.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def astype(self, dtype) -> ModelParams:
        return ModelParams(*(a.astype(dtype, copy=True) for a in self.arrays()))

    def copy(self) -> ModelParams:
        return ModelParams(*(a.copy() for a in self.arrays()))

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def allclose(self, other: ModelParams, atol: float = 0.0) -> bool:
        return all(a.shape == b.shape and np.allclose(a, b, rtol=0, atol=atol)
                   for a, b in zip(self.arrays(), other.arrays()))

    def equal(self, other: ModelParams) -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))

    def to_bytes(self) -> bytes:
        """Little-endian blob: magic, u32 version, u32 layer count, u32 dims, float32 row-major arrays."""
        dims = self.dims
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<II", FORMAT_VERSION, len(dims)))
        buf.write(struct.pack(f"<{len(dims)}I", *dims))
        for a in self.arrays():
            buf.write(np.ascontiguousarray(a, dtype="<f4").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob: bytes) -> ModelParams:
        if blob[:4] != MAGIC:
            raise ValueError("not an XMFL model blob")
        version, n_dims = struct.unpack_from("<II", blob, 4)
        if version != FORMAT_VERSION or n_dims != 3:
            raise ValueError(f"unsupported model blob (version {version}, {n_dims} dims)")
        n_in, hidden, n_out = struct.unpack_from("<3I", blob, 12)
        offset = 24
        arrays = []
        for shape in ((n_in, hidden), (hidden,), (hidden, n_out), (n_out,)):
            count = int(np.prod(shape))
            a = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
            arrays.append(a.astype(np.float32))
            offset += 4 * count
        if offset != len(blob):
            raise ValueError("trailing bytes in model blob")
        return cls(*arrays)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> ModelParams:
        return cls.from_bytes(Path(path).read_bytes())


def init_params(n_in: int, hidden: int, n_out: int, rng: np.random.Generator, dtype=np.float32) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)

    return ModelParams(glorot(n_in, hidden), np.zeros(hidden, dtype=dtype),
                       glorot(hidden, n_out), np.zeros(n_out, dtype=dtype))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, x: np.ndarray):
    pre = x @ params.w1 + params.b1
    hidden = np.maximum(pre, 0)
    logits = hidden @ params.w2 + params.b2
    return pre, hidden, logits


def predict_proba(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return softmax(forward(params, x)[2])


def cross_entropy(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    logits = forward(params, x)[2]
    z = logits - logits.max(axis=1, keepdims=True)
    log_p = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-log_p[np.arange(len(y)), y].mean())


def loss_and_grads(params: ModelParams, x: np.ndarray, y: np.ndarray) -> tuple[float, ModelParams]:
    """Mean softmax cross-entropy over the batch and its parameter gradients."""
    pre, hidden, logits = forward(params, x)
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(y))
    loss = float(-(z - log_norm)[rows, y].mean())
    delta = np.exp(z - log_norm)
    delta[rows, y] -= 1
    delta /= len(y)
    g_w2 = hidden.T @ delta
    g_b2 = delta.sum(axis=0)
    d_hidden = delta @ params.w2.T
    d_hidden *= pre > 0
    g_w1 = x.T @ d_hidden
    g_b1 = d_hidden.sum(axis=0)
    return loss, ModelParams(g_w1, g_b1, g_w2, g_b2)


def _scaled(images: np.ndarray, dtype=np.float32, scale: float = 255.0) -> np.ndarray:
    return np.asarray(images, dtype=dtype) / dtype(scale)


DIVERGENCE_FACTOR = 1e6


def sgd_epochs(params: ModelParams, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, epochs: int,
               rng: np.random.Generator) -> tuple[ModelParams, list[float]]:
    """Run ``epochs`` passes of shuffled mini-batch SGD, updating a copy of ``params``.

    Raises DivergedLoss on a non-finite loss, or once a batch loss exceeds
    ``DIVERGENCE_FACTOR`` times the first one (log-softmax keeps the loss
    finite long after training has blown up).
    """
    params = params.copy()
    first = None
    lr = params.w1.dtype.type(cfg.learning_rate)
    curve = []
    arrays = params.arrays()
    for _ in range(epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for start in range(0, len(y), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grads(params, x[batch], y[batch])
            first = loss if first is None else first
            if not np.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(first, 1e-3):
                raise DivergedLoss(f"loss became {loss:.3g} (learning rate {cfg.learning_rate})")
            for a, g in zip(arrays, grads.arrays()):
                a -= lr * g
            total += loss * len(batch)
        if not params.is_finite():
            raise DivergedLoss(f"non-finite parameters (learning rate {cfg.learning_rate})")
        curve.append(total / len(y))
    return params, curve


def train(data: Dataset, cfg: TrainConfig = TrainConfig(), init: ModelParams | None = None,
          n_classes: int = NUM_CLASSES, epochs: int | None = None, stream: str = "") -> ModelParams:
    """Train from a seeded Glorot init (or a copy of ``init``) on ``data``.

    ``stream`` namespaces the batch-shuffle generator so that repeated local
    training calls (federated rounds) draw independent orders.
    """
    return train_with_curve(data, cfg, init, n_classes, epochs, stream)[0]


def train_with_curve(data: Dataset, cfg: TrainConfig = TrainConfig(), init: ModelParams | None = None,
                     n_classes: int = NUM_CLASSES, epochs: int | None = None,
                     stream: str = "") -> tuple[ModelParams, list[float]]:
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if init is None:
        init = init_params(data.n_pixels, cfg.hidden, n_classes, substream(cfg.seed, "model-init"))
    elif init.dims[0] != data.n_pixels:
        raise ShapeMismatch(f"model expects {init.dims[0]} inputs, data has {data.n_pixels}")
    rng = substream(cfg.seed, "batch-shuffle" + (f"/{stream}" if stream else ""))
    x = _scaled(data.images, init.w1.dtype.type)
    return sgd_epochs(init, x, data.labels, cfg, cfg.epochs if epochs is None else epochs, rng)


def predict(model, images: np.ndarray) -> np.ndarray:
    """Predicted labels; ``model`` is ModelParams or anything with ``predict``."""
    if isinstance(model, ModelParams):
        logits = forward(model, _scaled(images, model.w1.dtype.type))[2]
        return logits.argmax(axis=1)
    return np.asarray(model.predict(images))


@dataclass
class EvalReport:
    test_accuracy: float
    per_label_accuracy: dict[int, float]
    target_label_accuracy: float | None
    confusion: list[list[int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_label_accuracy"] = {str(k): v for k, v in self.per_label_accuracy.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> EvalReport:
        return cls(d["test_accuracy"], {int(k): v for k, v in d["per_label_accuracy"].items()},
                   d["target_label_accuracy"], d["confusion"])


def evaluate_predictions(y_true, y_pred, target_labels=(), n_classes: int = NUM_CLASSES) -> EvalReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if len(y_true) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    per_label = {}
    for k in range(n_classes):
        support = confusion[k].sum()
        if support:
            per_label[k] = float(confusion[k, k] / support)
    targets = [per_label[k] for k in sorted(target_labels) if k in per_label]
    return EvalReport(float(np.trace(confusion) / len(y_true)), per_label,
                      float(np.mean(targets)) if targets else None, confusion.tolist())


def evaluate(model, test: Dataset, target_labels=()) -> EvalReport:
    return evaluate_predictions(test.labels, predict(model, test.images), target_labels)


def gradient_check(model: ModelParams, batch: Dataset, n_coords: int = 100, step: float = 1e-5,
                   rng: np.random.Generator | None = None, grad_fn=None, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Everything runs in float64. ``grad_fn(params, x, y) -> (loss, grads)``
    defaults to :func:`loss_and_grads`; substituting a faulty one is how the
    check is shown to bite. Relative error is ``|a - n| / max(|a| + |n|, floor)``.
    """
    if len(batch) > 8:
        raise ValueError("gradient_check expects a batch of at most 8 samples")
    rng = np.random.default_rng(0) if rng is None else rng
    grad_fn = loss_and_grads if grad_fn is None else grad_fn
    params = model.astype(np.float64)
    x = _scaled(batch.images, np.float64)
    y = batch.labels
    _, grads = grad_fn(params, x, y)
    arrays = params.arrays()
    sizes = [a.size for a in arrays]
    flat_index = rng.choice(sum(sizes), size=min(n_coords, sum(sizes)), replace=False)
    bounds = np.cumsum([0] + sizes)
    worst = 0.0
    for flat in flat_index:
        which = int(np.searchsorted(bounds, flat, side="right") - 1)
        a = arrays[which].reshape(-1)
        local = flat - bounds[which]
        keep = a[local]
        a[local] = keep + step
        up = cross_entropy(params, x, y)
        a[local] = keep - step
        down = cross_entropy(params, x, y)
        a[local] = keep
        numeric = (up - down) / (2 * step)
        analytic = grads.arrays()[which].reshape(-1)[local]
        err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), floor)
        worst = max(worst, float(err))
    return worst


class SoftmaxMLP(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around :func:`train`.

    Parameters mirror :class:`TrainConfig`. ``input_scale`` divides raw
    features before training (255 for byte images). ``n_classes`` fixes the
    output width when some classes are absent from ``y``; by default it is
    inferred from the labels seen in ``fit``.
    """

    def __init__(self, hidden_units=128, learning_rate=0.1, batch_size=32, epochs=20,
                 random_state=0, input_scale=255.0, n_classes=None):
        self.hidden_units = hidden_units
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state
        self.input_scale = input_scale
        self.n_classes = n_classes

    def _config(self) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.hidden_units,
                           0 if self.random_state is None else int(self.random_state))

    def fit(self, X, y):
        X, y = check_features_labels(X, y)
        if self.n_classes is None:
            self.classes_ = np.unique(y)
        else:
            self.classes_ = np.arange(self.n_classes)
            if not np.isin(y, self.classes_).all():
                raise ValueError(f"labels outside range(n_classes={self.n_classes})")
        encoded = np.searchsorted(self.classes_, y)
        cfg = self._config()
        x = (X / self.input_scale).astype(np.float32)
        init = init_params(x.shape[1], cfg.hidden, len(self.classes_), substream(cfg.seed, "model-init"))
        self.params_, self.loss_curve_ = sgd_epochs(init, x, encoded, cfg, cfg.epochs,
                                                    substream(cfg.seed, "batch-shuffle"))
        self.n_features_in_ = x.shape[1]
        return self

    def _inputs(self, X):
        check_is_fitted(self, "params_")
        X = check_features(X, n_features=self.n_features_in_)
        return (X / self.input_scale).astype(np.float32)

    def predict_proba(self, X):
        x = self._inputs(X)
        return predict_proba(self.params_, x)

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]
