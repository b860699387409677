"""
Autoencoder + softmax pipeline.

Normalized feature matrices are flattened and compressed by a
single-hidden-layer sigmoid autoencoder:

    z  = sigmoid(W x + b)
    x' = sigmoid(W' z + b')

The decoder output is sigmoid-bounded, so the reconstruction target is the
input squashed per dimension into [0.1, 0.9]. A softmax layer trained by
cross-entropy on the encodings assigns one of the three event classes; by
default the encoder and the softmax layer are then refined jointly on the
classification loss. The softmax never rejects, so this pipeline has no
non-classified outcome.
"""

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Dict, Iterator, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp
from scipy.special import softmax as _softmax
from sklearn.preprocessing import MinMaxScaler

from .. import config
from ..data.features import (
    NormStats,
    build_feature_matrices,
    build_feature_matrix,
    fit_norm_stats,
    normalize_and_flatten,
)
from ..data.phasor_model import EventClass, EventRecord
from ..errors import InvalidInputError
from ..utils import derive_seed
from .base_pipeline import BasePipeline, Prediction

logger = logging.getLogger(__name__)

NUM_CLASSES = len(EventClass)


def _array(values) -> np.ndarray:
    return np.asarray(values, dtype=float)


@dataclass(frozen=True)
class TrainConfig:
    """Gradient-descent settings shared by the autoencoder and the softmax layer."""

    learning_rate: float = config.LEARNING_RATE
    epochs_ae: int = config.EPOCHS_AE
    epochs_softmax: int = config.EPOCHS_SOFTMAX
    epochs_fine_tune: int = config.EPOCHS_FINE_TUNE
    batch_size: int = config.BATCH_SIZE
    l2: float = config.L2_PENALTY
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0:
            raise InvalidInputError("learning_rate and batch_size must be positive")
        if min(self.epochs_ae, self.epochs_softmax, self.epochs_fine_tune) < 0:
            raise InvalidInputError("Epoch counts must be >= 0")
        if self.l2 < 0:
            raise InvalidInputError(f"l2 must be >= 0, got {self.l2}")


@dataclass(frozen=True, eq=False)
class SquashParams:
    """Per-dimension training range that maps reconstruction targets into SQUASH_RANGE."""

    low: np.ndarray
    high: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray) -> "SquashParams":
        data = np.atleast_2d(_array(data))
        if data.shape[0] == 0:
            raise InvalidInputError("Cannot fit squash parameters on empty data")
        scaler = MinMaxScaler(feature_range=config.SQUASH_RANGE).fit(data)
        return cls(low=scaler.data_min_, high=scaler.data_max_)

    @cached_property
    def scaler(self) -> MinMaxScaler:
        # Refit on the two extreme rows: reproduces data_min_/data_max_ exactly.
        return MinMaxScaler(feature_range=config.SQUASH_RANGE).fit(np.vstack([self.low, self.high]))

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Affine map of every dimension onto [0.1, 0.9]; constant dimensions map to 0.5."""
        x = _array(x)
        if x.shape[-1] != self.low.shape[0]:
            raise InvalidInputError(f"Expected vectors of length {self.low.shape[0]}, got {x.shape[-1]}")
        squashed = self.scaler.transform(np.atleast_2d(x))
        lo, hi = config.SQUASH_RANGE
        squashed[:, self.high == self.low] = 0.5 * (lo + hi)
        return squashed.reshape(x.shape)

    def to_dict(self) -> Dict[str, Any]:
        return {"low": self.low.tolist(), "high": self.high.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SquashParams":
        return cls(low=_array(data["low"]), high=_array(data["high"]))


@dataclass(frozen=True, eq=False)
class AutoencoderParams:
    """Encoder (w_enc, b_enc) and decoder (w_dec, b_dec) weights."""

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    b_dec: np.ndarray

    def __post_init__(self):
        for name in ("w_enc", "b_enc", "w_dec", "b_dec"):
            object.__setattr__(self, name, _array(getattr(self, name)))
        hidden, d = self.w_enc.shape
        if self.b_enc.shape != (hidden,) or self.w_dec.shape != (d, hidden) or self.b_dec.shape != (d,):
            raise InvalidInputError(
                f"Inconsistent autoencoder shapes: W {self.w_enc.shape}, b {self.b_enc.shape}, "
                f"W' {self.w_dec.shape}, b' {self.b_dec.shape}"
            )

    @property
    def input_size(self) -> int:
        return self.w_enc.shape[1]

    @property
    def hidden_size(self) -> int:
        return self.w_enc.shape[0]

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (self.w_enc, self.b_enc, self.w_dec, self.b_dec))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "w_enc": self.w_enc.tolist(),
            "b_enc": self.b_enc.tolist(),
            "w_dec": self.w_dec.tolist(),
            "b_dec": self.b_dec.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AutoencoderParams":
        return cls(**{name: _array(data[name]) for name in ("w_enc", "b_enc", "w_dec", "b_dec")})


@dataclass(frozen=True, eq=False)
class SoftmaxParams:
    """Output layer: w is 3 x d', b is a 3-vector."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", _array(self.w))
        object.__setattr__(self, "b", _array(self.b))
        if self.w.ndim != 2 or self.w.shape[0] != NUM_CLASSES or self.b.shape != (NUM_CLASSES,):
            raise InvalidInputError(f"Softmax layer must be 3 x d', got w {self.w.shape}, b {self.b.shape}")

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b)))

    def to_dict(self) -> Dict[str, Any]:
        return {"w": self.w.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SoftmaxParams":
        return cls(w=_array(data["w"]), b=_array(data["b"]))


def _check_input(p: AutoencoderParams, x: np.ndarray) -> np.ndarray:
    x = _array(x)
    if x.shape[-1] != p.input_size:
        raise InvalidInputError(f"Expected input length {p.input_size}, got {x.shape[-1]}")
    return x


def encode(p: AutoencoderParams, x: np.ndarray) -> np.ndarray:
    """
    Hidden representation z = sigmoid(W x + b).

    Args:
        p: Autoencoder parameters
        x: One input vector of length d, or an N x d batch

    Returns:
        Encodings of length d' (or N x d')
    """
    x = _check_input(p, x)
    return expit(x @ p.w_enc.T + p.b_enc)


def reconstruct(p: AutoencoderParams, x: np.ndarray) -> np.ndarray:
    """
    Reconstruction x' = sigmoid(W' z + b').

    Args:
        p: Autoencoder parameters
        x: One input vector of length d, or an N x d batch

    Returns:
        Reconstructions with the shape of x
    """
    return expit(encode(p, x) @ p.w_dec.T + p.b_dec)


def reconstruction_error(p: AutoencoderParams, data: np.ndarray, targets: Optional[np.ndarray] = None) -> float:
    """Mean squared error over every entry; targets default to the inputs."""
    data = np.atleast_2d(_array(data))
    targets = data if targets is None else np.atleast_2d(_array(targets))
    return float(np.mean((reconstruct(p, data) - targets) ** 2))


def softmax(x: np.ndarray) -> np.ndarray:
    """
    Softmax along the last axis, computed with max subtraction.

    Args:
        x: Logits, one m-vector or a batch of them

    Returns:
        Probabilities with the shape of x
    """
    return _softmax(_array(x), axis=-1)


def ae_init(input_size: int, hidden_size: int, seed: int) -> AutoencoderParams:
    """
    Seeded initialization: weights uniform in [-r, r], r = sqrt(6 / (d + d')), zero biases.

    Args:
        input_size: d
        hidden_size: d'
        seed: Random seed

    Returns:
        AutoencoderParams
    """
    if input_size <= 0 or hidden_size <= 0:
        raise InvalidInputError("Autoencoder sizes must be positive")
    rng = np.random.default_rng(derive_seed(seed, 0))
    r = np.sqrt(6.0 / (input_size + hidden_size))
    return AutoencoderParams(
        w_enc=rng.uniform(-r, r, size=(hidden_size, input_size)),
        b_enc=np.zeros(hidden_size),
        w_dec=rng.uniform(-r, r, size=(input_size, hidden_size)),
        b_dec=np.zeros(input_size),
    )


def softmax_init(hidden_size: int, seed: int) -> SoftmaxParams:
    """Seeded initialization: w uniform in [-r, r], r = sqrt(6 / (d' + 3)), zero bias."""
    if hidden_size <= 0:
        raise InvalidInputError("Hidden size must be positive")
    rng = np.random.default_rng(derive_seed(seed, 2))
    r = np.sqrt(6.0 / (hidden_size + NUM_CLASSES))
    return SoftmaxParams(w=rng.uniform(-r, r, size=(NUM_CLASSES, hidden_size)), b=np.zeros(NUM_CLASSES))


def ae_loss_and_grad(
    p: AutoencoderParams, x: np.ndarray, targets: np.ndarray, l2: float
) -> Tuple[float, AutoencoderParams]:
    """
    Autoencoder loss (1/2B) sum |x' - t|^2 + (l2/2)(|W|^2 + |W'|^2) and its gradient.

    Args:
        p: Current parameters
        x: B x d batch
        targets: B x d reconstruction targets
        l2: Weight penalty

    Returns:
        (loss, gradient with the same layout as p)
    """
    x = np.atleast_2d(_check_input(p, x))
    targets = np.atleast_2d(_array(targets))
    batch = x.shape[0]
    z = expit(x @ p.w_enc.T + p.b_enc)
    out = expit(z @ p.w_dec.T + p.b_dec)
    diff = out - targets

    loss = 0.5 * np.sum(diff**2) / batch + 0.5 * l2 * (np.sum(p.w_enc**2) + np.sum(p.w_dec**2))
    delta_out = diff * out * (1.0 - out) / batch
    delta_hidden = (delta_out @ p.w_dec) * z * (1.0 - z)
    grad = AutoencoderParams(
        w_enc=delta_hidden.T @ x + l2 * p.w_enc,
        b_enc=delta_hidden.sum(axis=0),
        w_dec=delta_out.T @ z + l2 * p.w_dec,
        b_dec=delta_out.sum(axis=0),
    )
    return float(loss), grad


def _one_hot(labels: np.ndarray) -> np.ndarray:
    return np.eye(NUM_CLASSES)[labels - 1]


def _check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    valid = [int(c) for c in EventClass]
    if not np.all(np.isin(labels, valid)):
        raise InvalidInputError(f"Labels must be in {valid}")
    return labels


def softmax_loss_and_grad(
    sm: SoftmaxParams, z: np.ndarray, labels: np.ndarray, l2: float
) -> Tuple[float, SoftmaxParams]:
    """
    Mean cross-entropy + (l2/2)|w|^2 and its gradient.

    Args:
        sm: Current softmax parameters
        z: B x d' encodings
        labels: B class codes (1..3)
        l2: Weight penalty

    Returns:
        (loss, gradient with the same layout as sm)
    """
    z = np.atleast_2d(_array(z))
    labels = _check_labels(labels)
    batch = z.shape[0]
    logits = z @ sm.w.T + sm.b
    log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
    loss = -np.mean(log_probs[np.arange(batch), labels - 1]) + 0.5 * l2 * np.sum(sm.w**2)
    delta = (np.exp(log_probs) - _one_hot(labels)) / batch
    grad = SoftmaxParams(w=delta.T @ z + l2 * sm.w, b=delta.sum(axis=0))
    return float(loss), grad


def joint_loss_and_grad(
    ae: AutoencoderParams,
    sm: SoftmaxParams,
    x: np.ndarray,
    labels: np.ndarray,
    l2: float,
) -> Tuple[float, AutoencoderParams, SoftmaxParams]:
    """
    Cross-entropy of softmax(encode(x)) with gradients for the encoder and the softmax layer.

    The decoder does not take part; its gradient entries are zero.

    Returns:
        (loss, autoencoder gradient, softmax gradient)
    """
    x = np.atleast_2d(_check_input(ae, x))
    labels = _check_labels(labels)
    z = expit(x @ ae.w_enc.T + ae.b_enc)
    loss, sm_grad = softmax_loss_and_grad(sm, z, labels, l2)
    delta = (softmax(z @ sm.w.T + sm.b) - _one_hot(labels)) / x.shape[0]
    delta_hidden = (delta @ sm.w) * z * (1.0 - z)
    loss += 0.5 * l2 * np.sum(ae.w_enc**2)
    ae_grad = AutoencoderParams(
        w_enc=delta_hidden.T @ x + l2 * ae.w_enc,
        b_enc=delta_hidden.sum(axis=0),
        w_dec=np.zeros_like(ae.w_dec),
        b_dec=np.zeros_like(ae.b_dec),
    )
    return float(loss), ae_grad, sm_grad


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _step(params, grad, rate):
    return type(params)(
        **{name: getattr(params, name) - rate * getattr(grad, name) for name in params.__dataclass_fields__}
    )


def ae_train(
    data: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    hidden_size: int = config.AE_HIDDEN_SIZE,
    targets: Optional[np.ndarray] = None,
) -> AutoencoderParams:
    """
    Train the autoencoder by mini-batch gradient descent to reconstruct its input.

    Args:
        data: N x d training vectors
        cfg: Training settings; cfg.seed drives initialization and shuffling
        hidden_size: d'
        targets: N x d reconstruction targets inside (0, 1); defaults to data

    Returns:
        Trained AutoencoderParams
    """
    data = _array(data)
    if data.ndim != 2 or data.shape[0] == 0:
        raise InvalidInputError("Autoencoder training needs a nonempty N x d array")
    targets = data if targets is None else _array(targets)
    if targets.shape != data.shape:
        raise InvalidInputError(f"Targets {targets.shape} do not match inputs {data.shape}")
    params = ae_init(data.shape[1], hidden_size, cfg.seed)
    rng = np.random.default_rng(derive_seed(cfg.seed, 1))

    for epoch in range(cfg.epochs_ae):
        for batch in _batches(len(data), cfg.batch_size, rng):
            _, grad = ae_loss_and_grad(params, data[batch], targets[batch], cfg.l2)
            params = _step(params, grad, cfg.learning_rate)
        if epoch % 50 == 0 or epoch == cfg.epochs_ae - 1:
            logger.debug(
                "AE epoch %d: reconstruction error %.6g", epoch, reconstruction_error(params, data, targets)
            )

    if not params.is_finite():
        raise InvalidInputError("Autoencoder training diverged; lower the learning rate")
    return params


def softmax_train(encodings: np.ndarray, labels: Sequence[int], cfg: TrainConfig = TrainConfig()) -> SoftmaxParams:
    """
    Train the softmax layer on fixed encodings by mini-batch gradient descent.

    Args:
        encodings: N x d' hidden vectors
        labels: N class codes (1..3)
        cfg: Training settings

    Returns:
        Trained SoftmaxParams
    """
    z = _array(encodings)
    if z.ndim != 2 or z.shape[0] == 0:
        raise InvalidInputError("Softmax training needs a nonempty N x d' array")
    labels = _check_labels(labels)
    if len(labels) != len(z):
        raise InvalidInputError(f"{len(z)} encodings but {len(labels)} labels")
    params = softmax_init(z.shape[1], cfg.seed)
    rng = np.random.default_rng(derive_seed(cfg.seed, 3))

    for epoch in range(cfg.epochs_softmax):
        for batch in _batches(len(z), cfg.batch_size, rng):
            _, grad = softmax_loss_and_grad(params, z[batch], labels[batch], cfg.l2)
            params = _step(params, grad, cfg.learning_rate)
        if epoch % 50 == 0 or epoch == cfg.epochs_softmax - 1:
            loss, _ = softmax_loss_and_grad(params, z, labels, cfg.l2)
            logger.debug("Softmax epoch %d: loss %.6g", epoch, loss)
    return params


def fine_tune(
    ae: AutoencoderParams,
    sm: SoftmaxParams,
    data: np.ndarray,
    labels: Sequence[int],
    cfg: TrainConfig = TrainConfig(),
) -> Tuple[AutoencoderParams, SoftmaxParams]:
    """
    Jointly refine the encoder and the softmax layer on the classification loss.

    Runs cfg.epochs_fine_tune epochs; the decoder is left unchanged.

    Returns:
        (autoencoder, softmax) parameters
    """
    data = _array(data)
    labels = _check_labels(labels)
    rng = np.random.default_rng(derive_seed(cfg.seed, 4))
    for epoch in range(cfg.epochs_fine_tune):
        for batch in _batches(len(data), cfg.batch_size, rng):
            _, ae_grad, sm_grad = joint_loss_and_grad(ae, sm, data[batch], labels[batch], cfg.l2)
            ae = _step(ae, ae_grad, cfg.learning_rate)
            sm = _step(sm, sm_grad, cfg.learning_rate)
        if epoch % 50 == 0:
            loss, _, _ = joint_loss_and_grad(ae, sm, data, labels, cfg.l2)
            logger.debug("Fine-tune epoch %d: loss %.6g", epoch, loss)
    if not (ae.is_finite() and sm.is_finite()):
        raise InvalidInputError("Fine-tuning diverged; lower the learning rate")
    return ae, sm


def classify(ae: AutoencoderParams, sm: SoftmaxParams, x: np.ndarray) -> Tuple[EventClass, np.ndarray]:
    """
    Most probable class of one input vector.

    Args:
        ae: Trained autoencoder
        sm: Trained softmax layer
        x: Normalized input vector of length d

    Returns:
        (class, probability 3-vector)
    """
    logits = encode(ae, x) @ sm.w.T + sm.b
    return EventClass(int(np.argmax(logits)) + 1), softmax(logits)


class AeSoftmaxPipeline(BasePipeline):
    """Autoencoder compression followed by a softmax classifier."""

    method = config.METHOD_AE_SOFTMAX

    def __init__(
        self,
        seed: int,
        train_config: TrainConfig = TrainConfig(),
        hidden_size: int = config.AE_HIDDEN_SIZE,
        fine_tune: bool = config.AE_FINE_TUNE,
    ):
        super().__init__(seed)
        if hidden_size <= 0:
            raise InvalidInputError(f"hidden_size must be positive, got {hidden_size}")
        self.train_config = replace(train_config, seed=seed)
        self.hidden_size = hidden_size
        self.fine_tune = fine_tune
        self.norm_stats: Optional[NormStats] = None
        self.squash: Optional[SquashParams] = None
        self.autoencoder: Optional[AutoencoderParams] = None
        self.softmax_layer: Optional[SoftmaxParams] = None

    def _inputs(self, records: Sequence[EventRecord]) -> np.ndarray:
        vectors = [normalize_and_flatten(build_feature_matrix(r), self.norm_stats) for r in records]
        return np.vstack(vectors)

    def fit(self, records: Sequence[EventRecord]) -> "AeSoftmaxPipeline":
        if len(records) == 0:
            raise InvalidInputError("Cannot train on an empty set")
        labels = np.array([int(r.label) for r in records], dtype=int)
        matrices = build_feature_matrices(records)
        self.norm_stats = fit_norm_stats(matrices)
        x = np.vstack([normalize_and_flatten(m, self.norm_stats) for m in matrices])
        self.squash = SquashParams.fit(x)
        targets = self.squash.apply(x)

        cfg = self.train_config
        self.autoencoder = ae_train(x, cfg, self.hidden_size, targets=targets)
        self.softmax_layer = softmax_train(encode(self.autoencoder, x), labels, cfg)
        if self.fine_tune:
            self.autoencoder, self.softmax_layer = fine_tune(self.autoencoder, self.softmax_layer, x, labels, cfg)
        self.is_fitted = True
        logger.info(
            "Trained ae-softmax on %d records (d=%d, d'=%d, reconstruction error %.4g)",
            len(records), x.shape[1], self.hidden_size, reconstruction_error(self.autoencoder, x, targets),
        )
        return self

    def predict_proba(self, record: EventRecord) -> np.ndarray:
        """Class probabilities of one record, ordered by class code."""
        if not self.is_fitted:
            raise InvalidInputError("Pipeline is not fitted")
        return classify(self.autoencoder, self.softmax_layer, self._inputs([record])[0])[1]

    def predict(self, record: EventRecord) -> Prediction:
        if not self.is_fitted:
            raise InvalidInputError("Pipeline is not fitted")
        return classify(self.autoencoder, self.softmax_layer, self._inputs([record])[0])[0]

    def to_dict(self) -> Dict[str, Any]:
        cfg = self.train_config
        return {
            "train_config": {
                "learning_rate": cfg.learning_rate,
                "epochs_ae": cfg.epochs_ae,
                "epochs_softmax": cfg.epochs_softmax,
                "epochs_fine_tune": cfg.epochs_fine_tune,
                "batch_size": cfg.batch_size,
                "l2": cfg.l2,
            },
            "hidden_size": self.hidden_size,
            "fine_tune": self.fine_tune,
            "norm_stats": self.norm_stats.to_dict(),
            "squash": self.squash.to_dict(),
            "autoencoder": self.autoencoder.to_dict(),
            "softmax": self.softmax_layer.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], seed: int = 0) -> "AeSoftmaxPipeline":
        pipeline = cls(
            seed=seed,
            train_config=TrainConfig(**data["train_config"]),
            hidden_size=int(data["hidden_size"]),
            fine_tune=bool(data["fine_tune"]),
        )
        pipeline.norm_stats = NormStats.from_dict(data["norm_stats"])
        pipeline.squash = SquashParams.from_dict(data["squash"])
        pipeline.autoencoder = AutoencoderParams.from_dict(data["autoencoder"])
        pipeline.softmax_layer = SoftmaxParams.from_dict(data["softmax"])
        pipeline.is_fitted = True
        return pipeline
