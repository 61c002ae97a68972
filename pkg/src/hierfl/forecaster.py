"""Linear (ridge) gas usage forecaster trained by full-batch gradient descent.

Training runs on standardized features when ``TrainConfig.standardize`` is set;
the column statistics are folded back so returned params act on raw features.
Loss is ``0.5 * mean((Xw + b - y)**2) + 0.5 * l2 * |w|**2`` (bias unpenalized).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .domain import TimeSeriesDataset
from .errors import DegenerateFeatureWarning, ShapeError, TrainingError

# Columns with a standard deviation below this are treated as constant.
DEGENERATE_STD = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 5
    l2: float = 0.0
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise TrainingError(f"learning_rate must be > 0, got {self.learning_rate}")
        if int(self.epochs) < 1:
            raise TrainingError(f"epochs must be >= 1, got {self.epochs}")
        if self.l2 < 0:
            raise TrainingError(f"l2 must be >= 0, got {self.l2}")

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig(**{**self.__dict__, **changes})

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(frozen=True)
class Standardization:
    """Per-column centering and scaling; ``degenerate`` marks constant columns."""

    mean: np.ndarray
    scale: np.ndarray
    degenerate: np.ndarray

    def apply(self, features):
        return (np.asarray(features, dtype=float) - self.mean) / self.scale

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "degenerate": self.degenerate.tolist(),
        }

    @classmethod
    def identity(cls, width):
        return cls(np.zeros(width), np.ones(width), np.zeros(width, dtype=bool))


class Moments(NamedTuple):
    """Count, mean and sum of squared deviations per column (mergeable)."""

    count: int
    mean: np.ndarray
    m2: np.ndarray


def column_moments(features) -> Moments:
    features = np.asarray(features, dtype=float)
    n = features.shape[0]
    if n == 0:
        return Moments(0, np.zeros(features.shape[1]), np.zeros(features.shape[1]))
    mean = features.mean(axis=0)
    return Moments(n, mean, ((features - mean) ** 2).sum(axis=0))


def merge_moments(a: Moments, b: Moments) -> Moments:
    """Chan et al. pairwise combination; merging with an empty block is exact identity."""
    if a.count == 0:
        return b
    if b.count == 0:
        return a
    n = a.count + b.count
    delta = b.mean - a.mean
    mean = a.mean + delta * (b.count / n)
    m2 = a.m2 + b.m2 + delta**2 * (a.count * b.count / n)
    return Moments(n, mean, m2)


def standardization_from_moments(moments: Moments, feature_names=()) -> Standardization:
    std = np.sqrt(moments.m2 / moments.count)
    degenerate = std < DEGENERATE_STD
    for name, flag in zip(feature_names, degenerate):
        if flag:
            warnings.warn(
                f"feature {name!r} has zero variance; its weight is fixed at 0",
                DegenerateFeatureWarning,
                stacklevel=3,
            )
    scale = np.where(degenerate, 1.0, std)
    return Standardization(moments.mean.copy(), scale, degenerate)


@dataclass(frozen=True, eq=False)
class ForecasterParams:
    feature_names: tuple
    weights: np.ndarray
    bias: float
    standardization: Optional[Standardization] = field(default=None, repr=False)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float).reshape(-1)
        names = tuple(self.feature_names)
        if len(names) != weights.shape[0]:
            raise ShapeError(f"{weights.shape[0]} weights for {len(names)} features")
        if not np.all(np.isfinite(weights)) or not np.isfinite(self.bias):
            raise TrainingError("non-finite forecaster parameters")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "bias", float(self.bias))

    @classmethod
    def zeros(cls, feature_names):
        return cls(tuple(feature_names), np.zeros(len(feature_names)), 0.0)

    @property
    def width(self):
        return self.weights.shape[0]

    def vector(self):
        """Weights followed by bias as one flat array."""
        return np.append(self.weights, self.bias)

    def equals(self, other: "ForecasterParams") -> bool:
        return (
            self.feature_names == other.feature_names
            and np.array_equal(self.weights, other.weights)
            and self.bias == other.bias
        )

    def to_dict(self):
        return {
            "feature_names": list(self.feature_names),
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "standardization": (
                None if self.standardization is None else self.standardization.to_dict()
            ),
        }

    @classmethod
    def from_dict(cls, doc):
        st = doc.get("standardization")
        standardization = None
        if st is not None:
            standardization = Standardization(
                np.array(st["mean"], dtype=float),
                np.array(st["scale"], dtype=float),
                np.array(st["degenerate"], dtype=bool),
            )
        return cls(tuple(doc["feature_names"]), doc["weights"], doc["bias"], standardization)


class Gradient(NamedTuple):
    weights: np.ndarray
    bias: float


def _as_matrix(features, width):
    features = np.asarray(features, dtype=float)
    if features.size == 0:
        return features.reshape(0, width) if features.ndim < 2 else features
    if features.ndim == 1:
        features = features.reshape(-1, width) if width else features.reshape(-1, 0)
    if features.ndim != 2 or features.shape[1] != width:
        raise ShapeError(f"feature matrix of shape {features.shape} for {width} weights")
    return features


def linear_output(params: ForecasterParams, features) -> np.ndarray:
    """Pre-clamp prediction ``X @ w + b``."""
    features = _as_matrix(features, params.width)
    return features @ params.weights + params.bias


def predict(params: ForecasterParams, features) -> np.ndarray:
    """Forecast usage for each row; negative forecasts are clamped to 0."""
    return np.maximum(linear_output(params, features), 0.0)


def mse_loss(params: ForecasterParams, features, target, l2=0.0) -> float:
    residual = linear_output(params, features) - np.asarray(target, dtype=float)
    return 0.5 * float(np.mean(residual**2)) + 0.5 * l2 * float(params.weights @ params.weights)


def mse_gradient(params: ForecasterParams, features, target, l2=0.0) -> Gradient:
    """Analytic gradient of :func:`mse_loss` with respect to weights and bias."""
    features = _as_matrix(features, params.width)
    target = np.asarray(target, dtype=float).reshape(-1)
    if target.shape[0] != features.shape[0]:
        raise ShapeError(f"{features.shape[0]} feature rows but {target.shape[0]} targets")
    if target.shape[0] == 0:
        raise ShapeError("gradient of an empty sample is undefined")
    residual = features @ params.weights + params.bias - target
    return Gradient(features.T @ residual / target.shape[0] + l2 * params.weights,
                    float(residual.mean()))


def descend(weights, bias, features, target, config: TrainConfig, epochs, frozen=None):
    """Run ``epochs`` full-batch gradient steps from ``(weights, bias)``.

    ``frozen`` marks weights held at 0. Returns ``(weights, bias, losses)`` where
    ``losses[k]`` is the loss before step ``k``.
    """
    n = target.shape[0]
    w = np.array(weights, dtype=float)
    b = float(bias)
    lr, l2 = config.learning_rate, config.l2
    losses = []
    for _ in range(int(epochs)):
        residual = features @ w + b - target
        losses.append(0.5 * float(np.mean(residual**2)) + 0.5 * l2 * float(w @ w))
        grad_w = features.T @ residual / n + l2 * w
        grad_b = float(residual.mean())
        if frozen is not None:
            grad_w = np.where(frozen, 0.0, grad_w)
        w = w - lr * grad_w
        b = b - lr * grad_b
    return w, b, losses


def fold(feature_names, weights, bias, standardization: Optional[Standardization]):
    """Map standardized-space parameters to raw-feature parameters."""
    if standardization is None:
        return ForecasterParams(feature_names, weights, bias)
    raw_w = np.where(standardization.degenerate, 0.0, weights / standardization.scale)
    raw_b = bias - float(raw_w @ standardization.mean)
    return ForecasterParams(feature_names, raw_w, raw_b, standardization)


def fit_standardization(dataset: TimeSeriesDataset, config: TrainConfig):
    if not config.standardize:
        return None
    return standardization_from_moments(column_moments(dataset.features), dataset.feature_names)


def train(dataset: TimeSeriesDataset, config: TrainConfig, return_losses=False):
    """Fit a linear forecaster on ``dataset`` by deterministic gradient descent from zero."""
    if not dataset.has_target:
        raise TrainingError("training requires a target series")
    if len(dataset) < 2:
        raise TrainingError(f"training requires at least 2 rows, got {len(dataset)}")
    standardization = fit_standardization(dataset, config)
    features = dataset.features if standardization is None else standardization.apply(dataset.features)
    frozen = None if standardization is None else standardization.degenerate
    w, b, losses = descend(
        np.zeros(features.shape[1]), 0.0, features, dataset.target, config, config.epochs, frozen
    )
    params = fold(dataset.feature_names, w, b, standardization)
    return (params, losses) if return_losses else params
