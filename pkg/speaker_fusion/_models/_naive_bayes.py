import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import softmax

from speaker_fusion._exceptions import (
    ArchiveError,
    DimensionMismatchError,
    EmptyClassError,
    EmptyTrainingSetError,
    NonFiniteFeatureError,
    NumericalFailureError,
)
from speaker_fusion._models._scores import ScoreVector

logger = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class NbModel:
    """
    Gaussian Naive Bayes over supervectors

    Each dimension of a class is an independent normal with a smoothed variance.
    """

    classes: Tuple[str, ...]
    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    smoothing: float

    def __post_init__(self):
        priors = np.asarray(self.priors, dtype=np.float64).reshape(-1)
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        k = len(self.classes)
        if priors.shape != (k,) or means.ndim != 2 or means.shape[0] != k:
            raise DimensionMismatchError("NB parameters must hold one row per class")
        if variances.shape != means.shape:
            raise DimensionMismatchError("NB means and variances must have equal shapes")
        if abs(priors.sum() - 1.0) > 1e-9 or np.any(priors < 0):
            raise NumericalFailureError("NB priors must be non-negative and sum to 1")
        if not np.all(variances > 0):
            raise NumericalFailureError("NB variances must be positive")
        object.__setattr__(self, "classes", tuple(str(c) for c in self.classes))
        object.__setattr__(self, "priors", priors)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "smoothing", float(self.smoothing))

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def log_posteriors(self, x) -> np.ndarray:
        """Unnormalized log p(c_j) + sum_i log N(x_i; mean_ji, var_ji) per class."""
        values = np.asarray(x, dtype=np.float64).reshape(-1)
        if values.shape[0] != self.dim:
            raise DimensionMismatchError(f"expected {self.dim} dims, got {values.shape[0]}")
        squared = (values[None, :] - self.means) ** 2 / self.variances
        log_likelihood = -0.5 * np.sum(_LOG_2PI + np.log(self.variances) + squared, axis=1)
        with np.errstate(divide="ignore"):
            return np.log(self.priors) + log_likelihood


def nb_train(
    X,
    labels: Sequence[str],
    epsilon_factor: float = 1e-9,
    classes: Optional[Sequence[str]] = None,
) -> NbModel:
    """
    Estimate priors, means and smoothed variances per class

    The smoothing term is `epsilon_factor` times the largest per-dimension
    variance of all training vectors, so decisions do not depend on the overall
    scale of the data. Single-vector classes get exactly the smoothing term.

    Args:
        X: Training vectors (n, d), unscaled
        labels: Class label per vector
        epsilon_factor: Relative variance smoothing
        classes: Class list to model; defaults to the sorted labels

    Returns:
        NbModel: The trained model

    Raises:
        EmptyClassError: When a listed class has no training vectors
    """
    vectors = np.asarray(X, dtype=np.float64)
    labels = [str(label) for label in labels]
    if vectors.size == 0 or not labels:
        raise EmptyTrainingSetError("cannot train Naive Bayes on an empty training set")
    if vectors.ndim != 2 or vectors.shape[0] != len(labels):
        raise DimensionMismatchError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(vectors)):
        raise NonFiniteFeatureError("NB training vectors contain non-finite values")

    class_list = tuple(sorted(set(labels))) if classes is None else tuple(str(c) for c in classes)
    unknown = sorted(set(labels) - set(class_list))
    if unknown:
        raise DimensionMismatchError(f"labels not in the class list: {', '.join(unknown)}")

    smoothing = epsilon_factor * float(np.max(vectors.var(axis=0)))
    if smoothing <= 0:
        smoothing = epsilon_factor

    label_array = np.asarray(labels)
    counts = np.zeros(len(class_list))
    means = np.zeros((len(class_list), vectors.shape[1]))
    variances = np.zeros_like(means)
    for index, name in enumerate(class_list):
        members = vectors[label_array == name]
        if members.shape[0] == 0:
            raise EmptyClassError(f"class {name} has no training vectors")
        counts[index] = members.shape[0]
        means[index] = members.mean(axis=0)
        variances[index] = members.var(axis=0) + smoothing

    logger.info(f"Trained Naive Bayes over {len(class_list)} classes, {vectors.shape[1]} dims")
    return NbModel(class_list, counts / counts.sum(), means, variances, smoothing)


def nb_score(model: NbModel, x) -> ScoreVector:
    """
    Score one vector by class posterior

    Returns:
        ScoreVector: Softmax of the per-class log posteriors
    """
    return ScoreVector(model.classes, softmax(model.log_posteriors(x)))


def nb_to_json(model: NbModel) -> Dict[str, Any]:
    return {
        "classes": list(model.classes),
        "nb_params": {
            "priors": model.priors.tolist(),
            "means": model.means.tolist(),
            "variances": model.variances.tolist(),
            "smoothing": model.smoothing,
        },
    }


def nb_from_json(document: Dict[str, Any]) -> NbModel:
    try:
        params = document["nb_params"]
        return NbModel(
            tuple(document["classes"]),
            params["priors"],
            params["means"],
            params["variances"],
            params["smoothing"],
        )
    except (KeyError, TypeError) as e:
        raise ArchiveError(f"malformed Naive Bayes document: {e}") from e
