import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from speaker_fusion._exceptions import (
    ArchiveError,
    DimensionMismatchError,
    EmptyTrainingSetError,
    NonFiniteFeatureError,
    SingleClassInputError,
)
from speaker_fusion._models._scores import ScoreVector

logger = logging.getLogger(__name__)

# Smallest change of a multiplier that counts as progress
_ALPHA_STEP_EPS = 1e-5


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-dimension [0, 1] scaling learned from training vectors"""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        minimum = np.asarray(self.minimum, dtype=np.float64).reshape(-1)
        maximum = np.asarray(self.maximum, dtype=np.float64).reshape(-1)
        if minimum.shape != maximum.shape or np.any(maximum < minimum):
            raise DimensionMismatchError("scaler bounds must have equal shapes with max >= min")
        object.__setattr__(self, "minimum", minimum)
        object.__setattr__(self, "maximum", maximum)

    @property
    def dim(self) -> int:
        return int(self.minimum.shape[0])


def fit_minmax(train) -> MinMaxScaler:
    """
    Learn per-dimension minimum and maximum

    Raises:
        EmptyTrainingSetError: When no training vectors are given
    """
    vectors = np.asarray(train, dtype=np.float64)
    if vectors.size == 0:
        raise EmptyTrainingSetError("cannot fit a scaler on an empty training set")
    vectors = vectors.reshape(vectors.shape[0], -1)
    return MinMaxScaler(vectors.min(axis=0), vectors.max(axis=0))


def apply_minmax(scaler: MinMaxScaler, x) -> np.ndarray:
    """
    Map vectors to [0, 1]

    Constant training dimensions map to 0.5 and out-of-range values are clipped.

    Args:
        scaler: Fitted scaler
        x: One vector (d,) or a matrix (n, d)

    Returns:
        np.ndarray: Scaled values with the input's shape
    """
    values = np.asarray(x, dtype=np.float64)
    if values.shape[-1] != scaler.dim:
        raise DimensionMismatchError(f"expected {scaler.dim} dims, got {values.shape[-1]}")
    span = scaler.maximum - scaler.minimum
    varying = span > 0
    scaled = np.where(varying, (values - scaler.minimum) / np.where(varying, span, 1.0), 0.5)
    return np.clip(scaled, 0.0, 1.0)


@dataclass(frozen=True)
class BinarySvm:
    """
    Linear-kernel binary SVM

    f(x) = sum_i alpha_i y_i (x . v_i) + b, where `dual_coef` holds alpha_i y_i.
    """

    support_vectors: np.ndarray
    dual_coef: np.ndarray
    bias: float
    C: float = 1.0
    training_error: float = 0.0

    def __post_init__(self):
        support_vectors = np.asarray(self.support_vectors, dtype=np.float64)
        dual_coef = np.asarray(self.dual_coef, dtype=np.float64).reshape(-1)
        if support_vectors.ndim != 2 or support_vectors.shape[0] != dual_coef.shape[0]:
            raise DimensionMismatchError("one dual coefficient per support vector is required")
        object.__setattr__(self, "support_vectors", support_vectors)
        object.__setattr__(self, "dual_coef", dual_coef)
        object.__setattr__(self, "bias", float(self.bias))
        # Linear kernel: the primal weight vector makes evaluation O(d).
        object.__setattr__(self, "_weight", dual_coef @ support_vectors)

    @property
    def weight(self) -> np.ndarray:
        return self._weight  # type: ignore[attr-defined]

    @property
    def dim(self) -> int:
        return int(self.support_vectors.shape[1])

    def decision_function(self, x) -> np.ndarray:
        values = np.asarray(x, dtype=np.float64)
        if values.shape[-1] != self.dim:
            raise DimensionMismatchError(f"expected {self.dim} dims, got {values.shape[-1]}")
        return values @ self.weight + self.bias


def smo_train(
    X,
    y,
    C: float = 1.0,
    tol: float = 1e-3,
    max_passes: int = 10,
    seed: int = 0,
    max_iterations: int = 10000,
) -> BinarySvm:
    """
    Train a linear SVM with simplified sequential minimal optimization

    Each sweep visits every multiplier that violates the KKT conditions by more
    than `tol` and pairs it with a second multiplier drawn from a generator
    seeded by `seed`. Training stops after `max_passes` consecutive sweeps
    without a change, or after `max_iterations` sweeps.

    Args:
        X: Training vectors (n, d)
        y: Labels in {-1, +1}
        C: Box constraint
        tol: KKT tolerance
        max_passes: Quiet sweeps required before stopping
        seed: Seed of the second-choice generator
        max_iterations: Hard cap on sweeps

    Returns:
        BinarySvm: The trained machine

    Raises:
        SingleClassInputError: When only one label is present
        NonFiniteFeatureError: When X contains NaN or infinity
    """
    vectors = np.asarray(X, dtype=np.float64)
    labels = np.asarray(y, dtype=np.float64).reshape(-1)
    if vectors.ndim != 2 or vectors.shape[0] != labels.shape[0]:
        raise DimensionMismatchError("X must be (n, d) with one label per row")
    if not np.all(np.isfinite(vectors)):
        raise NonFiniteFeatureError("SVM training vectors contain non-finite values")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise DimensionMismatchError("SVM labels must be -1 or +1")
    if not (np.any(labels > 0) and np.any(labels < 0)):
        raise SingleClassInputError("SVM training needs both +1 and -1 labels")

    n_samples = vectors.shape[0]
    kernel = vectors @ vectors.T
    alphas = np.zeros(n_samples)
    bias = 0.0
    rng = np.random.default_rng(seed)

    passes = 0
    sweeps = 0
    while passes < max_passes and sweeps < max_iterations:
        changed = 0
        for i in range(n_samples):
            error_i = (alphas * labels) @ kernel[:, i] + bias - labels[i]
            violates = (labels[i] * error_i < -tol and alphas[i] < C) or (
                labels[i] * error_i > tol and alphas[i] > 0
            )
            if not violates:
                continue

            j = int(rng.integers(n_samples - 1))
            if j >= i:
                j += 1
            error_j = (alphas * labels) @ kernel[:, j] + bias - labels[j]
            alpha_i_old, alpha_j_old = alphas[i], alphas[j]
            if labels[i] != labels[j]:
                low = max(0.0, alpha_j_old - alpha_i_old)
                high = min(C, C + alpha_j_old - alpha_i_old)
            else:
                low = max(0.0, alpha_i_old + alpha_j_old - C)
                high = min(C, alpha_i_old + alpha_j_old)
            if low >= high:
                continue
            eta = 2.0 * kernel[i, j] - kernel[i, i] - kernel[j, j]
            if eta >= 0:
                continue

            alpha_j = float(np.clip(alpha_j_old - labels[j] * (error_i - error_j) / eta, low, high))
            if abs(alpha_j - alpha_j_old) < _ALPHA_STEP_EPS:
                continue
            alpha_i = alpha_i_old + labels[i] * labels[j] * (alpha_j_old - alpha_j)
            alphas[i] = min(max(alpha_i, 0.0), C)
            alphas[j] = alpha_j

            b1 = (
                bias
                - error_i
                - labels[i] * (alphas[i] - alpha_i_old) * kernel[i, i]
                - labels[j] * (alphas[j] - alpha_j_old) * kernel[i, j]
            )
            b2 = (
                bias
                - error_j
                - labels[i] * (alphas[i] - alpha_i_old) * kernel[i, j]
                - labels[j] * (alphas[j] - alpha_j_old) * kernel[j, j]
            )
            if 0 < alphas[i] < C:
                bias = b1
            elif 0 < alphas[j] < C:
                bias = b2
            else:
                bias = (b1 + b2) / 2.0
            changed += 1

        sweeps += 1
        passes = passes + 1 if changed == 0 else 0

    support = alphas > 0
    machine = BinarySvm(vectors[support], alphas[support] * labels[support], bias, C)
    predictions = np.where(machine.decision_function(vectors) >= 0, 1.0, -1.0)
    training_error = float(np.mean(predictions != labels))
    logger.debug(
        f"SMO finished after {sweeps} sweeps with {int(support.sum())} support vectors, "
        f"training error {training_error:.3f}"
    )
    return BinarySvm(machine.support_vectors, machine.dual_coef, bias, C, training_error)


@dataclass(frozen=True)
class OvoSvmModel:
    """One-vs-one linear SVM over a fixed list of classes"""

    classes: Tuple[str, ...]
    machines: Tuple[Tuple[int, int, BinarySvm], ...]
    scaler: MinMaxScaler

    def __post_init__(self):
        k = len(self.classes)
        pairs = sorted((i, j) for i, j, _ in self.machines)
        expected = [(i, j) for i in range(k) for j in range(i + 1, k)]
        if pairs != expected:
            raise DimensionMismatchError(
                f"one-vs-one over {k} classes needs exactly {len(expected)} pairwise machines"
            )


def ovo_train(
    X,
    labels: Sequence[str],
    C: float = 1.0,
    tol: float = 1e-3,
    seed: int = 0,
    max_passes: int = 10,
    max_iterations: int = 10000,
) -> OvoSvmModel:
    """
    Train k(k-1)/2 pairwise machines on [0, 1]-scaled vectors

    The scaler is fitted on all training vectors. The machine for classes
    (i, j), i < j in sorted class order, labels class i as +1 and draws its
    seed from (seed, i, j).

    Args:
        X: Training vectors (n, d)
        labels: Class label per vector
        C, tol, seed, max_passes, max_iterations: SMO parameters

    Returns:
        OvoSvmModel: Trained model with embedded scaler
    """
    vectors = np.asarray(X, dtype=np.float64)
    labels = [str(label) for label in labels]
    if vectors.ndim != 2 or vectors.shape[0] != len(labels):
        raise DimensionMismatchError("X must be (n, d) with one label per row")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise SingleClassInputError("one-vs-one training needs at least two classes")

    scaler = fit_minmax(vectors)
    scaled = apply_minmax(scaler, vectors)
    label_array = np.asarray(labels)

    machines: List[Tuple[int, int, BinarySvm]] = []
    for i in range(len(classes)):
        for j in range(i + 1, len(classes)):
            mask = (label_array == classes[i]) | (label_array == classes[j])
            pair_labels = np.where(label_array[mask] == classes[i], 1.0, -1.0)
            pair_seed = int(np.random.SeedSequence([seed, i, j]).generate_state(1)[0])
            machine = smo_train(
                scaled[mask], pair_labels, C, tol, max_passes, pair_seed, max_iterations
            )
            machines.append((i, j, machine))
    logger.info(f"Trained {len(machines)} one-vs-one machines for {len(classes)} classes")
    return OvoSvmModel(classes, tuple(machines), scaler)


def ovo_votes(model: OvoSvmModel, x) -> Tuple[np.ndarray, np.ndarray]:
    """
    Count pairwise votes and summed signed margins per class

    Returns:
        Tuple[np.ndarray, np.ndarray]: Votes (k,) and margin sums (k,)
    """
    scaled = apply_minmax(model.scaler, np.asarray(x, dtype=np.float64).reshape(-1))
    votes = np.zeros(len(model.classes))
    margins = np.zeros(len(model.classes))
    for i, j, machine in model.machines:
        value = float(machine.decision_function(scaled))
        votes[i if value >= 0 else j] += 1
        margins[i] += value
        margins[j] -= value
    return votes, margins


def ovo_score(model: OvoSvmModel, x) -> ScoreVector:
    """
    Score one vector by one-vs-one voting

    Returns:
        ScoreVector: Vote fractions summing to 1, with summed margins as tie-break
    """
    votes, margins = ovo_votes(model, x)
    return ScoreVector(model.classes, votes / votes.sum(), tie_break=margins)


def ovo_to_json(model: OvoSvmModel) -> Dict[str, Any]:
    return {
        "classes": list(model.classes),
        "scaler": {"min": model.scaler.minimum.tolist(), "max": model.scaler.maximum.tolist()},
        "machines": [
            {
                "pair": [i, j],
                "support_vectors": m.support_vectors.tolist(),
                "dual_coef": m.dual_coef.tolist(),
                "bias": m.bias,
                "C": m.C,
                "training_error": m.training_error,
            }
            for i, j, m in model.machines
        ],
    }


def ovo_from_json(document: Dict[str, Any]) -> OvoSvmModel:
    try:
        scaler = MinMaxScaler(document["scaler"]["min"], document["scaler"]["max"])
        machines = tuple(
            (
                int(m["pair"][0]),
                int(m["pair"][1]),
                BinarySvm(
                    np.asarray(m["support_vectors"], dtype=np.float64).reshape(
                        -1, scaler.dim
                    ),
                    m["dual_coef"],
                    m["bias"],
                    m["C"],
                    m["training_error"],
                ),
            )
            for m in document["machines"]
        )
        return OvoSvmModel(tuple(document["classes"]), machines, scaler)
    except (KeyError, TypeError, IndexError) as e:
        raise ArchiveError(f"malformed SVM document: {e}") from e
