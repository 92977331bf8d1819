import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import logsumexp

from speaker_fusion._archive import (
    atomic_write_text,
    check_config_hash,
    read_archive,
    write_archive,
)
from speaker_fusion._config import EmConfig, MapConfig
from speaker_fusion._exceptions import (
    ArchiveError,
    DimensionMismatchError,
    EmTrainingError,
    InsufficientDataError,
    NonFiniteFeatureError,
    NumericalFailureError,
)

logger = logging.getLogger(__name__)

MODEL_DOCUMENT_VERSION = 1
_LOG_2PI = np.log(2.0 * np.pi)
_MIN_VARIANCE = 1e-10
# Relative slack allowed when checking that EM never lowers the log-likelihood
_MONOTONIC_SLACK = 1e-8
_TINY = np.finfo(np.float64).tiny


def _as_frames(data, dim: Optional[int] = None) -> np.ndarray:
    frames = np.asarray(data, dtype=np.float64)
    if frames.ndim == 1:
        frames = frames.reshape(1, -1)
    if frames.ndim != 2:
        raise DimensionMismatchError(f"expected a frames x dims matrix, got shape {frames.shape}")
    if dim is not None and frames.shape[1] != dim:
        raise DimensionMismatchError(f"expected {dim} dims, got {frames.shape[1]}")
    if not np.all(np.isfinite(frames)):
        raise NonFiniteFeatureError("frames contain non-finite values")
    return frames


@dataclass(frozen=True)
class GmmModel:
    """Diagonal-covariance Gaussian mixture"""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    feature_kind: Optional[str] = None
    config_hash: Optional[str] = None

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        means = np.asarray(self.means, dtype=np.float64)
        variances = np.asarray(self.variances, dtype=np.float64)
        if means.ndim != 2 or means.shape[0] != weights.shape[0] or means.shape != variances.shape:
            raise DimensionMismatchError(
                f"inconsistent shapes: weights {weights.shape}, means {means.shape}, "
                f"variances {variances.shape}"
            )
        if not (
            np.all(np.isfinite(weights))
            and np.all(np.isfinite(means))
            and np.all(np.isfinite(variances))
        ):
            raise NumericalFailureError("model parameters must be finite")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise NumericalFailureError(
                f"mixture weights must be >= 0 and sum to 1, got {weights.sum()}"
            )
        if np.any(variances <= 0):
            raise NumericalFailureError("variances must be positive")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @property
    def n_components(self) -> int:
        return int(self.weights.shape[0])

    @property
    def dim(self) -> int:
        return int(self.means.shape[1])

    def component_log_densities(self, data) -> np.ndarray:
        """
        Weighted component log densities log p_i + log b_i(x_t)

        Args:
            data: Frames of shape (T, d)

        Returns:
            np.ndarray: Matrix of shape (T, M)
        """
        frames = _as_frames(data, self.dim)
        precision = 1.0 / self.variances
        quadratic = (
            (frames**2) @ precision.T
            - 2.0 * frames @ (self.means * precision).T
            + np.sum(self.means**2 * precision, axis=1)[None, :]
        )
        log_det = np.sum(np.log(self.variances), axis=1)
        with np.errstate(divide="ignore"):
            log_weights = np.log(self.weights)
        return log_weights[None, :] - 0.5 * (self.dim * _LOG_2PI + log_det[None, :] + quadratic)

    def posteriors(self, data) -> Tuple[np.ndarray, np.ndarray]:
        """
        Component responsibilities Pr(i | x_t) and per-frame log-likelihoods

        Returns:
            Tuple[np.ndarray, np.ndarray]: Responsibilities (T, M) and log p(x_t) (T,)
        """
        weighted = self.component_log_densities(data)
        frame_ll = logsumexp(weighted, axis=1)
        return np.exp(weighted - frame_ll[:, None]), frame_ll

    def log_likelihood(self, data) -> float:
        """Total log-likelihood of a set of frames."""
        return float(np.sum(logsumexp(self.component_log_densities(data), axis=1)))


@dataclass(frozen=True)
class Supervector:
    """Concatenated component means of one adapted model"""

    values: np.ndarray
    n_components: int
    dim: int
    source_feature_kind: Optional[str] = None
    utterance_id: Optional[str] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.shape[0] != self.n_components * self.dim:
            raise DimensionMismatchError(
                f"supervector of length {values.shape[0]} does not match "
                f"M={self.n_components} x d={self.dim}"
            )
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def component_means(self) -> np.ndarray:
        """Split back into one block of d values per component."""
        return self.values.reshape(self.n_components, self.dim)


@dataclass
class EmReport:
    """What happened during one EM run"""

    log_likelihoods: List[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    empty_components: List[int] = field(default_factory=list)


def gmm_log_density(model: GmmModel, x) -> float:
    """
    Evaluate log p(x | model) in the log domain

    Args:
        model: Mixture model
        x: A single d-dimensional vector

    Returns:
        float: logsumexp_i [log p_i + log b_i(x)]

    Raises:
        DimensionMismatchError: When x does not have d entries
    """
    vector = np.asarray(x, dtype=np.float64).reshape(-1)
    if vector.shape[0] != model.dim:
        raise DimensionMismatchError(f"expected {model.dim} dims, got {vector.shape[0]}")
    diff = vector[None, :] - model.means
    log_b = -0.5 * (
        model.dim * _LOG_2PI
        + np.sum(np.log(model.variances), axis=1)
        + np.sum(diff**2 / model.variances, axis=1)
    )
    with np.errstate(divide="ignore"):
        log_weights = np.log(model.weights)
    return float(logsumexp(log_weights + log_b))


def _kmeans_plus_plus(data: np.ndarray, n_components: int, rng: np.random.Generator) -> np.ndarray:
    n_frames = data.shape[0]
    centers = np.empty((n_components, data.shape[1]))
    centers[0] = data[rng.integers(n_frames)]
    closest = np.sum((data - centers[0]) ** 2, axis=1)
    for m in range(1, n_components):
        total = closest.sum()
        if total > 0:
            index = rng.choice(n_frames, p=closest / total)
        else:
            index = rng.integers(n_frames)
        centers[m] = data[index]
        closest = np.minimum(closest, np.sum((data - centers[m]) ** 2, axis=1))
    return centers


def _initial_means(data: np.ndarray, cfg: EmConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.rng_seed)
    if cfg.init_method == "random":
        return data[rng.choice(data.shape[0], cfg.n_components, replace=False)].copy()
    return _kmeans_plus_plus(data, cfg.n_components, rng)


def em_fit_with_report(data, cfg: EmConfig) -> Tuple[GmmModel, EmReport]:
    """
    Train a diagonal GMM by expectation-maximization

    Means are seeded by k-means++ (or random frames) from `cfg.rng_seed`, every
    variance starts at the global data variance, and variances are floored at
    `cfg.variance_floor_factor` times the global variance. A component that
    receives no responsibility keeps its previous mean and variance and is
    listed in the report.

    Args:
        data: Training frames of shape (T, d) with T >= M
        cfg: EM configuration

    Returns:
        Tuple[GmmModel, EmReport]: The trained model and the training report

    Raises:
        InsufficientDataError: When there are fewer frames than components
        EmTrainingError: When an iteration lowers the log-likelihood beyond tolerance
    """
    frames = _as_frames(data)
    n_frames, dim = frames.shape
    if dim < 1 or n_frames < cfg.n_components:
        raise InsufficientDataError(
            f"EM with M={cfg.n_components} needs at least {cfg.n_components} frames, "
            f"got {n_frames}"
        )

    global_variance = frames.var(axis=0)
    floor = np.maximum(cfg.variance_floor_factor * global_variance, _MIN_VARIANCE)
    means = _initial_means(frames, cfg)
    variances = np.tile(np.maximum(global_variance, floor), (cfg.n_components, 1))
    weights = np.full(cfg.n_components, 1.0 / cfg.n_components)
    model = GmmModel(weights, means, variances)
    squared = frames**2

    report = EmReport()
    empty = set()
    previous: Optional[float] = None
    for iteration in range(cfg.max_iterations + 1):
        responsibilities, frame_ll = model.posteriors(frames)
        total_ll = float(frame_ll.sum())
        report.log_likelihoods.append(total_ll)
        logger.debug(f"EM iteration {iteration}: log-likelihood {total_ll:.6f}")

        if previous is not None:
            if total_ll < previous - _MONOTONIC_SLACK * abs(previous):
                raise EmTrainingError(
                    f"log-likelihood decreased from {previous} to {total_ll} "
                    f"at iteration {iteration}"
                )
            if (total_ll - previous) / max(abs(previous), _TINY) < cfg.log_likelihood_rel_tol:
                report.converged = True
                break
        if iteration == cfg.max_iterations:
            break
        previous = total_ll

        occupancy = responsibilities.sum(axis=0)
        live = occupancy > np.finfo(np.float64).eps
        empty.update(int(i) for i in np.flatnonzero(~live))
        safe = np.where(live, occupancy, 1.0)[:, None]

        new_means = (responsibilities.T @ frames) / safe
        new_variances = (responsibilities.T @ squared) / safe - new_means**2
        new_means = np.where(live[:, None], new_means, model.means)
        new_variances = np.where(live[:, None], new_variances, model.variances)
        new_variances = np.maximum(new_variances, floor[None, :])
        new_weights = occupancy / occupancy.sum()

        model = GmmModel(new_weights, new_means, new_variances)
        report.iterations = iteration + 1

    report.empty_components = sorted(empty)
    if report.empty_components:
        logger.warning(f"EM components without responsibility: {report.empty_components}")
    logger.info(
        f"EM finished after {report.iterations} iterations "
        f"(converged={report.converged}, log-likelihood {report.log_likelihoods[-1]:.4f})"
    )
    return model, report


def em_fit(data, cfg: EmConfig) -> GmmModel:
    """Train a diagonal GMM by EM; see `em_fit_with_report`."""
    model, _ = em_fit_with_report(data, cfg)
    return model


def map_adapt_means(ubm: GmmModel, data, cfg: MapConfig) -> GmmModel:
    """
    MAP-adapt the UBM means to a set of frames

    With n_i = sum_t Pr(i|x_t), E_i = sum_t Pr(i|x_t) x_t / n_i and
    alpha_i = n_i / (n_i + r), the adapted mean is alpha_i E_i + (1 - alpha_i) mu_i.
    Weights and variances are copied from the UBM.

    Args:
        ubm: Background model
        data: Adaptation frames (T, d), T >= 1
        cfg: MAP configuration holding the relevance factor r

    Returns:
        GmmModel: Model with adapted means
    """
    frames = _as_frames(data, ubm.dim)
    if frames.shape[0] < 1:
        raise InsufficientDataError("MAP adaptation needs at least one frame")
    responsibilities, _ = ubm.posteriors(frames)
    occupancy = responsibilities.sum(axis=0)
    first_order = responsibilities.T @ frames

    expected = ubm.means.copy()
    np.divide(first_order, occupancy[:, None], out=expected, where=occupancy[:, None] > 0)
    alpha = (occupancy / (occupancy + cfg.relevance_factor))[:, None]
    adapted = alpha * expected + (1.0 - alpha) * ubm.means
    return GmmModel(ubm.weights, adapted, ubm.variances, ubm.feature_kind, ubm.config_hash)


def extract_supervector(
    model: GmmModel, kl_scaling: bool = False, utterance_id: Optional[str] = None
) -> Supervector:
    """
    Pool the component means into one supervector

    Args:
        model: Adapted model
        kl_scaling: Scale block i by sqrt(p_i) / sigma_i
        utterance_id: Utterance the model was adapted from

    Returns:
        Supervector: mu_0 || mu_1 || ... || mu_{M-1}
    """
    means = model.means
    if kl_scaling:
        means = np.sqrt(model.weights)[:, None] * means / np.sqrt(model.variances)
    return Supervector(
        means.reshape(-1).copy(),
        model.n_components,
        model.dim,
        model.feature_kind,
        utterance_id,
    )


def model_to_json(model: GmmModel) -> Dict[str, Any]:
    return {
        "version": MODEL_DOCUMENT_VERSION,
        "M": model.n_components,
        "d": model.dim,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "variances": model.variances.tolist(),
        "feature_kind": model.feature_kind,
        "config_hash": model.config_hash,
    }


def model_from_json(document: Dict[str, Any]) -> GmmModel:
    """
    Rebuild a model from its JSON document

    Raises:
        ArchiveError: On an unknown version or missing fields
    """
    if document.get("version") != MODEL_DOCUMENT_VERSION:
        raise ArchiveError(f"unsupported GMM document version {document.get('version')}")
    try:
        model = GmmModel(
            document["weights"],
            document["means"],
            document["variances"],
            document.get("feature_kind"),
            document.get("config_hash"),
        )
    except KeyError as e:
        raise ArchiveError(f"GMM document lacks field {e}") from e
    if model.n_components != document.get("M") or model.dim != document.get("d"):
        raise ArchiveError("GMM document M/d do not match its parameters")
    return model


def save_model(path: Union[str, Path], model: GmmModel) -> None:
    atomic_write_text(path, json.dumps(model_to_json(model)))


def load_model(path: Union[str, Path], expected_config_hash: Optional[str] = None) -> GmmModel:
    """
    Load a model document

    Args:
        path: Document path
        expected_config_hash: When given, the model must carry this hash

    Raises:
        ArchiveError: On unreadable documents
        ConfigHashMismatchError: When the model was trained under another configuration
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError as e:
        raise ArchiveError("model document not found", str(path)) from e
    except json.JSONDecodeError as e:
        raise ArchiveError(f"model document is not valid JSON: {e}", str(path)) from e
    model = model_from_json(document)
    check_config_hash(model.config_hash, expected_config_hash, "GMM", str(path))
    return model


def write_supervector_store(
    path: Union[str, Path],
    supervectors: Sequence[Supervector],
    config_hash: Optional[str] = None,
) -> None:
    """
    Store supervectors of one kind as an archive with one row per utterance

    Args:
        path: Destination archive
        supervectors: Supervectors sharing M, d and source kind
        config_hash: Hash of the configuration the supervectors were adapted under
    """
    if not supervectors:
        raise ArchiveError("cannot store an empty set of supervectors", str(path))
    first = supervectors[0]
    for sv in supervectors:
        if (sv.n_components, sv.dim, sv.source_feature_kind) != (
            first.n_components,
            first.dim,
            first.source_feature_kind,
        ):
            raise DimensionMismatchError("a supervector store holds one kind and one M x d")
    header = {
        "kind": first.source_feature_kind,
        "n_components": first.n_components,
        "component_dim": first.dim,
        "utterance_ids": [sv.utterance_id for sv in supervectors],
        "config_hash": config_hash,
    }
    write_archive(path, np.vstack([sv.values for sv in supervectors]), header, dtype="<f8")


def read_supervector_store(
    path: Union[str, Path], expected_config_hash: Optional[str] = None
) -> Dict[str, Supervector]:
    """
    Load a store written by `write_supervector_store`, keyed by utterance id

    Raises:
        ArchiveError: On unreadable stores
        ConfigHashMismatchError: When `expected_config_hash` is given and differs
    """
    matrix, header = read_archive(path)
    check_config_hash(
        header.get("config_hash"), expected_config_hash, "supervector store", str(path)
    )
    try:
        ids = header["utterance_ids"]
        n_components, dim = int(header["n_components"]), int(header["component_dim"])
    except (KeyError, TypeError, ValueError) as e:
        raise ArchiveError(f"not a supervector store: {e}", str(path)) from e
    if len(ids) != matrix.shape[0]:
        raise ArchiveError("utterance id count does not match the stored rows", str(path))
    return {
        utt: Supervector(row, n_components, dim, header.get("kind"), utt)
        for utt, row in zip(ids, matrix)
    }
