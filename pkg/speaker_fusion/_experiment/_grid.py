import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from speaker_fusion._archive import check_config_hash, read_feature_archive
from speaker_fusion._config import FEATURE_SETS, SYSTEMS, ToolkitConfig, config_hash
from speaker_fusion._exceptions import (
    ArchiveError,
    ConfigHashMismatchError,
    ConfigInvalidError,
    EmptyDecisionsError,
    LeakageError,
    MissingAudioError,
    SpeakerFusionError,
    UtteranceMismatchError,
)
from speaker_fusion._experiment._manifest import ExperimentManifest, ManifestEntry
from speaker_fusion._experiment._synthetic import SYNTHETIC_CONFIG_HASH
from speaker_fusion._frontend._audio import load_wav
from speaker_fusion._frontend._feature_matrix import FeatureKind, FeatureMatrix
from speaker_fusion._frontend._features import FEATURE_SET_KINDS, add_dynamics, extract_stream
from speaker_fusion._fusion import FusionWeights, concat_supervectors, decide, fuse_scores
from speaker_fusion._models._gmm import (
    GmmModel,
    Supervector,
    em_fit,
    extract_supervector,
    load_model,
    map_adapt_means,
    save_model,
)
from speaker_fusion._models._naive_bayes import NbModel, nb_score, nb_train
from speaker_fusion._models._scores import ScoreVector
from speaker_fusion._models._svm import OvoSvmModel, ovo_score, ovo_train

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IdentificationRate:
    """Correct assignments out of all assignments"""

    correct: int
    total: int

    def __post_init__(self):
        if self.total < 1:
            raise EmptyDecisionsError("an identification rate needs at least one decision")
        if not 0 <= self.correct <= self.total:
            raise ConfigInvalidError(f"correct={self.correct} outside [0, {self.total}]")

    @property
    def rate(self) -> float:
        """Percentage at full precision."""
        return 100.0 * self.correct / self.total

    def formatted(self) -> str:
        """The percentage truncated (not rounded) to two decimals, e.g. 24/56 -> "42.85"."""
        hundredths = (10000 * self.correct) // self.total
        return f"{hundredths // 100}.{hundredths % 100:02d}"


def identification_rate(decisions: Iterable[Tuple[str, str]]) -> IdentificationRate:
    """
    Count correct identifications

    Args:
        decisions: (predicted, truth) pairs

    Returns:
        IdentificationRate: Exact counts

    Raises:
        EmptyDecisionsError: When there are no decisions
    """
    decisions = list(decisions)
    if not decisions:
        raise EmptyDecisionsError("no decisions to score")
    correct = sum(1 for predicted, truth in decisions if predicted == truth)
    return IdentificationRate(correct, len(decisions))


@dataclass(frozen=True)
class GridCell:
    feature_set: str
    system: int
    rate: Optional[IdentificationRate] = None
    error: Optional[str] = None

    @property
    def status(self) -> str:
        return "ok" if self.rate is not None else "failed"


@dataclass(frozen=True)
class TrialRecord:
    """One test utterance scored under one feature set"""

    feature_set: str
    utterance_id: str
    truth: str
    predictions: Dict[int, str]
    scores: Dict[int, Dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature_set,
            "utterance_id": self.utterance_id,
            "truth": self.truth,
            "predictions": {f"system{n}": p for n, p in sorted(self.predictions.items())},
            "scores": {f"system{n}": s for n, s in sorted(self.scores.items())},
        }


@dataclass
class ResultsGrid:
    """Identification rates per feature set and system"""

    features: Tuple[str, ...]
    systems: Tuple[int, ...]
    cells: Dict[Tuple[str, int], GridCell] = field(default_factory=dict)
    trials: List[TrialRecord] = field(default_factory=list)
    enrolled_models: Dict[str, int] = field(default_factory=dict)

    def cell(self, feature_set: str, system: int) -> GridCell:
        return self.cells[(feature_set, system)]


class Pipeline:
    """
    Shared training state for one manifest and configuration

    Feature streams, UBMs and supervectors are computed on first use and
    reused by every cell that needs them.
    """

    def __init__(self, manifest: ExperimentManifest, config: ToolkitConfig):
        self.config = config
        self.train = manifest.train_entries
        test = manifest.test_entries
        if config.experiment.exclude_shared_text_from_test:
            test = tuple(e for e in test if not e.shared_text)
        if not self.train or not test:
            raise ConfigInvalidError(
                "the manifest needs both train and test entries; assign splits first"
            )
        self.test = test
        self.speakers = tuple(sorted({e.speaker_id for e in self.train}))
        self._corpus_hash = manifest.corpus_hash()
        self._test_ids = {e.utterance_id for e in test}
        self._test_paths = {p for e in test for p in e.source_paths()}
        self._streams: Dict[Tuple[str, FeatureKind], FeatureMatrix] = {}
        self._ubms: Dict[FeatureKind, GmmModel] = {}
        self._supervectors: Dict[FeatureKind, Dict[str, Supervector]] = {}
        self.enrolled_models: Dict[str, int] = {}
        self.frontend_config_hash = config_hash(config.frontend)
        self.ubm_config_hash = config_hash(config.frontend, config.em)
        self.supervector_config_hash = config_hash(config.frontend, config.em, config.map)
        self._archive_hashes: Dict[FeatureKind, str] = {}

    def assert_no_leakage(self, stage: str, entries: Sequence[ManifestEntry]) -> None:
        """
        Refuse training inputs that share an utterance id or a source file with the test set

        Raises:
            LeakageError: On any overlap
        """
        ids = self._test_ids.intersection(e.utterance_id for e in entries)
        paths = self._test_paths.intersection(p for e in entries for p in e.source_paths())
        if ids or paths:
            overlap = sorted(ids) + sorted(str(p) for p in paths)
            raise LeakageError(f"{stage} inputs overlap the test set: {', '.join(overlap)}")

    def stream(self, entry: ManifestEntry, kind: FeatureKind) -> FeatureMatrix:
        key = (entry.utterance_id, kind)
        if key not in self._streams:
            self._streams[key] = self._load_stream(entry, kind)
        return self._streams[key]

    def _read_archive(self, path: Path) -> FeatureMatrix:
        """
        Load a feature archive written under the current front-end configuration

        Synthetic archives bypass the front-end and are accepted as such, but one
        feature kind never mixes them with extracted archives.

        Raises:
            ConfigHashMismatchError: On an archive from another configuration
        """
        feat, header = read_feature_archive(path)
        stored = header.get("config_hash")
        expected = self._archive_hashes.setdefault(
            feat.kind,
            SYNTHETIC_CONFIG_HASH if stored == SYNTHETIC_CONFIG_HASH else self.frontend_config_hash,
        )
        check_config_hash(stored, expected, f"{feat.kind.value} archive", str(path))
        return feat

    def _load_stream(self, entry: ManifestEntry, kind: FeatureKind) -> FeatureMatrix:
        cfg = self.config.frontend
        if kind in entry.features:
            feat = self._read_archive(entry.features[kind])
        elif kind.has_dynamics and kind.base in entry.features:
            base = self._read_archive(entry.features[kind.base])
            if base.kind is not kind.base:
                raise ArchiveError(
                    f"expected a {kind.base.value} archive, found {base.kind.value}",
                    str(entry.features[kind.base]),
                )
            feat = add_dynamics(base, cfg.delta_width)
        elif entry.path is not None:
            feat = extract_stream(load_wav(entry.path), kind, cfg)
        else:
            raise MissingAudioError(
                f"{entry.utterance_id} has neither audio nor a {kind.value} archive"
            )
        if feat.kind is not kind:
            raise ArchiveError(
                f"{entry.utterance_id}: expected {kind.value} frames, found {feat.kind.value}"
            )
        return feat

    def _ubm_cache_path(self, kind: FeatureKind) -> Optional[Path]:
        cache_dir = self.config.experiment.cache_dir
        if cache_dir is None:
            return None
        key = config_hash(self._corpus_hash, kind.value, self.config.frontend, self.config.em)
        return Path(cache_dir) / f"ubm-{kind.value}-{key[:16]}.json"

    def use_ubm(self, kind: FeatureKind, model: GmmModel) -> None:
        """
        Adopt a background model trained elsewhere

        Raises:
            ConfigHashMismatchError: When it was trained under another configuration
            ArchiveError: When it models another feature kind
        """
        check_config_hash(model.config_hash, self.ubm_config_hash, f"UBM {kind.value}")
        if model.feature_kind not in (None, kind.value):
            raise ArchiveError(f"expected a {kind.value} UBM, found {model.feature_kind}")
        self._ubms[kind] = model

    def ubm(self, kind: FeatureKind) -> GmmModel:
        """Background model of one feature kind, trained on every training utterance."""
        if kind in self._ubms:
            return self._ubms[kind]
        self.assert_no_leakage(f"UBM {kind.value}", self.train)
        cache_path = self._ubm_cache_path(kind)
        if cache_path is not None and cache_path.is_file():
            logger.info(f"Loading cached UBM for {kind.value} from {cache_path}")
            model = load_model(cache_path, self.ubm_config_hash)
        else:
            data = np.vstack([self.stream(e, kind).vectors for e in self.train])
            logger.info(
                f"Training {self.config.em.n_components}-component UBM for {kind.value} "
                f"on {data.shape[0]} frames"
            )
            model = em_fit(data, self.config.em)
            model = dataclasses.replace(
                model,
                feature_kind=kind.value,
                config_hash=self.ubm_config_hash,
            )
            if cache_path is not None:
                save_model(cache_path, model)
        self._ubms[kind] = model
        return model

    def use_supervectors(self, kind: FeatureKind, supervectors: Dict[str, Supervector]) -> None:
        self._supervectors[kind] = supervectors

    def supervectors(self, kind: FeatureKind) -> Dict[str, Supervector]:
        """MAP-adapt one model per train and test utterance and pool its means."""
        if kind in self._supervectors:
            return self._supervectors[kind]
        ubm = self.ubm(kind)
        self.assert_no_leakage(f"enrollment {kind.value}", self.train)
        entries = self.train + self.test
        frames = [self.stream(e, kind).vectors for e in entries]
        map_cfg = self.config.map

        def adapt(entry: ManifestEntry, data: np.ndarray) -> Supervector:
            model = map_adapt_means(ubm, data, map_cfg)
            return extract_supervector(model, map_cfg.kl_scaling, entry.utterance_id)

        adapted = Parallel(n_jobs=self.config.experiment.workers, prefer="threads")(
            delayed(adapt)(e, data) for e, data in zip(entries, frames)
        )
        supervectors = {sv.utterance_id: sv for sv in adapted}
        enrolled = sum(1 for e in self.train if e.utterance_id in supervectors)
        if enrolled != len(self.train):
            raise UtteranceMismatchError(
                f"adapted {enrolled} models for {len(self.train)} training utterances"
            )
        self.enrolled_models[kind.value] = enrolled
        logger.info(f"MAP-adapted {len(adapted)} models for {kind.value}")
        self._supervectors[kind] = supervectors
        return supervectors

    def vectors(self, feature_set: str, entries: Sequence[ManifestEntry]) -> np.ndarray:
        """Supervector matrix of a feature set, one row per entry."""
        if feature_set == "F5":
            first, second = (
                self.supervectors(FEATURE_SET_KINDS[s])
                for s in self.config.fusion.supervector_sources
            )
            rows = [
                concat_supervectors(first[e.utterance_id], second[e.utterance_id]).values
                for e in entries
            ]
        elif feature_set in FEATURE_SET_KINDS:
            store = self.supervectors(FEATURE_SET_KINDS[feature_set])
            rows = [store[e.utterance_id].values for e in entries]
        else:
            raise ConfigInvalidError(f"Unknown feature set: {feature_set}")
        return np.vstack(rows)

    def train_svm(self, feature_set: str) -> OvoSvmModel:
        X = self.vectors(feature_set, self.train)
        self.assert_no_leakage(f"SVM scaler and training on {feature_set}", self.train)
        cfg = self.config.svm
        return ovo_train(
            X,
            [e.speaker_id for e in self.train],
            cfg.C,
            cfg.tol,
            cfg.seed,
            cfg.max_passes,
            cfg.max_iterations,
        )

    def train_nb(self, feature_set: str) -> NbModel:
        X = self.vectors(feature_set, self.train)
        self.assert_no_leakage(f"Naive Bayes training on {feature_set}", self.train)
        return nb_train(
            X,
            [e.speaker_id for e in self.train],
            self.config.nb.epsilon_factor,
            classes=self.speakers,
        )

    def fuse(self, svm_scores: List[ScoreVector], nb_scores: List[ScoreVector]):
        weights = FusionWeights.from_config(self.config.fusion)
        return [
            fuse_scores(a, b, weights, self.config.fusion.rule)
            for a, b in zip(svm_scores, nb_scores)
        ]


def _ordered(requested: Iterable, allowed: Tuple, what: str) -> Tuple:
    requested = set(requested)
    unknown = requested - set(allowed)
    if unknown:
        raise ConfigInvalidError(f"Unknown {what}: {', '.join(sorted(map(str, unknown)))}")
    if not requested:
        raise ConfigInvalidError(f"At least one {what} is required")
    return tuple(x for x in allowed if x in requested)


def _score_systems(
    pipeline: Pipeline, feature_set: str, systems: Tuple[int, ...]
) -> Tuple[Dict[int, List[ScoreVector]], Dict[int, str]]:
    test_X = pipeline.vectors(feature_set, pipeline.test)
    scores: Dict[int, List[ScoreVector]] = {}
    errors: Dict[int, str] = {}

    trainers = ((1, pipeline.train_svm, ovo_score), (2, pipeline.train_nb, nb_score))
    for system, train, score in trainers:
        if system not in systems and 3 not in systems:
            continue
        try:
            model = train(feature_set)
            scores[system] = [score(model, x) for x in test_X]  # type: ignore[operator]
        except (LeakageError, ConfigHashMismatchError):
            raise
        except SpeakerFusionError as e:
            logger.warning(f"Feature {feature_set} System {system} failed: {e}")
            errors[system] = str(e)

    if 3 in systems:
        if 1 in scores and 2 in scores:
            try:
                scores[3] = pipeline.fuse(scores[1], scores[2])
            except SpeakerFusionError as e:
                errors[3] = str(e)
        else:
            errors[3] = "score fusion needs System 1 and System 2: " + "; ".join(
                errors.get(n, "") for n in (1, 2) if n in errors
            )
    return scores, errors


def run_grid(
    manifest: ExperimentManifest,
    features: Iterable[str] = FEATURE_SETS,
    systems: Iterable[int] = SYSTEMS,
    config: Optional[ToolkitConfig] = None,
) -> ResultsGrid:
    """
    Evaluate every requested feature set with every requested system

    Stage errors are recorded in the affected cells and the grid continues.
    A leakage of test material into any training input, or an artifact built
    under another configuration, aborts the run.

    Args:
        manifest: Corpus with train and test splits
        features: Subset of F1..F5
        systems: Subset of 1 (SVM), 2 (Naive Bayes), 3 (score fusion)
        config: Toolkit configuration, defaults when omitted

    Returns:
        ResultsGrid: Rates, per-trial decisions and enrollment counts

    Raises:
        LeakageError: When a training stage would see test material
        ConfigHashMismatchError: When an input was built under another configuration
    """
    config = config or ToolkitConfig()
    features = _ordered(features, FEATURE_SETS, "feature set")
    systems = _ordered(systems, SYSTEMS, "system")
    pipeline = Pipeline(manifest, config)
    grid = ResultsGrid(features, systems)

    for feature_set in features:
        try:
            scores, errors = _score_systems(pipeline, feature_set, systems)
        except (LeakageError, ConfigHashMismatchError):
            raise
        except SpeakerFusionError as e:
            logger.warning(f"Feature {feature_set} failed: {e}")
            scores, errors = {}, {n: str(e) for n in systems}

        decisions = {n: [decide(s) for s in vectors] for n, vectors in scores.items()}
        for system in systems:
            if system in errors:
                failed = GridCell(feature_set, system, error=errors[system])
                grid.cells[(feature_set, system)] = failed
                continue
            rate = identification_rate(
                zip(decisions[system], (e.speaker_id for e in pipeline.test))
            )
            grid.cells[(feature_set, system)] = GridCell(feature_set, system, rate)
            logger.info(
                f"Feature {feature_set} System {system}: IR {rate.formatted()}% "
                f"({rate.correct}/{rate.total})"
            )

        for index, entry in enumerate(pipeline.test):
            if not scores:
                break
            grid.trials.append(
                TrialRecord(
                    feature_set,
                    entry.utterance_id,
                    entry.speaker_id,
                    {n: decisions[n][index] for n in scores},
                    {n: scores[n][index].as_dict() for n in scores},
                )
            )

    grid.enrolled_models.update(pipeline.enrolled_models)
    return grid
