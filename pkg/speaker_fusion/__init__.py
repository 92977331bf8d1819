from pathlib import Path
from typing import Iterable, Optional, Union

from speaker_fusion._archive import (
    read_archive,
    read_archive_header,
    read_feature_archive,
    write_archive,
    write_feature_archive,
)
from speaker_fusion._config import (
    FEATURE_SETS,
    SYSTEMS,
    EmConfig,
    ExperimentConfig,
    FrontendConfig,
    FusionConfig,
    MapConfig,
    NbConfig,
    SvmConfig,
    ToolkitConfig,
    config_hash,
)
from speaker_fusion._exceptions import (
    ArchiveError,
    AudioNotFoundError,
    ComponentCountMismatchError,
    ConfigHashMismatchError,
    ConfigInvalidError,
    CorruptHeaderError,
    DimensionMismatchError,
    DuplicateUtteranceError,
    EmptyClassError,
    EmptyDecisionsError,
    EmptyScoresError,
    EmptyTrainingSetError,
    EmTrainingError,
    InsufficientDataError,
    InsufficientUtterancesError,
    LeakageError,
    ManifestParseError,
    MissingAudioError,
    NonFiniteFeatureError,
    NotNormalizedError,
    NumericalFailureError,
    SingleClassInputError,
    SpeakerFusionConfigError,
    SpeakerFusionError,
    SpeakerFusionIOError,
    SpeakerFusionTrainingError,
    SpeakerSetMismatchError,
    UnsupportedFormatError,
    UtteranceMismatchError,
)
from speaker_fusion._experiment._grid import (
    GridCell,
    IdentificationRate,
    Pipeline,
    ResultsGrid,
    TrialRecord,
    identification_rate,
    run_grid,
)
from speaker_fusion._experiment._manifest import (
    ExperimentManifest,
    ManifestEntry,
    auto_split,
    load_manifest,
    write_manifest,
)
from speaker_fusion._experiment._synthetic import generate_synthetic_corpus
from speaker_fusion._experiment._tables import emit_tables
from speaker_fusion._frontend._audio import (
    FrameMatrix,
    SampleBuffer,
    apply_hamming,
    drop_silent_frames,
    frame_signal,
    load_wav,
    pre_emphasize,
    write_wav,
)
from speaker_fusion._frontend._feature_matrix import FeatureKind, FeatureMatrix
from speaker_fusion._frontend._features import (
    FEATURE_SET_KINDS,
    add_dynamics,
    assemble_feature_set,
    deltas,
    extract_stream,
)
from speaker_fusion._frontend._mfcc import mel_filterbank, mfcc
from speaker_fusion._frontend._rasta_plp import rasta_filter, rasta_plp
from speaker_fusion._fusion import (
    FusedSupervector,
    FusionWeights,
    concat_supervectors,
    decide,
    fuse_scores,
    split_fused,
)
from speaker_fusion._models._classifier_io import (
    classifier_from_json,
    classifier_to_json,
    load_classifier,
    save_classifier,
)
from speaker_fusion._models._gmm import (
    EmReport,
    GmmModel,
    Supervector,
    em_fit,
    em_fit_with_report,
    extract_supervector,
    gmm_log_density,
    load_model,
    map_adapt_means,
    read_supervector_store,
    save_model,
    write_supervector_store,
)
from speaker_fusion._models._naive_bayes import NbModel, nb_score, nb_train
from speaker_fusion._models._scores import ScoreVector
from speaker_fusion._models._svm import (
    BinarySvm,
    MinMaxScaler,
    OvoSvmModel,
    apply_minmax,
    fit_minmax,
    ovo_score,
    ovo_train,
    smo_train,
)


def evaluate_corpus(
    manifest_path: Union[str, Path],
    *,
    features: Iterable[str] = FEATURE_SETS,
    systems: Iterable[int] = SYSTEMS,
    config: Optional[ToolkitConfig] = None,
) -> ResultsGrid:
    """
    Load a manifest, split it if needed and run the evaluation grid

    Args:
        manifest_path: JSON-lines manifest
        features: Feature sets to evaluate
        systems: Systems to evaluate
        config: Toolkit configuration. If None, defaults will be used

    Returns:
        ResultsGrid: Identification rates per cell
    """
    config = config or ToolkitConfig()
    manifest = load_manifest(manifest_path)
    if any(e.split is None for e in manifest.entries):
        exp = config.experiment
        manifest = auto_split(
            manifest, exp.n_train, exp.n_test, exp.split_seed, exp.exclude_shared_text_from_test
        )
    return run_grid(manifest, features, systems, config)


__all__ = [
    "evaluate_corpus",
    # configuration
    "FEATURE_SETS",
    "SYSTEMS",
    "ToolkitConfig",
    "FrontendConfig",
    "EmConfig",
    "MapConfig",
    "SvmConfig",
    "NbConfig",
    "FusionConfig",
    "ExperimentConfig",
    "config_hash",
    # audio front-end and features
    "SampleBuffer",
    "FrameMatrix",
    "load_wav",
    "write_wav",
    "pre_emphasize",
    "frame_signal",
    "apply_hamming",
    "drop_silent_frames",
    "FeatureKind",
    "FeatureMatrix",
    "FEATURE_SET_KINDS",
    "mel_filterbank",
    "mfcc",
    "rasta_filter",
    "rasta_plp",
    "deltas",
    "add_dynamics",
    "assemble_feature_set",
    "extract_stream",
    # archives
    "write_archive",
    "read_archive",
    "read_archive_header",
    "write_feature_archive",
    "read_feature_archive",
    # GMM
    "GmmModel",
    "Supervector",
    "EmReport",
    "gmm_log_density",
    "em_fit",
    "em_fit_with_report",
    "map_adapt_means",
    "extract_supervector",
    "save_model",
    "load_model",
    "write_supervector_store",
    "read_supervector_store",
    # classifiers
    "MinMaxScaler",
    "fit_minmax",
    "apply_minmax",
    "BinarySvm",
    "smo_train",
    "OvoSvmModel",
    "ovo_train",
    "ovo_score",
    "NbModel",
    "nb_train",
    "nb_score",
    "ScoreVector",
    "classifier_to_json",
    "classifier_from_json",
    "save_classifier",
    "load_classifier",
    # fusion
    "FusedSupervector",
    "FusionWeights",
    "concat_supervectors",
    "split_fused",
    "fuse_scores",
    "decide",
    # experiment
    "ManifestEntry",
    "ExperimentManifest",
    "load_manifest",
    "write_manifest",
    "auto_split",
    "IdentificationRate",
    "identification_rate",
    "GridCell",
    "TrialRecord",
    "ResultsGrid",
    "Pipeline",
    "run_grid",
    "emit_tables",
    "generate_synthetic_corpus",
    # exceptions
    "SpeakerFusionError",
    "SpeakerFusionConfigError",
    "SpeakerFusionTrainingError",
    "SpeakerFusionIOError",
    "ConfigInvalidError",
    "ManifestParseError",
    "DuplicateUtteranceError",
    "MissingAudioError",
    "InsufficientUtterancesError",
    "NumericalFailureError",
    "EmTrainingError",
    "DimensionMismatchError",
    "InsufficientDataError",
    "SingleClassInputError",
    "NonFiniteFeatureError",
    "EmptyTrainingSetError",
    "EmptyClassError",
    "UtteranceMismatchError",
    "ComponentCountMismatchError",
    "SpeakerSetMismatchError",
    "NotNormalizedError",
    "EmptyScoresError",
    "EmptyDecisionsError",
    "LeakageError",
    "AudioNotFoundError",
    "UnsupportedFormatError",
    "CorruptHeaderError",
    "ArchiveError",
    "ConfigHashMismatchError",
]
