import dataclasses
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from speaker_fusion import (
    ArchiveError,
    ConfigInvalidError,
    ExperimentManifest,
    FeatureKind,
    IdentificationRate,
    Pipeline,
    ScoreVector,
    ToolkitConfig,
    TrialRecord,
    add_dynamics,
    auto_split,
    config_hash,
    decide,
    emit_tables,
    extract_stream,
    identification_rate,
    load_classifier,
    load_manifest,
    load_model,
    load_wav,
    nb_score,
    ovo_score,
    read_supervector_store,
    run_grid,
    save_classifier,
    save_model,
    write_feature_archive,
    write_manifest,
    write_supervector_store,
)
from speaker_fusion._archive import atomic_write_text

logger = logging.getLogger(__name__)

_BASE_KINDS = (FeatureKind.MFCC12, FeatureKind.RASTAPLP13)


def ubm_path(out: Path, kind: FeatureKind) -> Path:
    return out / "models" / f"ubm-{kind.value}.json"


def supervector_path(out: Path, kind: FeatureKind) -> Path:
    return out / "supervectors" / f"{kind.value}.sv"


def classifier_path(out: Path, system: str, feature_set: str) -> Path:
    return out / "models" / f"{system}-{feature_set}.json"


def classifier_config_hash(config: ToolkitConfig, system: str) -> str:
    """Hash of every section a trained "svm" or "nb" back-end depends on."""
    if system == "svm":
        section = config.svm
    elif system == "nb":
        section = config.nb  # type: ignore[assignment]
    else:
        raise ConfigInvalidError(f"Unknown classifier: {system}")
    return config_hash(config.frontend, config.em, config.map, section)


def load_split_manifest(manifest_path: Path, config: ToolkitConfig) -> ExperimentManifest:
    """Load a manifest and split the entries that have no split yet."""
    manifest = load_manifest(manifest_path)
    if any(e.split is None for e in manifest.entries):
        exp = config.experiment
        manifest = auto_split(
            manifest, exp.n_train, exp.n_test, exp.split_seed, exp.exclude_shared_text_from_test
        )
    return manifest


def extract_features(manifest: ExperimentManifest, config: ToolkitConfig, out: Path) -> Path:
    """
    Compute every feature stream of every entry with audio

    Archives go to `<out>/features/<KIND>/<utterance_id>.feat`, and a manifest
    pointing at them is written to `<out>/features/manifest.jsonl`.

    Returns:
        Path: The manifest referencing the archives
    """
    frontend_hash = config_hash(config.frontend)
    entries = []
    for entry in manifest.entries:
        if entry.path is None:
            entries.append(entry)
            continue
        buf = load_wav(entry.path)
        archives: Dict[FeatureKind, Path] = dict(entry.features)
        for kind in _BASE_KINDS:
            static = extract_stream(buf, kind, config.frontend)
            dynamic = add_dynamics(static, config.frontend.delta_width)
            for feat in (static, dynamic):
                archive = out / "features" / feat.kind.value / f"{entry.utterance_id}.feat"
                write_feature_archive(archive, feat, frontend_hash)
                archives[feat.kind] = archive
        logger.info(f"Extracted features of {entry.utterance_id}")
        entries.append(dataclasses.replace(entry, features=archives))

    derived = out / "features" / "manifest.jsonl"
    write_manifest(
        derived, ExperimentManifest(tuple(entries), manifest.corpus_name, manifest.sample_rate_hz)
    )
    return derived


def pipeline_with_artifacts(
    manifest: ExperimentManifest, config: ToolkitConfig, out: Path
) -> Pipeline:
    """
    Build a pipeline that reuses UBMs and supervector stores already under `out`

    Raises:
        ConfigHashMismatchError: When an artifact was built under another configuration
    """
    pipeline = Pipeline(manifest, config)
    needed = {e.utterance_id for e in pipeline.train + pipeline.test}
    for kind in FeatureKind:
        if ubm_path(out, kind).is_file():
            pipeline.use_ubm(kind, load_model(ubm_path(out, kind)))
        if supervector_path(out, kind).is_file():
            store = read_supervector_store(
                supervector_path(out, kind), pipeline.supervector_config_hash
            )
            if needed.issubset(store):
                pipeline.use_supervectors(kind, store)
            else:
                logger.warning(
                    f"{supervector_path(out, kind)} does not cover the manifest; re-adapting"
                )
    return pipeline


def train_ubm(manifest: ExperimentManifest, config: ToolkitConfig, kind: FeatureKind, out: Path):
    model = Pipeline(manifest, config).ubm(kind)
    path = ubm_path(out, kind)
    save_model(path, model)
    return path


def adapt(manifest: ExperimentManifest, config: ToolkitConfig, kind: FeatureKind, out: Path):
    pipeline = pipeline_with_artifacts(manifest, config, out)
    store = pipeline.supervectors(kind)
    path = supervector_path(out, kind)
    write_supervector_store(
        path,
        [store[e.utterance_id] for e in pipeline.train + pipeline.test],
        pipeline.supervector_config_hash,
    )
    return path


def train_classifier(
    manifest: ExperimentManifest,
    config: ToolkitConfig,
    system: str,
    feature_set: str,
    out: Path,
) -> Path:
    """Train the SVM ("svm") or Naive Bayes ("nb") back-end of one feature set."""
    expected_hash = classifier_config_hash(config, system)
    pipeline = pipeline_with_artifacts(manifest, config, out)
    path = classifier_path(out, system, feature_set)
    if system == "svm":
        save_classifier(path, pipeline.train_svm(feature_set), expected_hash)
    else:
        save_classifier(path, pipeline.train_nb(feature_set), expected_hash)
    return path


def _load_trained(out: Path, config: ToolkitConfig, system: str, feature_set: str):
    path = classifier_path(out, system, feature_set)
    if not path.is_file():
        raise ArchiveError(
            f"no trained {system} model for {feature_set}; run train first", str(path)
        )
    return load_classifier(path, classifier_config_hash(config, system))


def write_trials(path: Path, trials: Sequence[TrialRecord]) -> None:
    lines = [json.dumps(t.to_dict(), sort_keys=True) for t in trials]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def evaluate(
    manifest: ExperimentManifest,
    config: ToolkitConfig,
    feature_set: str,
    system: int,
    out: Path,
) -> Tuple[IdentificationRate, Path]:
    """
    Score the test set with trained back-ends and compute the identification rate

    Returns:
        Tuple[IdentificationRate, Path]: The rate and the written trial log
    """
    pipeline = pipeline_with_artifacts(manifest, config, out)
    test_X = pipeline.vectors(feature_set, pipeline.test)
    scores: Dict[int, List[ScoreVector]] = {}
    if system in (1, 3):
        svm = _load_trained(out, config, "svm", feature_set)
        scores[1] = [ovo_score(svm, x) for x in test_X]  # type: ignore[arg-type]
    if system in (2, 3):
        nb = _load_trained(out, config, "nb", feature_set)
        scores[2] = [nb_score(nb, x) for x in test_X]  # type: ignore[arg-type]
    if system == 3:
        scores[3] = pipeline.fuse(scores[1], scores[2])

    decisions = [decide(s) for s in scores[system]]
    rate = identification_rate(zip(decisions, (e.speaker_id for e in pipeline.test)))
    trials = [
        TrialRecord(
            feature_set,
            entry.utterance_id,
            entry.speaker_id,
            {system: decisions[i]},
            {system: scores[system][i].as_dict()},
        )
        for i, entry in enumerate(pipeline.test)
    ]
    path = out / f"trials-{feature_set}-system{system}.jsonl"
    write_trials(path, trials)
    return rate, path


def run_full_grid(
    manifest: ExperimentManifest,
    config: ToolkitConfig,
    features: Sequence[str],
    systems: Sequence[int],
    table_format: str,
    out: Optional[Path],
) -> str:
    """Run the grid, write results and trials under `out`, and return the rendered table."""
    grid = run_grid(manifest, features, systems, config)
    rendered = emit_tables(grid, table_format)
    if out is not None:
        atomic_write_text(out / f"results.{table_format}", rendered)
        write_trials(out / "trials.jsonl", grid.trials)
    return rendered
