import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from speaker_fusion._archive import write_feature_archive
from speaker_fusion._experiment._manifest import (
    ExperimentManifest,
    ManifestEntry,
    auto_split,
    write_manifest,
)
from speaker_fusion._frontend._feature_matrix import FeatureKind, FeatureMatrix

logger = logging.getLogger(__name__)

SYNTHETIC_CONFIG_HASH = "synthetic"
SYNTHETIC_KINDS = (FeatureKind.MFCC12, FeatureKind.RASTAPLP13)


def _speaker_mixture(
    rng: np.random.Generator, n_components: int, dim: int, mean_scale: float
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    weights = rng.dirichlet(np.full(n_components, 5.0))
    means = rng.normal(0.0, mean_scale, size=(n_components, dim))
    stds = rng.uniform(0.5, 1.5, size=(n_components, dim))
    return weights, means, stds


def _emit_frames(
    rng: np.random.Generator,
    mixture: Tuple[np.ndarray, np.ndarray, np.ndarray],
    n_frames: int,
    channel_offset_std: float,
) -> np.ndarray:
    weights, means, stds = mixture
    components = rng.choice(len(weights), size=n_frames, p=weights)
    offset = rng.normal(0.0, channel_offset_std, size=means.shape[1])
    noise = rng.standard_normal((n_frames, means.shape[1]))
    return means[components] + stds[components] * noise + offset


def generate_synthetic_corpus(
    out_dir: Union[str, Path],
    seed: int = 0,
    n_speakers: int = 10,
    n_utterances: int = 10,
    n_frames: int = 200,
    n_components: int = 4,
    mean_scale: float = 4.0,
    channel_offset_std: float = 0.2,
    n_train: int = 8,
    n_test: int = 2,
) -> ExperimentManifest:
    """
    Write an artificial corpus whose speakers are random Gaussian mixtures

    Every speaker owns one mixture emitting 12-dim MFCC-like frames and a
    second one emitting 13-dim RASTA-PLP-like frames. Each utterance draws
    `n_frames` frames from both and adds a small constant channel offset.
    Frames are written straight to feature archives, so no audio is involved.

    Args:
        out_dir: Directory receiving `features/` and `manifest.jsonl`
        seed: Corpus seed; the same seed always produces the same corpus
        n_speakers: Number of speakers
        n_utterances: Utterances per speaker
        n_frames: Frames per utterance
        n_components: Mixture components per speaker and stream
        mean_scale: Standard deviation of the component means
        channel_offset_std: Standard deviation of the per-utterance offset
        n_train: Training utterances per speaker
        n_test: Test utterances per speaker

    Returns:
        ExperimentManifest: The split manifest that was written
    """
    out_dir = Path(out_dir)
    entries: List[ManifestEntry] = []
    for s in range(n_speakers):
        speaker_rng = np.random.default_rng([seed, s])
        mixtures = {
            kind: _speaker_mixture(speaker_rng, n_components, kind.dims, mean_scale)
            for kind in SYNTHETIC_KINDS
        }
        speaker_id = f"spk{s:02d}"
        for u in range(n_utterances):
            utterance_id = f"{speaker_id}_utt{u:02d}"
            utterance_rng = np.random.default_rng([seed, s, u])
            archives: Dict[FeatureKind, Path] = {}
            for kind in SYNTHETIC_KINDS:
                frames = _emit_frames(utterance_rng, mixtures[kind], n_frames, channel_offset_std)
                archive = out_dir / "features" / kind.value / f"{utterance_id}.feat"
                write_feature_archive(archive, FeatureMatrix(frames, kind), SYNTHETIC_CONFIG_HASH)
                archives[kind] = archive
            entries.append(ManifestEntry(speaker_id, utterance_id, features=archives))

    manifest = auto_split(
        ExperimentManifest(tuple(entries), corpus_name="synthetic"), n_train, n_test, seed
    )
    write_manifest(out_dir / "manifest.jsonl", manifest)
    logger.info(
        f"Wrote synthetic corpus of {n_speakers} speakers x {n_utterances} utterances to {out_dir}"
    )
    return manifest
