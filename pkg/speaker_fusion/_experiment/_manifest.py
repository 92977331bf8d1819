import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from speaker_fusion._archive import atomic_write_text
from speaker_fusion._exceptions import (
    ConfigInvalidError,
    DuplicateUtteranceError,
    InsufficientUtterancesError,
    ManifestParseError,
    MissingAudioError,
)
from speaker_fusion._frontend._feature_matrix import FeatureKind

logger = logging.getLogger(__name__)

TRAIN = "train"
TEST = "test"
SPLITS = (TRAIN, TEST)


@dataclass(frozen=True)
class ManifestEntry:
    """One utterance of a corpus"""

    speaker_id: str
    utterance_id: str
    path: Optional[Path] = None
    split: Optional[str] = None
    shared_text: bool = False
    features: Dict[FeatureKind, Path] = field(default_factory=dict)

    def source_paths(self) -> Tuple[Path, ...]:
        """Every file this entry's frames can come from, resolved."""
        paths = [] if self.path is None else [self.path]
        paths.extend(self.features.values())
        return tuple(p.resolve() for p in paths)


@dataclass(frozen=True)
class ExperimentManifest:
    """A corpus: its entries and optional metadata"""

    entries: Tuple[ManifestEntry, ...]
    corpus_name: Optional[str] = None
    sample_rate_hz: Optional[int] = None

    def __post_init__(self):
        entries = tuple(self.entries)
        seen = set()
        for entry in entries:
            if entry.utterance_id in seen:
                raise DuplicateUtteranceError(f"duplicate utterance id {entry.utterance_id}")
            seen.add(entry.utterance_id)
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def speakers(self) -> Tuple[str, ...]:
        return tuple(sorted({e.speaker_id for e in self.entries}))

    def with_split(self, split: str) -> Tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if e.split == split)

    @property
    def train_entries(self) -> Tuple[ManifestEntry, ...]:
        return self.with_split(TRAIN)

    @property
    def test_entries(self) -> Tuple[ManifestEntry, ...]:
        return self.with_split(TEST)

    def corpus_hash(self) -> str:
        """SHA-256 over the training entries, their splits and their sources."""
        rows = sorted(
            [e.utterance_id, e.speaker_id, [str(p) for p in e.source_paths()]]
            for e in self.train_entries
        )
        canonical = json.dumps(rows, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_entry(record: Dict[str, Any], base_dir: Path, line_number: int) -> ManifestEntry:
    for key in ("speaker_id", "utterance_id"):
        if not isinstance(record.get(key), str) or not record[key]:
            raise ManifestParseError(f"{key} must be a non-empty string", line_number)
    split = record.get("split")
    if split not in (None, *SPLITS):
        raise ManifestParseError(
            f"split must be 'train', 'test' or null, got {split!r}", line_number
        )
    shared_text = record.get("shared_text", False)
    if not isinstance(shared_text, bool):
        raise ManifestParseError("shared_text must be a boolean", line_number)

    path = record.get("path")
    if path is not None and not isinstance(path, str):
        raise ManifestParseError("path must be a string", line_number)
    features_raw = record.get("features", {})
    if not isinstance(features_raw, dict):
        raise ManifestParseError("features must map feature kinds to archive paths", line_number)
    features = {}
    for kind, archive in features_raw.items():
        try:
            features[FeatureKind(kind)] = base_dir / archive
        except ValueError as e:
            raise ManifestParseError(f"unknown feature kind {kind!r}", line_number) from e
        except TypeError as e:
            raise ManifestParseError(f"archive path of {kind} must be a string", line_number) from e
    if path is None and not features:
        raise ManifestParseError("an entry needs an audio path or feature archives", line_number)

    entry = ManifestEntry(
        record["speaker_id"],
        record["utterance_id"],
        None if path is None else base_dir / path,
        split,
        shared_text,
        features,
    )
    for source in ([] if entry.path is None else [entry.path]) + list(entry.features.values()):
        if not source.is_file():
            raise MissingAudioError(
                f"line {line_number}: {entry.utterance_id} references missing file {source}"
            )
    return entry


def load_manifest(path: Union[str, Path]) -> ExperimentManifest:
    """
    Load and validate a JSON-lines manifest

    Each non-blank line is one entry. The first line may instead be a corpus
    header {"corpus": {"name": ..., "sample_rate": ...}}. Relative paths are
    resolved against the manifest's directory.

    Args:
        path: Manifest file

    Returns:
        ExperimentManifest: The validated manifest

    Raises:
        ManifestParseError: On malformed lines, with the line number
        DuplicateUtteranceError: When an utterance id repeats
        MissingAudioError: When a referenced file does not exist
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as e:
        raise ConfigInvalidError(f"Manifest not found: {path}") from e

    corpus_name: Optional[str] = None
    sample_rate: Optional[int] = None
    entries: List[ManifestEntry] = []
    seen: Dict[str, int] = {}
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestParseError(f"invalid JSON: {e.msg}", line_number) from e
        if not isinstance(record, dict):
            raise ManifestParseError("each line must be a JSON object", line_number)
        if "corpus" in record:
            if entries or corpus_name is not None or not isinstance(record["corpus"], dict):
                raise ManifestParseError("the corpus header must be the first line", line_number)
            corpus_name = record["corpus"].get("name")
            sample_rate = record["corpus"].get("sample_rate")
            continue

        entry = _parse_entry(record, path.parent, line_number)
        if entry.utterance_id in seen:
            raise DuplicateUtteranceError(
                f"line {line_number}: utterance id {entry.utterance_id} already used "
                f"on line {seen[entry.utterance_id]}"
            )
        seen[entry.utterance_id] = line_number
        entries.append(entry)

    logger.info(f"Loaded {len(entries)} manifest entries from {path}")
    return ExperimentManifest(tuple(entries), corpus_name, sample_rate)


def _relative(path: Path, base_dir: Path) -> str:
    try:
        return path.resolve().relative_to(base_dir.resolve()).as_posix()
    except ValueError:
        return str(path.resolve())


def write_manifest(path: Union[str, Path], manifest: ExperimentManifest) -> None:
    """Write a manifest as JSON lines with paths relative to its directory."""
    path = Path(path)
    lines = []
    if manifest.corpus_name is not None or manifest.sample_rate_hz is not None:
        corpus = {"name": manifest.corpus_name, "sample_rate": manifest.sample_rate_hz}
        lines.append(json.dumps({"corpus": corpus}))
    for entry in manifest.entries:
        record: Dict[str, Any] = {
            "speaker_id": entry.speaker_id,
            "utterance_id": entry.utterance_id,
            "split": entry.split,
            "shared_text": entry.shared_text,
        }
        if entry.path is not None:
            record["path"] = _relative(entry.path, path.parent)
        if entry.features:
            record["features"] = {
                kind.value: _relative(archive, path.parent)
                for kind, archive in sorted(entry.features.items(), key=lambda kv: kv[0].value)
            }
        lines.append(json.dumps(record))
    atomic_write_text(path, "\n".join(lines) + "\n")


def auto_split(
    m: ExperimentManifest,
    n_train: int = 8,
    n_test: int = 2,
    seed: int = 0,
    exclude_shared_text_from_test: bool = False,
) -> ExperimentManifest:
    """
    Assign train and test splits per speaker

    Splits already present are kept and count towards the quotas. The
    remaining utterances of a speaker are ordered by utterance id, shuffled
    with a generator seeded by (seed, speaker index), and the first ones fill
    the test quota and the next ones the training quota. Anything left over
    stays unassigned.

    Args:
        m: Manifest to split
        n_train: Training utterances per speaker
        n_test: Test utterances per speaker
        seed: Shuffle seed
        exclude_shared_text_from_test: Never pick shared-text utterances for test

    Returns:
        ExperimentManifest: Same entries in the same order with splits set

    Raises:
        InsufficientUtterancesError: When a speaker cannot fill both quotas
    """
    if n_train < 1 or n_test < 1:
        raise ConfigInvalidError("n_train and n_test must be >= 1")

    assigned: Dict[str, Optional[str]] = {}
    for speaker_index, speaker in enumerate(m.speakers):
        own = [e for e in m.entries if e.speaker_id == speaker]
        if len(own) < n_train + n_test:
            raise InsufficientUtterancesError(
                f"speaker {speaker} has {len(own)} utterances, "
                f"{n_train + n_test} needed for a {n_train}/{n_test} split",
                speaker,
            )
        need_test = max(0, n_test - sum(e.split == TEST for e in own))
        need_train = max(0, n_train - sum(e.split == TRAIN for e in own))

        unset = sorted((e for e in own if e.split is None), key=lambda e: e.utterance_id)
        rng = np.random.default_rng([seed, speaker_index])
        shuffled = [unset[i] for i in rng.permutation(len(unset))]

        eligible = [
            e for e in shuffled if not (exclude_shared_text_from_test and e.shared_text)
        ]
        if len(eligible) < need_test:
            raise InsufficientUtterancesError(
                f"speaker {speaker} has too few utterances eligible for test", speaker
            )
        test_ids = {e.utterance_id for e in eligible[:need_test]}
        rest = [e for e in shuffled if e.utterance_id not in test_ids]
        for e in eligible[:need_test]:
            assigned[e.utterance_id] = TEST
        for e in rest[:need_train]:
            assigned[e.utterance_id] = TRAIN

    entries = tuple(
        dataclasses.replace(e, split=assigned[e.utterance_id]) if e.utterance_id in assigned else e
        for e in m.entries
    )
    logger.info(f"Split {len(m.speakers)} speakers into {n_train} train / {n_test} test each")
    return ExperimentManifest(entries, m.corpus_name, m.sample_rate_hz)
