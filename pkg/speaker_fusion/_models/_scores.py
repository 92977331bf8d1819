from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from speaker_fusion._exceptions import DimensionMismatchError, NotNormalizedError

POSTERIOR_NORMALIZED = "posterior-normalized"
RAW = "raw"

_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ScoreVector:
    """
    Per-speaker scores from one classifier

    `tie_break` optionally carries a secondary per-speaker score (summed SVM
    margins) used when the primary scores tie.
    """

    speakers: Tuple[str, ...]
    scores: np.ndarray
    normalization: str = POSTERIOR_NORMALIZED
    tie_break: Optional[np.ndarray] = None

    def __post_init__(self):
        speakers = tuple(str(s) for s in self.speakers)
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if scores.shape[0] != len(speakers):
            raise DimensionMismatchError(
                f"{len(speakers)} speakers but {scores.shape[0]} scores"
            )
        if len(set(speakers)) != len(speakers):
            raise DimensionMismatchError("speaker ids in a score vector must be unique")
        if self.normalization == POSTERIOR_NORMALIZED and speakers:
            if np.any(scores < 0) or abs(scores.sum() - 1.0) > _SUM_TOLERANCE:
                raise NotNormalizedError(
                    f"posterior-normalized scores must be >= 0 and sum to 1, got {scores.sum()}"
                )
        object.__setattr__(self, "speakers", speakers)
        object.__setattr__(self, "scores", scores)
        if self.tie_break is not None:
            tie_break = np.asarray(self.tie_break, dtype=np.float64).reshape(-1)
            if tie_break.shape != scores.shape:
                raise DimensionMismatchError("tie_break must have one entry per speaker")
            object.__setattr__(self, "tie_break", tie_break)

    def __len__(self) -> int:
        return len(self.speakers)

    @property
    def is_normalized(self) -> bool:
        return self.normalization == POSTERIOR_NORMALIZED

    def as_dict(self) -> Dict[str, float]:
        return {s: float(v) for s, v in zip(self.speakers, self.scores)}

    def reordered(self, speakers: Sequence[str]) -> "ScoreVector":
        """Return the same scores listed in another speaker order."""
        index = {s: i for i, s in enumerate(self.speakers)}
        order = [index[s] for s in speakers]
        return ScoreVector(
            tuple(speakers),
            self.scores[order],
            self.normalization,
            None if self.tie_break is None else self.tie_break[order],
        )
