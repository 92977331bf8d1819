import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from speaker_fusion._config import FUSION_RULES, FusionConfig
from speaker_fusion._exceptions import (
    ComponentCountMismatchError,
    ConfigInvalidError,
    DimensionMismatchError,
    EmptyScoresError,
    NotNormalizedError,
    SpeakerSetMismatchError,
    UtteranceMismatchError,
)
from speaker_fusion._models._gmm import Supervector
from speaker_fusion._models._scores import ScoreVector

logger = logging.getLogger(__name__)

# Scores closer than this to the maximum count as tied
_TIE_TOLERANCE = 1e-12
_PRODUCT_FLOOR = 1e-12


@dataclass(frozen=True)
class LayoutBlock:
    """Where one source supervector sits inside a fused vector"""

    offset: int
    length: int
    source_feature_kind: Optional[str]
    n_components: int
    dim: int


@dataclass(frozen=True)
class FusedSupervector:
    """Two supervectors of one utterance laid end to end"""

    values: np.ndarray
    layout: Tuple[LayoutBlock, ...]
    utterance_id: Optional[str] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        offset = 0
        for block in self.layout:
            if block.offset != offset or block.length != block.n_components * block.dim:
                raise DimensionMismatchError("fused layout blocks must tile the vector")
            offset += block.length
        if offset != values.shape[0]:
            raise DimensionMismatchError(
                f"layout covers {offset} values but the vector holds {values.shape[0]}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(self.layout))

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def offsets(self) -> Tuple[int, ...]:
        return tuple(block.offset for block in self.layout)


def concat_supervectors(a: Supervector, b: Supervector) -> FusedSupervector:
    """
    Concatenate two supervectors of the same utterance

    Args:
        a: First block (the MFCC-family supervector for Feature 5)
        b: Second block (the RASTA-PLP-family supervector for Feature 5)

    Returns:
        FusedSupervector: a.values || b.values with the layout recorded

    Raises:
        UtteranceMismatchError: When the two come from different utterances
        ComponentCountMismatchError: When the UBM component counts differ
    """
    if a.utterance_id is not None and b.utterance_id is not None:
        if a.utterance_id != b.utterance_id:
            raise UtteranceMismatchError(
                f"cannot fuse supervectors of {a.utterance_id} and {b.utterance_id}"
            )
    if a.n_components != b.n_components:
        raise ComponentCountMismatchError(
            f"component counts differ: {a.n_components} vs {b.n_components}"
        )
    layout = (
        LayoutBlock(0, len(a), a.source_feature_kind, a.n_components, a.dim),
        LayoutBlock(len(a), len(b), b.source_feature_kind, b.n_components, b.dim),
    )
    utterance_id = a.utterance_id if a.utterance_id is not None else b.utterance_id
    return FusedSupervector(np.concatenate([a.values, b.values]), layout, utterance_id)


def split_fused(fused: FusedSupervector) -> Tuple[Supervector, ...]:
    """Cut a fused vector back into its source supervectors."""
    return tuple(
        Supervector(
            fused.values[block.offset : block.offset + block.length].copy(),
            block.n_components,
            block.dim,
            block.source_feature_kind,
            fused.utterance_id,
        )
        for block in fused.layout
    )


@dataclass(frozen=True)
class FusionWeights:
    """Convex weights of the SVM and Naive Bayes scores"""

    w_svm: float = 0.5
    w_nb: float = 0.5

    def __post_init__(self):
        if self.w_svm < 0 or self.w_nb < 0 or abs(self.w_svm + self.w_nb - 1.0) > 1e-9:
            raise ConfigInvalidError(
                f"fusion weights must be non-negative and sum to 1, got ({self.w_svm}, {self.w_nb})"
            )

    @classmethod
    def from_config(cls, cfg: FusionConfig) -> "FusionWeights":
        return cls(cfg.w_svm, cfg.w_nb)


def fuse_scores(
    s_svm: ScoreVector, s_nb: ScoreVector, w: FusionWeights, rule: str = "sum"
) -> ScoreVector:
    """
    Combine the SVM and Naive Bayes score vectors of one trial

    `sum` is w_svm*s_svm + w_nb*s_nb. `product` is the weighted geometric
    combination renormalized to 1, and `max` is max(w_svm*s_svm, w_nb*s_nb)
    renormalized. The margin tie-break of the SVM scores is carried along.

    Args:
        s_svm: System 1 scores
        s_nb: System 2 scores over the same speakers
        w: Fusion weights
        rule: "sum", "product" or "max"

    Returns:
        ScoreVector: Fused scores in the speaker order of `s_svm`

    Raises:
        SpeakerSetMismatchError: When the speaker sets differ
        NotNormalizedError: When an input is not posterior-normalized
    """
    if rule not in FUSION_RULES:
        raise ConfigInvalidError(f"Unknown fusion rule: {rule}")
    if set(s_svm.speakers) != set(s_nb.speakers) or len(s_svm) != len(s_nb):
        raise SpeakerSetMismatchError("SVM and Naive Bayes scores cover different speakers")
    if not (s_svm.is_normalized and s_nb.is_normalized):
        raise NotNormalizedError("score fusion needs posterior-normalized inputs")

    s_nb = s_nb.reordered(s_svm.speakers)
    if rule == "sum":
        fused = w.w_svm * s_svm.scores + w.w_nb * s_nb.scores
    elif rule == "product":
        log_scores = w.w_svm * np.log(np.maximum(s_svm.scores, _PRODUCT_FLOOR)) + w.w_nb * np.log(
            np.maximum(s_nb.scores, _PRODUCT_FLOOR)
        )
        fused = np.exp(log_scores - log_scores.max())
        fused = fused / fused.sum()
    else:
        fused = np.maximum(w.w_svm * s_svm.scores, w.w_nb * s_nb.scores)
        fused = fused / fused.sum()

    tie_break = s_svm.tie_break if w.w_svm > 0 else s_nb.tie_break
    return ScoreVector(s_svm.speakers, fused, tie_break=tie_break)


def decide(s: ScoreVector) -> str:
    """
    Pick the identified speaker

    The highest score wins. Ties go to the larger carried margin sum when the
    vector has one, then to the lowest speaker index.

    Raises:
        EmptyScoresError: On an empty score vector
    """
    if len(s) == 0:
        raise EmptyScoresError("cannot decide on an empty score vector")
    best = float(np.max(s.scores))
    candidates = np.flatnonzero(s.scores >= best - _TIE_TOLERANCE)
    winner = int(candidates[0])
    if len(candidates) > 1 and s.tie_break is not None:
        # argmax returns the first maximum, which is the lowest index among equals
        winner = int(candidates[np.argmax(s.tie_break[candidates])])
    logger.debug(f"Decided {s.speakers[winner]} from scores {s.as_dict()}")
    return s.speakers[winner]
