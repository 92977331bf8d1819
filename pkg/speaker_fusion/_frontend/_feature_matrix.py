from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from speaker_fusion._exceptions import DimensionMismatchError, NonFiniteFeatureError


class FeatureKind(str, Enum):
    """Coefficient streams produced by the front-end"""

    MFCC12 = "MFCC12"
    RASTAPLP13 = "RASTAPLP13"
    MFCC12_DD = "MFCC12_DD"
    RASTAPLP13_DD = "RASTAPLP13_DD"

    @property
    def dims(self) -> int:
        return _KIND_DIMS[self]

    @property
    def base(self) -> "FeatureKind":
        """The static stream a dynamic kind is built on."""
        return _KIND_BASE[self]

    @property
    def has_dynamics(self) -> bool:
        return self.base is not self


_KIND_DIMS = {
    FeatureKind.MFCC12: 12,
    FeatureKind.RASTAPLP13: 13,
    FeatureKind.MFCC12_DD: 36,
    FeatureKind.RASTAPLP13_DD: 39,
}

_KIND_BASE = {
    FeatureKind.MFCC12: FeatureKind.MFCC12,
    FeatureKind.RASTAPLP13: FeatureKind.RASTAPLP13,
    FeatureKind.MFCC12_DD: FeatureKind.MFCC12,
    FeatureKind.RASTAPLP13_DD: FeatureKind.RASTAPLP13,
}


@dataclass(frozen=True)
class FeatureMatrix:
    """Per-utterance feature vectors (frames x dims) tagged with their kind"""

    vectors: np.ndarray
    kind: FeatureKind

    def __post_init__(self):
        kind = FeatureKind(self.kind)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if vectors.size == 0:
            vectors = vectors.reshape(0, kind.dims)
        if vectors.ndim != 2 or vectors.shape[1] != kind.dims:
            raise DimensionMismatchError(
                f"{kind.value} requires {kind.dims} dims, got shape {vectors.shape}"
            )
        if not np.all(np.isfinite(vectors)):
            raise NonFiniteFeatureError(f"{kind.value} features contain non-finite values")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dims(self) -> int:
        return self.kind.dims

    @property
    def n_frames(self) -> int:
        return int(self.vectors.shape[0])


def as_feature_kind(value: Union[str, FeatureKind]) -> FeatureKind:
    return FeatureKind(value)
