import logging
from typing import Union

import numpy as np

from speaker_fusion._config import FrontendConfig
from speaker_fusion._exceptions import ConfigInvalidError
from speaker_fusion._frontend._audio import (
    FrameMatrix,
    SampleBuffer,
    apply_hamming,
    drop_silent_frames,
    frame_signal,
    pre_emphasize,
)
from speaker_fusion._frontend._feature_matrix import FeatureKind, FeatureMatrix
from speaker_fusion._frontend._mfcc import mfcc
from speaker_fusion._frontend._rasta_plp import rasta_plp

logger = logging.getLogger(__name__)

# Feature sets 1-4 are single cepstral streams; Feature 5 is assembled from supervectors.
FEATURE_SET_KINDS = {
    "F1": FeatureKind.MFCC12,
    "F2": FeatureKind.RASTAPLP13,
    "F3": FeatureKind.MFCC12_DD,
    "F4": FeatureKind.RASTAPLP13_DD,
}

_DYNAMIC_KIND = {
    FeatureKind.MFCC12: FeatureKind.MFCC12_DD,
    FeatureKind.RASTAPLP13: FeatureKind.RASTAPLP13_DD,
}


def deltas(feat: Union[FeatureMatrix, np.ndarray], width: int = 2) -> np.ndarray:
    """
    Regression deltas over +/- `width` frames with edge frames replicated

    d_t = sum_k k (c_{t+k} - c_{t-k}) / (2 sum_k k^2), k = 1..width

    Args:
        feat: Feature stream, or a raw (frames, dims) matrix
        width: Half-width of the regression window

    Returns:
        np.ndarray: Delta coefficients with the same shape as the input. Deltas
            are not a stream of their own; `add_dynamics` stacks them onto the
            static frames as a FeatureMatrix.
    """
    if width < 1:
        raise ConfigInvalidError(f"delta width must be >= 1, got {width}")
    vectors = feat.vectors if isinstance(feat, FeatureMatrix) else np.asarray(feat, dtype=float)
    n_frames = vectors.shape[0]
    if n_frames == 0:
        return np.zeros_like(vectors)

    padded = np.concatenate(
        [np.repeat(vectors[:1], width, axis=0), vectors, np.repeat(vectors[-1:], width, axis=0)]
    )
    numerator = np.zeros_like(vectors)
    for k in range(1, width + 1):
        ahead = padded[width + k : width + k + n_frames]
        behind = padded[width - k : width - k + n_frames]
        numerator += k * (ahead - behind)
    return numerator / (2.0 * sum(k * k for k in range(1, width + 1)))


def add_dynamics(feat: FeatureMatrix, width: int = 2) -> FeatureMatrix:
    """Append delta and delta-delta columns to a static MFCC or RASTA-PLP stream."""
    if feat.kind.has_dynamics:
        raise ConfigInvalidError(f"{feat.kind.value} already carries dynamic coefficients")
    delta = deltas(feat.vectors, width)
    delta_delta = deltas(delta, width)
    return FeatureMatrix(np.hstack([feat.vectors, delta, delta_delta]), _DYNAMIC_KIND[feat.kind])


def assemble_feature_set(kind: str, frames: FrameMatrix, cfg: FrontendConfig) -> FeatureMatrix:
    """
    Build feature set F1..F4 from windowed frames

    Args:
        kind: One of "F1" (12 MFCC), "F2" (13 RASTA-PLP), "F3" (36), "F4" (39)
        frames: Hamming-windowed frames
        cfg: Front-end configuration

    Returns:
        FeatureMatrix: The assembled stream
    """
    if kind not in FEATURE_SET_KINDS:
        raise ConfigInvalidError(
            f"Unknown feature set: {kind} (Feature 5 is built from supervectors)"
        )
    target = FEATURE_SET_KINDS[kind]
    static = mfcc(frames, cfg) if target.base is FeatureKind.MFCC12 else rasta_plp(frames, cfg)
    if not target.has_dynamics:
        return static
    return add_dynamics(static, cfg.delta_width)


def extract_stream(
    buf: SampleBuffer, kind: Union[str, FeatureKind], cfg: FrontendConfig
) -> FeatureMatrix:
    """
    Run the full front-end on one utterance

    Args:
        buf: Decoded audio
        kind: Feature kind to produce
        cfg: Front-end configuration

    Returns:
        FeatureMatrix: Stream of the requested kind
    """
    kind = FeatureKind(kind)
    emphasized = pre_emphasize(buf, cfg.pre_emphasis)
    frames = frame_signal(emphasized, cfg.window_ms, cfg.hop_ms)
    if cfg.drop_silent_frames:
        frames = drop_silent_frames(frames, cfg.silence_threshold_db)
    windowed = apply_hamming(frames)

    feature_set = next(name for name, k in FEATURE_SET_KINDS.items() if k is kind)
    feat = assemble_feature_set(feature_set, windowed, cfg)
    logger.debug(f"Extracted {feat.n_frames} frames of {kind.value}")
    return feat
