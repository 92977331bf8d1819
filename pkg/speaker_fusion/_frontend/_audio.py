import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.io import wavfile
from scipy.signal import lfilter

from speaker_fusion._exceptions import (
    AudioNotFoundError,
    ConfigInvalidError,
    CorruptHeaderError,
    UnsupportedFormatError,
)

logger = logging.getLogger(__name__)

_PCM16_SCALE = 32768.0


@dataclass(frozen=True)
class SampleBuffer:
    """Mono audio samples scaled to [-1, 1]"""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate_hz <= 0:
            raise ConfigInvalidError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if not np.all(np.isfinite(samples)):
            raise ConfigInvalidError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.shape[0])


@dataclass(frozen=True)
class FrameMatrix:
    """Fixed-length short-time segments of one utterance"""

    frames: np.ndarray
    window_len_samples: int
    hop_len_samples: int
    sample_rate_hz: int

    def __post_init__(self):
        if not self.window_len_samples >= self.hop_len_samples > 0:
            raise ConfigInvalidError("window_len_samples must be >= hop_len_samples > 0")
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.size == 0:
            frames = frames.reshape(0, self.window_len_samples)
        if frames.ndim != 2 or frames.shape[1] != self.window_len_samples:
            raise ConfigInvalidError(
                f"every frame must have exactly {self.window_len_samples} samples"
            )
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])


def load_wav(path: Union[str, Path]) -> SampleBuffer:
    """
    Decode a 16-bit PCM RIFF/WAVE file into a mono sample buffer

    Multi-channel files are mixed down by averaging the channels.

    Args:
        path: Path of the WAV file

    Returns:
        SampleBuffer: Samples divided by 32768 and the header sample rate

    Raises:
        AudioNotFoundError: When the file does not exist
        UnsupportedFormatError: When the file is not 16-bit PCM
        CorruptHeaderError: When the RIFF/WAVE header cannot be decoded
    """
    path = Path(path)
    if not path.is_file():
        raise AudioNotFoundError(f"Audio file not found: {path}")
    try:
        rate, data = wavfile.read(str(path))
    except ValueError as e:
        if "Unknown wave file format" in str(e):
            raise UnsupportedFormatError(f"{path}: expected 16-bit PCM; {e}") from e
        raise CorruptHeaderError(f"Failed to decode {path}: {e}") from e
    except EOFError as e:
        raise CorruptHeaderError(f"Failed to decode {path}: {e}") from e
    if data.dtype != np.int16:
        raise UnsupportedFormatError(
            f"{path}: expected 16-bit PCM, got samples of type {data.dtype}"
        )

    samples = data.astype(np.float64) / _PCM16_SCALE
    if samples.ndim == 2:
        logger.debug(f"Mixing {samples.shape[1]} channels of {path} down to mono")
        samples = samples.mean(axis=1)
    return SampleBuffer(samples, int(rate))


def write_wav(path: Union[str, Path], buf: SampleBuffer) -> None:
    """
    Encode a sample buffer as mono 16-bit PCM

    Args:
        path: Destination path
        buf: Samples to write; values are scaled by 32768 and clipped to the int16 range
    """
    pcm = np.clip(np.round(buf.samples * _PCM16_SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(str(path), buf.sample_rate_hz, pcm)


def pre_emphasize(buf: SampleBuffer, alpha: float = 0.97) -> SampleBuffer:
    """
    Apply the first-order pre-emphasis filter y[n] = x[n] - alpha * x[n-1]

    Args:
        buf: Input samples
        alpha: Pre-emphasis coefficient in [0, 1)

    Returns:
        SampleBuffer: Filtered samples of the same length; y[0] = x[0]
    """
    if not 0 <= alpha < 1:
        raise ConfigInvalidError(f"alpha must lie in [0, 1), got {alpha}")
    if len(buf) == 0:
        return buf
    return SampleBuffer(lfilter([1.0, -alpha], [1.0], buf.samples), buf.sample_rate_hz)


def frame_signal(buf: SampleBuffer, window_ms: float, hop_ms: float) -> FrameMatrix:
    """
    Cut a signal into overlapping frames

    Frames start at 0, hop, 2*hop, ...; a trailing partial frame is discarded.

    Args:
        buf: Input samples
        window_ms: Window length in milliseconds
        hop_ms: Frame shift in milliseconds

    Returns:
        FrameMatrix: floor((N - window) / hop) + 1 frames, or none when N < window
    """
    if not window_ms >= hop_ms > 0:
        raise ConfigInvalidError("window_ms must be >= hop_ms > 0")
    window_len = int(round(window_ms * buf.sample_rate_hz / 1000.0))
    hop_len = int(round(hop_ms * buf.sample_rate_hz / 1000.0))
    if hop_len < 1:
        raise ConfigInvalidError(f"hop of {hop_ms} ms is shorter than one sample")

    if len(buf) < window_len:
        frames = np.zeros((0, window_len))
    else:
        windows = np.lib.stride_tricks.sliding_window_view(buf.samples, window_len)
        frames = windows[::hop_len].copy()
    return FrameMatrix(frames, window_len, hop_len, buf.sample_rate_hz)


def apply_hamming(frames: FrameMatrix) -> FrameMatrix:
    """Multiply each frame by w[n] = 0.54 - 0.46 cos(2 pi n / (L - 1))."""
    window = np.hamming(frames.window_len_samples)
    return FrameMatrix(
        frames.frames * window,
        frames.window_len_samples,
        frames.hop_len_samples,
        frames.sample_rate_hz,
    )


def drop_silent_frames(frames: FrameMatrix, threshold_db: float) -> FrameMatrix:
    """
    Remove frames whose energy lies more than `threshold_db` below the loudest frame

    Args:
        frames: Framed signal
        threshold_db: Allowed distance below the peak frame energy

    Returns:
        FrameMatrix: The retained frames in their original order
    """
    if frames.n_frames == 0:
        return frames
    energy_db = 10.0 * np.log10(np.sum(frames.frames**2, axis=1) + 1e-20)
    keep = energy_db >= energy_db.max() - threshold_db
    logger.debug(f"Silence hook kept {int(keep.sum())} of {frames.n_frames} frames")
    return FrameMatrix(
        frames.frames[keep],
        frames.window_len_samples,
        frames.hop_len_samples,
        frames.sample_rate_hz,
    )
