import numpy as np
from scipy.fft import dct, rfft

from speaker_fusion._config import FrontendConfig
from speaker_fusion._exceptions import ConfigInvalidError
from speaker_fusion._frontend._audio import FrameMatrix
from speaker_fusion._frontend._feature_matrix import FeatureKind, FeatureMatrix


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_filters: int, fft_size: int, sample_rate_hz: int, low_hz: float, high_hz: float
) -> np.ndarray:
    """
    Build triangular filters equally spaced on the mel scale

    The upper edge is clamped to the Nyquist frequency.

    Args:
        n_filters: Number of triangular filters
        fft_size: Transform length; the filters cover fft_size // 2 + 1 bins
        sample_rate_hz: Sample rate of the analysed signal
        low_hz: Lower edge of the first filter
        high_hz: Upper edge of the last filter

    Returns:
        np.ndarray: Weights of shape (n_filters, fft_size // 2 + 1), peak 1 at each center
    """
    high_hz = min(high_hz, sample_rate_hz / 2.0)
    if low_hz >= high_hz:
        raise ConfigInvalidError(f"mel_low_hz {low_hz} must be below the upper edge {high_hz}")
    edges = mel_to_hz(np.linspace(hz_to_mel(low_hz), hz_to_mel(high_hz), n_filters + 2))
    bin_hz = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size

    lower = edges[:-2, None]
    center = edges[1:-1, None]
    upper = edges[2:, None]
    rising = (bin_hz[None, :] - lower) / (center - lower)
    falling = (upper - bin_hz[None, :]) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mfcc(frames: FrameMatrix, cfg: FrontendConfig) -> FeatureMatrix:
    """
    Compute 12 mel-frequency cepstral coefficients per frame

    Magnitude spectrum, mel filterbank, floored log energies, orthonormal DCT-II;
    c1..c12 are kept and c0 is dropped.

    Args:
        frames: Windowed frames
        cfg: Front-end configuration

    Returns:
        FeatureMatrix: MFCC12 stream with one row per frame

    Raises:
        ConfigInvalidError: When fft_size is shorter than the window
    """
    if cfg.fft_size < frames.window_len_samples:
        raise ConfigInvalidError(
            f"fft_size {cfg.fft_size} is shorter than the window "
            f"({frames.window_len_samples} samples)"
        )
    if frames.n_frames == 0:
        return FeatureMatrix(np.zeros((0, FeatureKind.MFCC12.dims)), FeatureKind.MFCC12)

    filters = mel_filterbank(
        cfg.n_mel_filters, cfg.fft_size, frames.sample_rate_hz, cfg.mel_low_hz, cfg.mel_high_hz
    )
    magnitude = np.abs(rfft(frames.frames, n=cfg.fft_size, axis=1))
    log_energy = np.log(np.maximum(magnitude @ filters.T, cfg.log_floor))
    cepstra = dct(log_energy, type=2, norm="ortho", axis=1)
    return FeatureMatrix(cepstra[:, 1 : FeatureKind.MFCC12.dims + 1], FeatureKind.MFCC12)
