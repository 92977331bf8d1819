from typing import Tuple

import numpy as np
from scipy.fft import ifft, rfft
from scipy.signal import lfilter

from speaker_fusion._config import FrontendConfig
from speaker_fusion._exceptions import ConfigInvalidError, NumericalFailureError
from speaker_fusion._frontend._audio import FrameMatrix
from speaker_fusion._frontend._feature_matrix import FeatureKind, FeatureMatrix

# Regression slope over five frames, normalised by sum(k^2) for k in -2..2
RASTA_NUMERATOR = np.array([0.2, 0.1, 0.0, -0.1, -0.2])


def hz_to_bark(f):
    return 6.0 * np.arcsinh(np.asarray(f, dtype=np.float64) / 600.0)


def bark_to_hz(z):
    return 600.0 * np.sinh(np.asarray(z, dtype=np.float64) / 6.0)


def bark_filterbank(n_bands: int, fft_size: int, sample_rate_hz: int) -> np.ndarray:
    """
    Build critical-band integration weights spaced evenly in Bark from 0 Hz to Nyquist

    Each band has a trapezoidal shape in the log domain: flat over one Bark,
    rising at 10 dB/Bark below and falling at 25 dB/Bark above.

    Returns:
        np.ndarray: Weights of shape (n_bands, fft_size // 2 + 1)
    """
    nyquist_bark = hz_to_bark(sample_rate_hz / 2.0)
    centers = np.arange(n_bands) * nyquist_bark / (n_bands - 1)
    bin_bark = hz_to_bark(np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size)

    below = bin_bark[None, :] - centers[:, None] - 0.5
    above = bin_bark[None, :] - centers[:, None] + 0.5
    return 10.0 ** np.minimum(0.0, np.minimum(above, -2.5 * below))


def rasta_filter(log_bands: np.ndarray, pole: float = 0.98) -> np.ndarray:
    """
    Band-pass filter every band trajectory along time

    The first four outputs are zero; the FIR part run over those frames primes
    the state of the IIR filter applied to the rest.

    Args:
        log_bands: Log critical-band energies, shape (frames, bands)
        pole: Pole of the integrator

    Returns:
        np.ndarray: Filtered trajectories of the same shape
    """
    log_bands = np.asarray(log_bands, dtype=np.float64)
    filtered = np.zeros_like(log_bands)
    n_prime = len(RASTA_NUMERATOR) - 1
    if log_bands.shape[0] <= n_prime:
        return filtered

    state = np.zeros((n_prime, log_bands.shape[1]))
    _, state = lfilter(RASTA_NUMERATOR, [1.0], log_bands[:n_prime], axis=0, zi=state)
    filtered[n_prime:], _ = lfilter(
        RASTA_NUMERATOR, [1.0, -pole], log_bands[n_prime:], axis=0, zi=state
    )
    return filtered


def equal_loudness_compress(bands: np.ndarray, sample_rate_hz: int) -> np.ndarray:
    """Apply equal-loudness weighting and the 0.33 intensity-loudness power law."""
    n_bands = bands.shape[1]
    centers_hz = bark_to_hz(np.linspace(0.0, hz_to_bark(sample_rate_hz / 2.0), n_bands))
    fsq = centers_hz**2
    weights = ((fsq / (fsq + 1.6e5)) ** 2) * ((fsq + 1.44e6) / (fsq + 9.61e6))
    compressed = (bands * weights[None, :]) ** 0.33
    # edge bands are unreliable; copy their neighbours
    compressed[:, 0] = compressed[:, 1]
    compressed[:, -1] = compressed[:, -2]
    return compressed


def levinson_durbin(r: np.ndarray, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve the autocorrelation normal equations frame by frame

    Args:
        r: Autocorrelation lags 0..order, shape (frames, order + 1)
        order: Prediction order

    Returns:
        Tuple[np.ndarray, np.ndarray]: Monic predictor polynomials (frames, order + 1)
        and final prediction errors (frames,)

    Raises:
        NumericalFailureError: When a prediction error becomes non-positive
    """
    n_frames = r.shape[0]
    a = np.zeros((n_frames, order + 1))
    a[:, 0] = 1.0
    error = r[:, 0].copy()
    if not np.all(error > 0):
        raise NumericalFailureError("zero-lag autocorrelation is not positive")

    for i in range(1, order + 1):
        acc = r[:, i] + np.sum(a[:, 1:i] * r[:, i - 1 : 0 : -1], axis=1)
        k = -acc / error
        updated = a.copy()
        updated[:, 1:i] = a[:, 1:i] + k[:, None] * a[:, i - 1 : 0 : -1]
        updated[:, i] = k
        a = updated
        error = error * (1.0 - k**2)
        if not np.all(np.isfinite(error) & (error > 0)):
            raise NumericalFailureError(f"non-positive prediction error at order {i}")
    return a, error


def lpc_to_cepstrum(a: np.ndarray, error: np.ndarray, n_out: int) -> np.ndarray:
    """Convert gain-normalised predictors to cepstra c0..c(n_out-1)."""
    cepstra = np.zeros((a.shape[0], n_out))
    cepstra[:, 0] = np.log(error)
    for n in range(1, n_out):
        acc = np.zeros(a.shape[0])
        for m in range(1, n):
            acc += (n - m) * a[:, m] * cepstra[:, n - m]
        cepstra[:, n] = -(a[:, n] + acc / n)
    return cepstra


def rasta_plp(frames: FrameMatrix, cfg: FrontendConfig) -> FeatureMatrix:
    """
    Compute 13 RASTA-PLP cepstra (c0..c12) per frame

    Power spectrum, Bark integration, log, RASTA filtering, exp, equal-loudness
    and power-law compression, autocorrelation by inverse transform, order-12
    Levinson-Durbin and LPC-to-cepstrum conversion.

    Args:
        frames: Windowed frames of one utterance
        cfg: Front-end configuration

    Returns:
        FeatureMatrix: RASTAPLP13 stream with one row per frame

    Raises:
        ConfigInvalidError: When fft_size is shorter than the window
        NumericalFailureError: When the all-pole fit degenerates
    """
    if cfg.fft_size < frames.window_len_samples:
        raise ConfigInvalidError(
            f"fft_size {cfg.fft_size} is shorter than the window "
            f"({frames.window_len_samples} samples)"
        )
    n_cepstra = cfg.plp_model_order + 1
    if frames.n_frames == 0:
        return FeatureMatrix(np.zeros((0, n_cepstra)), FeatureKind.RASTAPLP13)

    power = np.abs(rfft(frames.frames, n=cfg.fft_size, axis=1)) ** 2
    weights = bark_filterbank(cfg.n_bark_bands, cfg.fft_size, frames.sample_rate_hz)
    log_bands = np.log(np.maximum(power @ weights.T, cfg.log_floor))
    bands = np.exp(rasta_filter(log_bands, cfg.rasta_pole))
    auditory = equal_loudness_compress(bands, frames.sample_rate_hz)

    n_bands = auditory.shape[1]
    mirrored = np.hstack([auditory, auditory[:, n_bands - 2 : 0 : -1]])
    autocorr = np.real(ifft(mirrored, axis=1))[:, : cfg.plp_model_order + 1]

    a, error = levinson_durbin(autocorr, cfg.plp_model_order)
    return FeatureMatrix(lpc_to_cepstrum(a, error, n_cepstra), FeatureKind.RASTAPLP13)
