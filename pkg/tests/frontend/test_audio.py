import struct

import numpy as np
import pytest
from scipy.io import wavfile

from speaker_fusion import (
    AudioNotFoundError,
    ConfigInvalidError,
    CorruptHeaderError,
    FrameMatrix,
    SampleBuffer,
    UnsupportedFormatError,
    apply_hamming,
    drop_silent_frames,
    frame_signal,
    load_wav,
    pre_emphasize,
    write_wav,
)


def _write_pcm(path, samples, rate=16000):
    wavfile.write(str(path), rate, np.asarray(samples, dtype=np.int16))
    return path


def test_load_wav_scales_by_32768(tmp_path):
    """Test that 16-bit samples are divided by 32768 and the header rate is kept"""
    buf = load_wav(_write_pcm(tmp_path / "half.wav", [16384]))
    assert buf.sample_rate_hz == 16000
    np.testing.assert_array_equal(buf.samples, [0.5])

    buf = load_wav(_write_pcm(tmp_path / "ends.wav", [0, -32768]))
    np.testing.assert_array_equal(buf.samples, [0.0, -1.0])


def test_load_wav_mixes_stereo_down(tmp_path):
    """Test that multi-channel files are averaged to mono"""
    path = tmp_path / "stereo.wav"
    wavfile.write(str(path), 8000, np.array([[16384, 0], [-16384, 16384]], dtype=np.int16))
    buf = load_wav(path)
    assert buf.sample_rate_hz == 8000
    np.testing.assert_array_equal(buf.samples, [0.25, 0.0])


def test_load_wav_errors(tmp_path):
    """Test the missing, unsupported and corrupt file errors"""
    with pytest.raises(AudioNotFoundError):
        load_wav(tmp_path / "missing.wav")

    float_path = tmp_path / "float.wav"
    wavfile.write(str(float_path), 16000, np.zeros(10, dtype=np.float32))
    with pytest.raises(UnsupportedFormatError) as exc_info:
        load_wav(float_path)
    assert "16-bit PCM" in str(exc_info.value)

    corrupt_path = tmp_path / "corrupt.wav"
    corrupt_path.write_bytes(b"this is not a riff file at all")
    with pytest.raises(CorruptHeaderError):
        load_wav(corrupt_path)


def test_load_wav_rejects_compressed_formats(tmp_path):
    """Test that a well-formed ADPCM file is an unsupported format, not a corrupt header"""
    # format tag 2, mono, 8 kHz, 4 bits per sample
    fmt = struct.pack("<HHIIHH", 2, 1, 8000, 4000, 256, 4)
    payload = bytes(256)
    body = (
        b"WAVE"
        + b"fmt " + struct.pack("<I", len(fmt)) + fmt
        + b"data" + struct.pack("<I", len(payload)) + payload
    )  # fmt: skip
    path = tmp_path / "adpcm.wav"
    path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)

    with pytest.raises(UnsupportedFormatError) as exc_info:
        load_wav(path)
    assert "16-bit PCM" in str(exc_info.value)


def test_wav_round_trip_is_exact(tmp_path):
    """Test that decoding and re-encoding 16-bit PCM preserves every sample"""
    rng = np.random.default_rng(3)
    original = rng.integers(-32768, 32768, size=1000).astype(np.int16)
    path = _write_pcm(tmp_path / "noise.wav", original)

    write_wav(tmp_path / "copy.wav", load_wav(path))
    _, copied = wavfile.read(str(tmp_path / "copy.wav"))
    np.testing.assert_array_equal(copied, original)


def test_sample_buffer_invariants():
    """Test that the sample rate must be positive and samples finite"""
    with pytest.raises(ConfigInvalidError):
        SampleBuffer(np.zeros(4), 0)
    with pytest.raises(ConfigInvalidError):
        SampleBuffer(np.array([0.0, np.nan]), 16000)


def test_pre_emphasize_difference_equation():
    """Test pre-emphasis against the difference equation"""
    ones = SampleBuffer(np.ones(3), 16000)
    np.testing.assert_array_equal(pre_emphasize(ones, 0.0).samples, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(pre_emphasize(ones, 0.97).samples, [1.0, 0.03, 0.03], atol=1e-12)

    zeros = SampleBuffer(np.zeros(50), 16000)
    np.testing.assert_array_equal(pre_emphasize(zeros, 0.5).samples, np.zeros(50))

    empty = SampleBuffer(np.zeros(0), 16000)
    assert len(pre_emphasize(empty, 0.97)) == 0


def test_pre_emphasize_identity_for_zero_alpha():
    """Test that alpha = 0 leaves any buffer unchanged"""
    samples = np.random.default_rng(0).uniform(-1, 1, size=257)
    buf = SampleBuffer(samples, 16000)
    np.testing.assert_array_equal(pre_emphasize(buf, 0.0).samples, samples)


def test_pre_emphasize_rejects_alpha_out_of_range():
    """Test that alpha must lie in [0, 1)"""
    with pytest.raises(ConfigInvalidError):
        pre_emphasize(SampleBuffer(np.ones(3), 16000), 1.0)


def test_frame_signal_lengths_at_16k():
    """Test the 16 ms / 8 ms framing at 16 kHz"""
    frames = frame_signal(SampleBuffer(np.zeros(256), 16000), 16, 8)
    assert (frames.window_len_samples, frames.hop_len_samples) == (256, 128)
    assert frames.n_frames == 1

    samples = np.arange(512, dtype=float) / 512
    frames = frame_signal(SampleBuffer(samples, 16000), 16, 8)
    assert frames.n_frames == 3
    for index, offset in enumerate((0, 128, 256)):
        np.testing.assert_array_equal(frames.frames[index], samples[offset : offset + 256])


def test_frame_signal_short_input_has_no_frames():
    """Test that a signal shorter than one window yields zero frames"""
    frames = frame_signal(SampleBuffer(np.zeros(100), 16000), 16, 8)
    assert frames.n_frames == 0
    assert frames.frames.shape == (0, 256)


@pytest.mark.parametrize("n_samples", [160, 161, 200, 333, 1000])
@pytest.mark.parametrize("window_ms,hop_ms", [(10, 5), (10, 10), (20, 7)])
def test_frame_count_matches_offset_enumeration(n_samples, window_ms, hop_ms):
    """Test the closed-form frame count against enumerating frame offsets"""
    rate = 16000
    buf = SampleBuffer(np.zeros(n_samples), rate)
    frames = frame_signal(buf, window_ms, hop_ms)

    window = int(round(window_ms * rate / 1000))
    hop = int(round(hop_ms * rate / 1000))
    offsets = [start for start in range(0, n_samples, hop) if start + window <= n_samples]
    assert frames.n_frames == len(offsets)
    if n_samples >= window:
        assert frames.n_frames == (n_samples - window) // hop + 1


def test_frame_signal_rejects_hop_longer_than_window():
    """Test that hop_ms may not exceed window_ms"""
    with pytest.raises(ConfigInvalidError):
        frame_signal(SampleBuffer(np.zeros(1000), 16000), 8, 16)


def test_apply_hamming_values():
    """Test the closed-form Hamming weights and their symmetry"""
    ones = FrameMatrix(np.ones((1, 3)), 3, 1, 16000)
    np.testing.assert_allclose(apply_hamming(ones).frames[0], [0.08, 1.0, 0.08], atol=1e-12)

    zeros = FrameMatrix(np.zeros((2, 8)), 8, 4, 16000)
    np.testing.assert_array_equal(apply_hamming(zeros).frames, np.zeros((2, 8)))

    for length in (2, 5, 256):
        weights = apply_hamming(FrameMatrix(np.ones((1, length)), length, 1, 16000)).frames[0]
        assert weights[0] == pytest.approx(0.08)
        assert weights[-1] == pytest.approx(0.08)
        np.testing.assert_allclose(weights, weights[::-1], atol=1e-12)


def test_drop_silent_frames():
    """Test that frames far below the loudest frame are removed"""
    frames = np.vstack([np.ones(4), np.full(4, 1e-4), np.full(4, 0.5)])
    kept = drop_silent_frames(FrameMatrix(frames, 4, 2, 16000), threshold_db=40)
    np.testing.assert_array_equal(kept.frames, frames[[0, 2]])
