import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coughlab.audio import (
    AudioClip,
    ConditioningConfig,
    antialias_filter,
    condition,
    detrend,
    downsample,
    load_wav,
    normalize,
)
from coughlab.errors import EmptyAudioError, UnsupportedCodecError, UpsampleUnsupportedError, WavFormatError


def _raw_wav(path, payload, codec=1, channels=1, rate=44100, bits=16):
    block = channels * bits // 8
    hdr = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    hdr += b"fmt " + struct.pack("<IHHIIHH", 16, codec, channels, rate, rate * block, block, bits)
    hdr += b"data" + struct.pack("<I", len(payload))
    path.write_bytes(hdr + payload)
    return path


def _rms(x):
    return float(np.sqrt(np.mean(x ** 2)))


# ---------------------------------------------------------------- load_wav

def test_pcm16_scaling(tmp_path):
    path = _raw_wav(tmp_path / "a.wav", np.array([0, 16384, -16384], "<i2").tobytes())
    clip = load_wav(path)
    np.testing.assert_allclose(clip.samples, [0.0, 0.5, -0.5], atol=1e-4)


def test_stereo_is_averaged(tmp_path):
    payload = np.array([1.0, 0.0], "<f4").tobytes()
    clip = load_wav(_raw_wav(tmp_path / "s.wav", payload, codec=3, channels=2, bits=32))
    np.testing.assert_allclose(clip.samples, [0.5])


def test_rate_and_length_preserved(wav_file, rng):
    x = rng.uniform(-0.5, 0.5, 4410)
    clip = load_wav(wav_file(x))
    assert clip.sample_rate == 44100
    assert len(clip) == 4410


def test_float32_round_trip_is_lossless(wav_file, rng):
    x = rng.uniform(-1, 1, 1000).astype(np.float32).astype(np.float64)
    np.testing.assert_array_equal(load_wav(wav_file(x, encoding="float32")).samples, x)


def test_pcm16_round_trip_within_one_lsb(wav_file, rng):
    x = rng.uniform(-1, 1, 1000)
    y = load_wav(wav_file(x)).samples
    assert np.max(np.abs(x - y)) <= 1.0 / 32768


def test_malformed_header(tmp_path):
    p = tmp_path / "bad.wav"
    p.write_bytes(b"RIFX\x00\x00\x00\x00WAVE")
    with pytest.raises(WavFormatError):
        load_wav(p)


def test_missing_data_chunk(tmp_path):
    p = tmp_path / "nodata.wav"
    p.write_bytes(b"RIFF" + struct.pack("<I", 28) + b"WAVE" + b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, 8000, 16000, 2, 16))
    with pytest.raises(WavFormatError):
        load_wav(p)


def test_unsupported_codec(tmp_path):
    p = _raw_wav(tmp_path / "u8.wav", bytes([128, 130]), bits=8)
    with pytest.raises(UnsupportedCodecError):
        load_wav(p)


def test_too_many_channels(tmp_path):
    p = _raw_wav(tmp_path / "c3.wav", np.zeros(3, "<i2").tobytes(), channels=3)
    with pytest.raises(UnsupportedCodecError):
        load_wav(p)


def test_zero_length_data(tmp_path):
    with pytest.raises(EmptyAudioError):
        load_wav(_raw_wav(tmp_path / "empty.wav", b""))


def test_truncated_data_chunk(tmp_path):
    p = _raw_wav(tmp_path / "t.wav", np.zeros(100, "<i2").tobytes())
    p.write_bytes(p.read_bytes()[:-50])
    with pytest.raises(WavFormatError):
        load_wav(p)


# ---------------------------------------------------------------- detrend / normalize

def test_detrend_constant_and_ramp():
    assert np.all(detrend(AudioClip(np.full(50, 3.2), 100)).samples == pytest.approx(0.0, abs=1e-12))
    n = np.arange(1000)
    np.testing.assert_allclose(detrend(AudioClip(0.003 * n - 0.7, 100)).samples, 0.0, atol=1e-9)


def test_detrend_single_sample():
    np.testing.assert_array_equal(detrend(AudioClip([5.0], 10)).samples, [0.0])


def test_detrend_recovers_sine_under_ramp():
    n = np.arange(2000, dtype=float)
    sine = np.sin(2 * np.pi * n / 97.0)
    x = sine + 0.002 * n + 0.3
    # independent closed-form least squares on the raw index
    a = np.vstack([n, np.ones_like(n)]).T
    coef = np.linalg.lstsq(a, x, rcond=None)[0]
    expected = x - a @ coef
    y = detrend(AudioClip(x, 1000)).samples
    np.testing.assert_allclose(y, expected, atol=1e-9)
    resid_slope = np.polyfit(n, y, 1)[0]
    assert abs(resid_slope) < 1e-9
    assert abs(y.mean()) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=300))
def test_detrend_idempotent(values):
    once = detrend(AudioClip(values, 100)).samples
    twice = detrend(AudioClip(once, 100)).samples
    scale = max(1.0, np.max(np.abs(values)))
    np.testing.assert_allclose(twice, once, atol=1e-9 * scale)


def test_normalize_examples():
    np.testing.assert_allclose(normalize(AudioClip([0.25, -0.5], 10)).samples, [0.5, -1.0])
    np.testing.assert_array_equal(normalize(AudioClip([0.0, 0.0, 0.0], 10)).samples, [0, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=200).filter(lambda v: max(map(abs, v)) > 1e-6),
       st.floats(1e-3, 1e3))
def test_normalize_peak_idempotent_scale_invariant(values, scale):
    x = np.array(values)
    y = normalize(AudioClip(x, 10)).samples
    assert np.max(np.abs(y)) == pytest.approx(1.0, abs=1e-9)
    np.testing.assert_allclose(normalize(AudioClip(y, 10)).samples, y, atol=1e-9)
    np.testing.assert_allclose(normalize(AudioClip(scale * x, 10)).samples, y, atol=1e-9)


# ---------------------------------------------------------------- downsample

def _tone(freq, fs, n):
    return np.sin(2 * np.pi * freq * np.arange(n) / fs)


def test_factor_four_length():
    out = downsample(AudioClip(np.zeros(44100), 44100), ConditioningConfig(11025))
    assert out.sample_rate == 11025
    assert len(out) == 11025


@pytest.mark.parametrize("n", [1, 3, 4, 5, 1001, 44103])
def test_output_length_is_ceil(n):
    assert len(downsample(AudioClip(np.ones(n), 44100))) == -(-n * 11025 // 44100)


def test_rational_path_length_and_tone():
    fs = 48000
    x = _tone(700.0, fs, 24000)
    y = downsample(AudioClip(x, fs)).samples
    assert y.size == -(-24000 * 11025 // 48000)
    ref = _tone(700.0, 11025, y.size)
    trim = slice(300, -300)
    assert np.max(np.abs(y[trim] - ref[trim])) < 0.01


def test_passband_tone_preserved_and_aligned():
    y = downsample(AudioClip(_tone(500.0, 44100, 44100), 44100)).samples
    ref = _tone(500.0, 11025, y.size)
    trim = slice(200, -200)
    assert _rms(y[trim]) == pytest.approx(_rms(ref[trim]), rel=0.01)
    # group delay compensated: sample-wise agreement, not just amplitude
    assert np.max(np.abs(y[trim] - ref[trim])) < 0.01


def test_stopband_tone_attenuated_60db():
    x = _tone(5300.0, 44100, 44100)
    y = downsample(AudioClip(x, 44100)).samples
    trim = slice(200, -200)
    atten_db = 20 * np.log10(_rms(y[trim]) / _rms(x))
    assert atten_db <= -60.0


def test_filter_is_linear_phase():
    taps, up, down = antialias_filter(44100, 11025)
    assert (up, down) == (1, 4)
    assert taps.size % 2 == 1
    np.testing.assert_allclose(taps, taps[::-1], atol=1e-15)


def test_upsampling_rejected():
    with pytest.raises(UpsampleUnsupportedError):
        downsample(AudioClip(np.zeros(100), 8000), ConditioningConfig(11025))


def test_bandlimited_peak_frequency_preserved():
    fs, n = 44100, 44100
    f0 = 1234.0
    y = downsample(AudioClip(_tone(f0, fs, n) * np.hanning(n), fs)).samples
    spec = np.abs(np.fft.rfft(y))
    peak = np.argmax(spec) * 11025 / y.size
    assert abs(peak - f0) <= 11025 / y.size


# ---------------------------------------------------------------- condition

def test_condition_all_zero():
    out = condition(AudioClip(np.zeros(4410), 44100))
    assert out.sample_rate == 11025
    assert np.all(out.samples == 0.0)


def test_condition_ramp_plus_tone():
    fs, n = 44100, 22050
    tone = _tone(440.0, fs, n)
    x = 3.0 * tone + 0.5 + 1e-4 * np.arange(n)
    out = condition(AudioClip(x, fs))
    assert out.sample_rate == 11025
    # independently composed: detrended tone, peak normalised, then resampled analytically
    t = detrend(AudioClip(tone, fs)).samples
    ref = _tone(440.0, 11025, len(out)) * (1.0 / np.max(np.abs(t)))
    trim = slice(200, -200)
    assert np.max(np.abs(out.samples[trim] - ref[trim])) < 0.02
    assert np.max(np.abs(out.samples)) == pytest.approx(1.0, abs=0.02)


def test_condition_order_detrend_before_normalize():
    # a large offset would dominate the peak if normalised first
    x = 10.0 + 0.1 * _tone(300.0, 44100, 8820)
    out = condition(AudioClip(x, 44100), ConditioningConfig(44100))
    assert np.max(np.abs(out.samples)) == pytest.approx(1.0, abs=1e-9)
    assert abs(out.samples.mean()) < 1e-3
