"""Frame-level MFCC features and band-power summaries.

Per frame: Hamming window, |rfft|^2, triangular mel filterbank, log,
orthonormal DCT-II. Fourteen cepstra plus their first and second
regression deltas give the 42-dimensional vectors the classifier consumes.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .audio import AudioClip
from .errors import ConfigError, FeatureFileError, FilterbankError

LOG_FLOOR = 1e-10

FEATURE_MAGIC = b"CLFEAT\x00\x00"
FEATURE_VERSION = 1
_FEATURE_HEADER = struct.Struct("<8sHII")


@dataclass(frozen=True)
class FrameConfig:
    frame_len: float = 0.100
    hop_len: float = 0.050
    window: str = "hamming"
    fft_size: int | None = None

    def __post_init__(self):
        if not 0 < self.hop_len <= self.frame_len:
            raise ConfigError("need 0 < hop_len <= frame_len")
        if self.window != "hamming":
            raise ConfigError(f"unsupported window {self.window!r}")

    def frame_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.frame_len * sample_rate)))

    def hop_samples(self, sample_rate: int) -> int:
        return max(1, int(round(self.hop_len * sample_rate)))

    def nfft(self, sample_rate: int) -> int:
        n = self.frame_samples(sample_rate)
        if self.fft_size is None:
            return 1 << (n - 1).bit_length()
        if self.fft_size < n:
            raise ConfigError(f"fft_size {self.fft_size} shorter than frame ({n} samples)")
        return self.fft_size


@dataclass(frozen=True)
class MfccConfig:
    n_mfcc: int = 14
    n_mels: int = 26
    fmin: float = 0.0
    fmax: float | None = None
    delta_window: int = 2
    include_c0: bool = True

    def __post_init__(self):
        if not 1 <= self.n_mfcc <= self.n_mels:
            raise ConfigError("need 1 <= n_mfcc <= n_mels")
        if not self.include_c0 and self.n_mfcc >= self.n_mels:
            raise ConfigError("n_mfcc must be < n_mels when c0 is dropped")
        if self.delta_window < 1:
            raise ConfigError("delta_window must be >= 1")

    def band(self, sample_rate: int) -> tuple[float, float]:
        nyquist = sample_rate / 2.0
        fmax = nyquist if self.fmax is None else float(self.fmax)
        if not 0 <= self.fmin < fmax <= nyquist:
            raise ConfigError(f"need 0 <= fmin < fmax <= {nyquist}")
        return float(self.fmin), fmax


@dataclass(frozen=True)
class FeatureSequence:
    frames: np.ndarray  # (T, D)
    frame_times: np.ndarray  # (T,) frame centres, seconds
    source_id: str = field(default="", compare=False)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class SpectralBins:
    bin_power: np.ndarray  # (n_bins,)
    bin_edges: np.ndarray  # (n_bins + 1,) Hz


# --------------------------------------------------------------------------
# framing and spectra
# --------------------------------------------------------------------------

def hamming(n: int) -> np.ndarray:
    """Symmetric Hamming window, 0.54 - 0.46 cos(2 pi k / (n - 1))."""
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * k / (n - 1))


def n_frames_for(n_samples: int, frame: int, hop: int) -> int:
    return 1 + -(-max(0, n_samples - frame) // hop)


def frame_signal(clip: AudioClip, cfg: FrameConfig | None = None) -> np.ndarray:
    """Split into Hamming-windowed frames, shape (T, frame_samples).

    The final partial frame is zero-padded, so a clip shorter than one
    frame still yields a single frame.
    """
    cfg = cfg or FrameConfig()
    frame = cfg.frame_samples(clip.sample_rate)
    hop = cfg.hop_samples(clip.sample_rate)
    x = clip.samples
    t = n_frames_for(x.size, frame, hop)
    padded = np.zeros((t - 1) * hop + frame)
    padded[: x.size] = x
    idx = np.arange(frame)[None, :] + hop * np.arange(t)[:, None]
    return padded[idx] * hamming(frame)


def power_spectrum(frames: np.ndarray, fft_size: int) -> np.ndarray:
    """One-sided |FFT|^2 over fft_size // 2 + 1 bins (no scaling).

    Parseval for this convention: ``P[0] + 2 * sum(P[1:-1]) + P[-1] ==
    fft_size * sum(frame ** 2)`` for even ``fft_size``.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] > fft_size:
        raise ConfigError(f"frame length {frames.shape[-1]} exceeds fft_size {fft_size}")
    spec = np.fft.rfft(frames, n=fft_size, axis=-1)
    return spec.real ** 2 + spec.imag ** 2


# --------------------------------------------------------------------------
# mel / cepstrum
# --------------------------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=16)
def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular filters of unit peak, centres equally spaced in mel.

    Each triangle spans from its left neighbour's centre to its right
    neighbour's centre. Rows that catch no FFT bin are a configuration error.
    """
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, mid, hi = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    empty = np.flatnonzero(fb.sum(axis=1) <= 0.0)
    if empty.size:
        raise FilterbankError(
            f"{empty.size} of {n_mels} mel filters cover no FFT bin "
            f"(fft_size={fft_size}, fs={sample_rate}); use fewer mels or a larger FFT"
        )
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=16)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are basis vectors (B @ B.T == I)."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    basis = np.cos(np.pi * k * (2 * j + 1) / (2 * n)) * np.sqrt(2.0 / n)
    basis[0] /= np.sqrt(2.0)
    basis.setflags(write=False)
    return basis


def mfcc(spectra: np.ndarray, sample_rate: int, fft_size: int, cfg: MfccConfig | None = None) -> np.ndarray:
    """Cepstral coefficients for a (T, fft_size//2+1) power-spectrum sequence."""
    cfg = cfg or MfccConfig()
    fmin, fmax = cfg.band(sample_rate)
    fb = mel_filterbank(cfg.n_mels, fft_size, sample_rate, fmin, fmax)
    log_mel = np.log(np.atleast_2d(spectra) @ fb.T + LOG_FLOOR)
    ceps = log_mel @ dct_matrix(cfg.n_mels).T
    first = 0 if cfg.include_c0 else 1
    return ceps[:, first : first + cfg.n_mfcc]


def deltas(coeffs: np.ndarray, window: int = 2) -> np.ndarray:
    """Regression deltas with edge frames replicated."""
    c = np.atleast_2d(coeffs)
    t = c.shape[0]
    padded = np.pad(c, ((window, window), (0, 0)), mode="edge")
    num = np.zeros_like(c)
    for k in range(1, window + 1):
        num += k * (padded[window + k : window + k + t] - padded[window - k : window - k + t])
    return num / (2.0 * sum(k * k for k in range(1, window + 1)))


def add_deltas(coeffs: np.ndarray, window: int = 2) -> np.ndarray:
    """Stack ``[c | delta | delta-delta]`` column-wise."""
    d1 = deltas(coeffs, window)
    d2 = deltas(d1, window)
    return np.hstack([np.atleast_2d(coeffs), d1, d2])


# --------------------------------------------------------------------------
# composite operations
# --------------------------------------------------------------------------

def extract(clip: AudioClip, frame_cfg: FrameConfig | None = None, mfcc_cfg: MfccConfig | None = None) -> FeatureSequence:
    frame_cfg = frame_cfg or FrameConfig()
    mfcc_cfg = mfcc_cfg or MfccConfig()
    fs = clip.sample_rate
    nfft = frame_cfg.nfft(fs)
    frames = frame_signal(clip, frame_cfg)
    ceps = mfcc(power_spectrum(frames, nfft), fs, nfft, mfcc_cfg)
    feats = add_deltas(ceps, mfcc_cfg.delta_window)
    hop = frame_cfg.hop_samples(fs)
    centre = frame_cfg.frame_samples(fs) / 2.0
    times = (np.arange(feats.shape[0]) * hop + centre) / fs
    return FeatureSequence(feats, times, clip.source_id)


def spectral_bins(clip: AudioClip, n_bins: int = 5, frame_cfg: FrameConfig | None = None) -> SpectralBins:
    """Average frame power spectrum, summed into ``n_bins`` equal bands on [0, fs/2].

    An FFT bin at frequency f belongs to band ``floor(f / width)``; the
    Nyquist bin joins the last band.
    """
    frame_cfg = frame_cfg or FrameConfig()
    fs = clip.sample_rate
    nfft = frame_cfg.nfft(fs)
    spec = power_spectrum(frame_signal(clip, frame_cfg), nfft).mean(axis=0)
    freqs = np.arange(spec.size) * fs / nfft
    width = (fs / 2.0) / n_bins
    band = np.minimum((freqs / width).astype(int), n_bins - 1)
    power = np.bincount(band, weights=spec, minlength=n_bins)
    edges = np.linspace(0.0, fs / 2.0, n_bins + 1)
    return SpectralBins(power, edges)


# --------------------------------------------------------------------------
# feature files
# --------------------------------------------------------------------------

def save_features(path, seq: FeatureSequence) -> None:
    """Binary dump: magic, version, T, D, then T*D little-endian float64."""
    t, d = seq.frames.shape
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, t, d))
        fh.write(np.ascontiguousarray(seq.frames, dtype="<f8").tobytes())


def load_features(path) -> FeatureSequence:
    buf = Path(path).read_bytes()
    if len(buf) < _FEATURE_HEADER.size:
        raise FeatureFileError(f"{path}: truncated header")
    magic, version, t, d = _FEATURE_HEADER.unpack_from(buf)
    if magic != FEATURE_MAGIC:
        raise FeatureFileError(f"{path}: bad magic")
    if version != FEATURE_VERSION:
        raise FeatureFileError(f"{path}: unknown version {version}")
    body = buf[_FEATURE_HEADER.size :]
    if len(body) != 8 * t * d:
        raise FeatureFileError(f"{path}: expected {t}x{d} matrix, got {len(body)} bytes")
    frames = np.frombuffer(body, dtype="<f8").reshape(t, d).astype(np.float64)
    return FeatureSequence(frames, np.full(t, np.nan), str(path))


def export_features_csv(path, seq: FeatureSequence) -> None:
    d = seq.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"f{j}" for j in range(d)])
        for ts, row in zip(seq.frame_times, seq.frames):
            w.writerow([repr(float(ts))] + [repr(float(v)) for v in row])
