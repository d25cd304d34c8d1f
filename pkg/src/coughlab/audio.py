"""Loading and conditioning of segmented cough recordings.

The conditioning chain is fixed: linear detrend, peak normalisation, then
anti-aliased downsampling to the analysis rate.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import lru_cache
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import firwin, kaiserord, upfirdn

from .errors import (
    ConfigError,
    EmptyAudioError,
    UnsupportedCodecError,
    UpsampleUnsupportedError,
    WavFormatError,
)

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE

# Anti-alias FIR: cutoff and transition width as fractions of the target rate.
CUTOFF_FRACTION = 0.45
TRANSITION_FRACTION = 0.05
STOPBAND_DB = 65.0  # designed with margin over the required 60 dB


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_id: str = field(default="", compare=False)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise EmptyAudioError("audio clip has no samples")
        if int(self.sample_rate) <= 0:
            raise ConfigError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def replace(self, samples, sample_rate=None) -> "AudioClip":
        return AudioClip(samples, sample_rate or self.sample_rate, self.source_id)


@dataclass(frozen=True)
class ConditioningConfig:
    target_rate: int = 11025
    normalize_peak: bool = True
    detrend_mode: str = "linear"

    def __post_init__(self):
        if self.target_rate <= 0:
            raise ConfigError("target_rate must be positive")
        if self.detrend_mode != "linear":
            raise ConfigError(f"unknown detrend mode {self.detrend_mode!r}")


# --------------------------------------------------------------------------
# WAV I/O
# --------------------------------------------------------------------------

def _iter_chunks(buf: bytes):
    pos = 12
    while pos + 8 <= len(buf):
        cid, size = struct.unpack_from("<4sI", buf, pos)
        body = buf[pos + 8 : pos + 8 + size]
        yield cid, body, size
        pos += 8 + size + (size & 1)


def load_wav(path) -> AudioClip:
    """Read a PCM16 or float32 WAV file as a mono clip scaled to [-1, 1].

    Stereo files are collapsed by averaging the channels.
    """
    path = Path(path)
    buf = path.read_bytes()
    if len(buf) < 12 or buf[:4] != b"RIFF" or buf[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    for cid, body, size in _iter_chunks(buf):
        if cid == b"fmt ":
            if len(body) < 16:
                raise WavFormatError(f"{path}: truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise WavFormatError(f"{path}: truncated extensible fmt chunk")
                sub = struct.unpack_from("<H", body, 24)[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            if len(body) < size:
                raise WavFormatError(f"{path}: data chunk truncated ({len(body)} of {size} bytes)")
            data = body
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")

    codec, channels, rate, _, block_align, bits = fmt
    if codec == WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif codec == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedCodecError(f"{path}: unsupported encoding (format tag {codec}, {bits} bits)")
    if channels not in (1, 2):
        raise UnsupportedCodecError(f"{path}: {channels} channels not supported")
    if rate <= 0:
        raise WavFormatError(f"{path}: invalid sample rate {rate}")
    if block_align != channels * dtype.itemsize:
        raise WavFormatError(f"{path}: inconsistent block alignment {block_align}")

    n_frames = len(data) // block_align
    if n_frames == 0:
        raise EmptyAudioError(f"{path}: no audio frames")
    pcm = np.frombuffer(data, dtype=dtype, count=n_frames * channels)
    x = pcm.astype(np.float64).reshape(n_frames, channels) * scale
    mono = x.mean(axis=1) if channels == 2 else x[:, 0]
    return AudioClip(mono, rate, source_id=str(path))


def write_wav(path, clip: AudioClip, encoding: str = "pcm16") -> None:
    """Write a mono clip as PCM16 (default) or IEEE float32."""
    x = clip.samples
    if encoding == "pcm16":
        pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        codec, bits = WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        pcm = x.astype("<f4")
        codec, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ConfigError(f"unknown WAV encoding {encoding!r}")
    payload = pcm.tobytes()
    block = bits // 8
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    header += b"fmt " + struct.pack(
        "<IHHIIHH", 16, codec, 1, clip.sample_rate, clip.sample_rate * block, block, bits
    )
    header += b"data" + struct.pack("<I", len(payload))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
        if len(payload) & 1:
            fh.write(b"\x00")


# --------------------------------------------------------------------------
# Conditioning
# --------------------------------------------------------------------------

def detrend(clip: AudioClip) -> AudioClip:
    """Subtract the least-squares line fitted over the sample index."""
    x = clip.samples
    n = x.size
    if n == 1:
        return clip.replace(np.zeros(1))
    idx = np.arange(n, dtype=np.float64)
    idx -= idx.mean()
    centred = x - x.mean()
    slope = np.dot(idx, centred) / np.dot(idx, idx)
    return clip.replace(centred - slope * idx)


def normalize(clip: AudioClip) -> AudioClip:
    peak = np.max(np.abs(clip.samples))
    if peak == 0.0:
        return clip.replace(clip.samples.copy())
    return clip.replace(clip.samples / peak)


@lru_cache(maxsize=32)
def antialias_filter(source_rate: int, target_rate: int) -> tuple[np.ndarray, int, int]:
    """Kaiser windowed-sinc lowpass for resampling ``source_rate`` -> ``target_rate``.

    Returns ``(taps, up, down)``. The taps run at ``up * source_rate`` and
    carry a gain of ``up`` to undo zero-stuffing.
    """
    g = gcd(source_rate, target_rate)
    up, down = target_rate // g, source_rate // g
    fs = up * source_rate
    width = TRANSITION_FRACTION * target_rate
    numtaps, beta = kaiserord(STOPBAND_DB, width / (fs / 2))
    numtaps |= 1  # odd length -> integer group delay
    taps = firwin(numtaps, CUTOFF_FRACTION * target_rate, window=("kaiser", beta), fs=fs) * up
    taps.setflags(write=False)
    return taps, up, down


def downsample(clip: AudioClip, cfg: ConditioningConfig | None = None) -> AudioClip:
    """Lowpass below 0.45*target and decimate; the output is delay-compensated.

    Output length is ``ceil(N * target / source)``.
    """
    cfg = cfg or ConditioningConfig()
    src, dst = clip.sample_rate, cfg.target_rate
    if dst > src:
        raise UpsampleUnsupportedError(f"cannot resample {src} Hz up to {dst} Hz")
    if dst == src:
        return clip.replace(clip.samples.copy())

    taps, up, down = antialias_filter(src, dst)
    n_out = -(-clip.samples.size * up // down)
    delay = (taps.size - 1) // 2
    # front-pad taps so the delay lands on the output grid
    pre = (-delay) % down
    if pre:
        taps = np.concatenate([np.zeros(pre), taps])
    start = (delay + pre) // down
    y = upfirdn(taps, clip.samples, up, down)
    y = y[start : start + n_out]
    if y.size < n_out:
        y = np.pad(y, (0, n_out - y.size))
    return clip.replace(y, dst)


def condition(clip: AudioClip, cfg: ConditioningConfig | None = None) -> AudioClip:
    cfg = cfg or ConditioningConfig()
    out = detrend(clip)
    if cfg.normalize_peak:
        out = normalize(out)
    return downsample(out, cfg)
