"""Audio front end: STFT, mel filterbank and log-compressed mel spectrogram.

Analysis parameters are fixed: 44.1 kHz input, 2048-point Hann window,
441-sample hop (10 ms), 80 mel bands spanning 20 Hz to 20 kHz.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from . import SAMPLE_RATE
from .errors import InputTooShortError, UnsupportedRateError

N_FFT = 2048
HOP = 441
N_MELS = 80
F_MIN = 20.0
F_MAX = 20000.0


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate != SAMPLE_RATE:
            raise UnsupportedRateError(
                f"sample rate {self.sample_rate} Hz is unsupported; expected {SAMPLE_RATE} Hz")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"audio must be mono, got shape {samples.shape}")
        if samples.size < N_FFT:
            raise InputTooShortError(
                f"clip has {samples.size} samples; at least {N_FFT} are required")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def n_frames(n_samples: int) -> int:
    """Number of STFT frames for a clip of ``n_samples`` (no edge padding)."""
    if n_samples < N_FFT:
        raise InputTooShortError(f"clip has {n_samples} samples; at least {N_FFT} are required")
    return (n_samples - N_FFT) // HOP + 1


@lru_cache(maxsize=1)
def hann_window() -> np.ndarray:
    window = get_window("hann", N_FFT, fftbins=True)
    window.setflags(write=False)
    return window


def frame_signal(samples: np.ndarray) -> np.ndarray:
    """Return a ``T x N_FFT`` view; frame ``t`` covers ``[t*HOP, t*HOP + N_FFT)``."""
    count = n_frames(samples.size)
    view = np.lib.stride_tricks.sliding_window_view(samples, N_FFT)
    return view[::HOP][:count]


def stft(clip: AudioClip) -> np.ndarray:
    """One-sided complex spectrum, shape ``(1025, T)``."""
    frames = frame_signal(clip.samples) * hann_window()
    return np.fft.rfft(frames, n=N_FFT, axis=1).T


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=1)
def mel_filterbank() -> np.ndarray:
    """80 x 1025 triangular filters, each scaled to a peak value of 1.

    Filter ``i`` rises from edge ``i`` to a peak at edge ``i + 1`` and falls
    to edge ``i + 2``, where the 82 edges are equally spaced on the HTK mel
    scale between 20 Hz and 20 kHz.
    """
    edges = mel_to_hz(np.linspace(hz_to_mel(F_MIN), hz_to_mel(F_MAX), N_MELS + 2))
    freqs = np.arange(N_FFT // 2 + 1) * SAMPLE_RATE / N_FFT
    bank = np.zeros((N_MELS, freqs.size))
    for i in range(N_MELS):
        left, center, right = edges[i:i + 3]
        rising = (freqs - left) / (center - left)
        falling = (right - freqs) / (right - center)
        bank[i] = np.maximum(0.0, np.minimum(rising, falling))
        bank[i] /= bank[i].max()
    bank.setflags(write=False)
    return bank


def mel_spectrogram(clip: AudioClip) -> np.ndarray:
    """``log(1 + filterbank @ |STFT|)``, shape ``(80, T)``, nonnegative."""
    return np.log1p(mel_filterbank() @ np.abs(stft(clip)))


def read_wav(path) -> AudioClip:
    """Load a 16-bit PCM or float WAV, averaging channels to mono."""
    rate, data = wavfile.read(str(path))
    if rate != SAMPLE_RATE:
        raise UnsupportedRateError(
            f"{path}: sample rate {rate} Hz is unsupported; expected {SAMPLE_RATE} Hz "
            "(resampling is not performed)")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif np.issubdtype(data.dtype, np.floating):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample type {data.dtype}")
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(samples)


def write_wav(path, samples: np.ndarray) -> None:
    """Write mono 16-bit PCM at 44.1 kHz."""
    pcm = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(str(Path(path)), SAMPLE_RATE, pcm)
