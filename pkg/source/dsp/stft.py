"""STFT analysis/synthesis and signal conditioning.

The front end works on 16 kHz signals: every signal is peak-normalised,
then analysed with a 640-point STFT (periodic Hamming window of 640
samples, hop 160). Only the 321 non-negative frequency bins are kept.

Edge handling: the tail of a signal is zero-padded so that every sample
is covered by at least one frame, and synthesis divides the overlap-add
by the summed squared window, so `istft(stft(x))` reproduces `x` on its
full length.
"""

from dataclasses import dataclass, field
import math
import os

import numpy as np
from scipy.signal import windows
import soundfile as sf

from source.utils.errors import (
    AllZeroSignal,
    DimensionMismatch,
    IoError,
    LengthMismatch,
    ShapeMismatch,
    SignalTooShort,
    ValidationError,
    ZeroWindowOverlap,
)
from source.utils.path import atomic_target

SAMPLE_RATE = 16000
N_FFT = 640
HOP = 160
NUM_BINS = N_FFT // 2 + 1

# Minimum squared-window envelope accepted during synthesis.
ENVELOPE_FLOOR = 1e-12


@dataclass(frozen=True)
class Waveform:
    """Real-valued sampled signal."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ShapeMismatch(f"Waveform must be one-dimensional, got shape {samples.shape}.")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("Waveform contains NaN or Inf samples.")
        if self.sample_rate <= 0:
            raise ValidationError(f"Sample rate must be positive, got {self.sample_rate}.")
        object.__setattr__(self, 'samples', samples)

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def hamming_window(n: int) -> np.ndarray:
    """Periodic (DFT-even) Hamming window, 0.54 - 0.46 cos(2 pi k / n)."""

    if n < 2:
        raise ValidationError(f"Window length must be at least 2, got {n}.")

    return windows.hamming(n, sym=False)


@dataclass(frozen=True)
class StftParams:
    n_fft: int = N_FFT
    win_length: int = N_FFT
    hop: int = HOP
    window: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.win_length != self.n_fft:
            raise ValidationError(f"win_length ({self.win_length}) must equal n_fft ({self.n_fft}).")
        if not 0 < self.hop <= self.win_length:
            raise ValidationError(f"hop ({self.hop}) must lie in (0, win_length].")
        window = hamming_window(self.win_length) if self.window is None else np.asarray(self.window, dtype=np.float64)
        if len(window) != self.win_length:
            raise ValidationError(f"Window has {len(window)} samples, expected {self.win_length}.")
        object.__setattr__(self, 'window', window)

    @property
    def num_bins(self) -> int:
        return self.n_fft // 2 + 1

    def num_frames(self, length: int) -> int:
        """Frames needed to cover `length` samples with tail padding."""
        if length < self.n_fft:
            raise SignalTooShort(f"Signal has {length} samples, at least {self.n_fft} required.")
        return math.ceil((length - self.n_fft) / self.hop) + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    """STFT coefficients with shape (bins, frames)."""

    values: np.ndarray
    params: StftParams = field(default_factory=StftParams)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2 or values.shape[0] != self.params.num_bins:
            raise ShapeMismatch(f"Spectrogram shape {values.shape} does not have {self.params.num_bins} bins.")
        if not np.all(np.isfinite(values)):
            raise ValidationError("Spectrogram contains NaN or Inf values.")
        object.__setattr__(self, 'values', values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def num_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatch(f"Magnitude spectrogram must be 2-D, got shape {values.shape}.")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValidationError("Magnitudes must be finite and non-negative.")
        object.__setattr__(self, 'values', values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def peak_normalize(w: Waveform) -> Waveform:
    """Scale the signal so that its largest absolute sample is exactly 1."""

    peak = np.max(np.abs(w.samples)) if len(w) > 0 else 0.0
    if peak == 0:
        raise AllZeroSignal("Cannot peak-normalise a signal whose samples are all zero.")

    return Waveform(w.samples / peak, w.sample_rate)


def _frame_indices(num_frames: int, params: StftParams) -> np.ndarray:
    # (frames, n_fft) sample indices into the padded signal.
    return params.hop * np.arange(num_frames)[:, None] + np.arange(params.n_fft)[None, :]


def stft(w: Waveform, params: StftParams = None) -> ComplexSpectrogram:
    """Short-time Fourier transform keeping the non-negative bins.

    Args:
        w : Waveform
            Signal with at least `n_fft` samples.
        params : StftParams (default 640 / 640 / 160, Hamming)
            Analysis parameters.

    Returns:
        ComplexSpectrogram
            Coefficients of shape (n_fft / 2 + 1, T) with
            T = ceil((L - n_fft) / hop) + 1.
    """

    params = StftParams() if params is None else params
    num_frames = params.num_frames(len(w))

    padded_length = (num_frames - 1) * params.hop + params.n_fft
    padded = np.zeros(padded_length)
    padded[:len(w)] = w.samples

    frames = padded[_frame_indices(num_frames, params)] * params.window
    values = np.fft.rfft(frames, n=params.n_fft, axis=-1).T

    return ComplexSpectrogram(values, params)


def istft(s: ComplexSpectrogram, target_length: int) -> Waveform:
    """Weighted overlap-add synthesis trimmed to `target_length`."""

    params = s.params
    if params.num_frames(target_length) != s.num_frames:
        raise LengthMismatch(
            f"Spectrogram has {s.num_frames} frames but a signal of {target_length} samples "
            f"needs {params.num_frames(target_length)}."
        )

    frames = np.fft.irfft(s.values.T, n=params.n_fft, axis=-1) * params.window
    indices = _frame_indices(s.num_frames, params)

    padded_length = (s.num_frames - 1) * params.hop + params.n_fft
    signal = np.zeros(padded_length)
    envelope = np.zeros(padded_length)
    np.add.at(signal, indices, frames)
    np.add.at(envelope, indices, np.broadcast_to(params.window ** 2, frames.shape))

    envelope = envelope[:target_length]
    if np.any(envelope < ENVELOPE_FLOOR):
        raise ZeroWindowOverlap(f"Squared-window sum falls below {ENVELOPE_FLOOR} inside the signal.")

    return Waveform(signal[:target_length] / envelope, SAMPLE_RATE)


def magnitude(s: ComplexSpectrogram) -> MagnitudeSpectrogram:
    return MagnitudeSpectrogram(np.abs(s.values))


def phase(s: ComplexSpectrogram) -> np.ndarray:
    # np.angle(0) == 0, the convention for silent cells.
    return np.angle(s.values)


def read_wav(path: str) -> Waveform:
    """Read 16-bit PCM mono WAV as amplitudes in [-1, 1)."""

    try:
        data, sample_rate = sf.read(path, dtype='int16', always_2d=False)
    except (RuntimeError, OSError) as error:
        raise IoError(f"Cannot read audio {path}: {error}") from error
    if data.ndim != 1:
        raise DimensionMismatch(f"{path}: expected a mono file, got {data.shape[1]} channels.")
    if sample_rate != SAMPLE_RATE:
        raise DimensionMismatch(f"{path}: sample rate is {sample_rate} Hz, expected {SAMPLE_RATE} Hz.")

    return Waveform(data.astype(np.float64) / 32768.0, sample_rate)


def write_wav(w: Waveform, path: str):
    """Write 16-bit PCM mono WAV, clipping to the representable range."""

    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    tmp_path = atomic_target(path)
    try:
        sf.write(tmp_path, pcm, w.sample_rate, format='WAV', subtype='PCM_16')
        os.replace(tmp_path, path)
    except (RuntimeError, OSError) as error:
        raise IoError(f"Cannot write audio {path}: {error}") from error
