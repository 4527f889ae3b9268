"""Speech-shaped noise (SSN) and SNR-exact additive mixing.

SSN is white Gaussian noise shaped by a 1023-tap linear-phase FIR filter
whose magnitude response follows the long-term average spectrum (LTAS)
of the training speech. SNRs are referenced to full-signal RMS, not to
speech-active regions.
"""

from dataclasses import dataclass
import os
import zlib
from typing import Iterable

import numpy as np
from scipy import signal

from source.dsp.stft import (
    NUM_BINS,
    StftParams,
    Waveform,
    magnitude,
    peak_normalize,
    stft,
)
from source.utils.errors import (
    CorpusTooSmall,
    CorruptFile,
    IoError,
    NoiseTooShort,
    ValidationError,
    ZeroEnergySignal,
)
from source.utils.path import atomic_target

# SNRs of every experiment, uniform steps between -20 dB and 5 dB.
SNR_GRID = (-20.0, -15.0, -10.0, -5.0, 0.0, 5.0)

SSN_TAPS = 1023
MIN_LTAS_SECONDS = 10.0
MIN_SSN_SAMPLES = 16000

LTAS_MAGIC = b'LTAS'


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# DspLog: {message}")


@dataclass(frozen=True)
class Ltas:
    """Long-term average magnitude spectrum over the 321 analysis bins."""

    magnitudes: np.ndarray

    def __post_init__(self):
        magnitudes = np.asarray(self.magnitudes, dtype=np.float64)
        if magnitudes.shape != (NUM_BINS,):
            raise ValidationError(f"LTAS must have {NUM_BINS} bins, got shape {magnitudes.shape}.")
        if np.any(magnitudes < 0) or not np.any(magnitudes > 0) or not np.all(np.isfinite(magnitudes)):
            raise ValidationError("LTAS magnitudes must be finite, non-negative and not all zero.")
        object.__setattr__(self, 'magnitudes', magnitudes)


@dataclass(frozen=True)
class MixSpec:
    """How one utterance is mixed.

    Args:
        snr_db : float
            Target full-signal SNR.
        noise_seed : int
            Seed of the noise offset generator.
        noise_offset_policy : str
            'fixed' (validation / test, one offset per utterance) or
            'random' (training, a new offset per epoch).
    """

    snr_db: float
    noise_seed: int = 0
    noise_offset_policy: str = 'fixed'

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValidationError(f"SNR must be finite, got {self.snr_db}.")
        if self.noise_offset_policy not in ('fixed', 'random'):
            raise ValidationError(f"Unknown noise offset policy '{self.noise_offset_policy}'.")


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def estimate_ltas(corpus: Iterable[Waveform], params: StftParams = None) -> Ltas:
    """Average per-frame magnitude spectrum of peak-normalised signals.

    Signals shorter than one analysis frame are skipped.
    """

    params = StftParams() if params is None else params

    total = np.zeros(params.num_bins)
    num_frames = 0
    duration = 0.0
    for w in corpus:
        if len(w) < params.n_fft or not np.any(w.samples):
            continue
        spectrum = magnitude(stft(peak_normalize(w), params)).values
        total += spectrum.sum(axis=1)
        num_frames += spectrum.shape[1]
        duration += w.duration

    if duration < MIN_LTAS_SECONDS:
        raise CorpusTooSmall(f"LTAS needs at least {MIN_LTAS_SECONDS:.0f} s of speech, got {duration:.2f} s.")

    return Ltas(total / num_frames)


def ssn_filter(ltas: Ltas) -> np.ndarray:
    """Linear-phase FIR whose magnitude response is the LTAS (frequency sampling)."""

    freq = np.linspace(0.0, 1.0, len(ltas.magnitudes))
    gain = ltas.magnitudes / np.max(ltas.magnitudes)
    return signal.firwin2(SSN_TAPS, freq, gain)


def generate_ssn(ltas: Ltas, n_samples: int, seed: int) -> Waveform:
    """Seeded, peak-normalised speech-shaped noise of `n_samples` samples."""

    if n_samples < MIN_SSN_SAMPLES:
        raise ValidationError(f"SSN needs at least {MIN_SSN_SAMPLES} samples, got {n_samples}.")

    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n_samples + SSN_TAPS - 1)

    # 'valid' drops the filter transients at both ends.
    shaped = signal.fftconvolve(white, ssn_filter(ltas), mode='valid')

    return peak_normalize(Waveform(shaped))


def utterance_key(*parts: str) -> int:
    """Stable integer key of an utterance, independent of Python hashing."""
    return zlib.crc32('/'.join(parts).encode('utf-8'))


def noise_offset(spec: MixSpec, noise_length: int, clean_length: int, key: int, epoch: int = 0) -> int:
    """Start of the noise segment mixed with one utterance.

    'fixed' offsets depend only on (seed, utterance); 'random' offsets
    also change with the epoch.
    """

    if noise_length < clean_length:
        raise NoiseTooShort(f"Noise has {noise_length} samples, utterance needs {clean_length}.")

    entropy = [spec.noise_seed, key] if spec.noise_offset_policy == 'fixed' else [spec.noise_seed, key, epoch]
    rng = np.random.default_rng(entropy)

    return int(rng.integers(0, noise_length - clean_length + 1))


def mix_at_snr(clean: Waveform, noise: Waveform, snr_db: float, offset: int = 0) -> tuple[Waveform, Waveform]:
    """Add a noise segment to `clean` at exactly `snr_db`.

    Args:
        clean : Waveform
            Speech signal x(n).
        noise : Waveform
            Noise realisation, at least as long as `clean`.
        snr_db : float
            Target SNR over the full signal.
        offset : int (default 0)
            Start of the noise segment.

    Returns:
        (mixture, scaled_noise) with mixture - clean == scaled_noise.
    """

    if offset < 0 or len(noise) - offset < len(clean):
        raise NoiseTooShort(
            f"Noise segment from offset {offset} has {len(noise) - offset} samples, "
            f"utterance needs {len(clean)}."
        )

    segment = noise.samples[offset:offset + len(clean)]
    clean_rms, noise_rms = rms(clean.samples), rms(segment)
    if clean_rms == 0 or noise_rms == 0:
        raise ZeroEnergySignal("Both clean speech and noise segment must have non-zero energy.")

    gain = clean_rms / (noise_rms * 10 ** (snr_db / 20))
    mixture = clean.samples + gain * segment

    return Waveform(mixture, clean.sample_rate), Waveform(mixture - clean.samples, clean.sample_rate)


def achieved_snr(clean: Waveform, scaled_noise: Waveform) -> float:
    return 20 * np.log10(rms(clean.samples) / rms(scaled_noise.samples))


def save_ltas(ltas: Ltas, path: str, force: bool = False):
    """Binary record: magic 'LTAS' then 321 little-endian float64."""

    if os.path.exists(path) and not force:
        raise IoError(f"{path} already exists, use force to overwrite.")

    tmp_path = atomic_target(path)
    try:
        with open(tmp_path, 'wb') as file:
            file.write(LTAS_MAGIC)
            file.write(ltas.magnitudes.astype('<f8').tobytes())
        os.replace(tmp_path, path)
    except OSError as error:
        raise IoError(f"Cannot write LTAS to {path}: {error}") from error

    _log(f"ltas={path} bins={len(ltas.magnitudes)}")


def load_ltas(path: str) -> Ltas:

    try:
        with open(path, 'rb') as file:
            payload = file.read()
    except OSError as error:
        raise IoError(f"Cannot read LTAS from {path}: {error}") from error

    if payload[:4] != LTAS_MAGIC or len(payload) != 4 + 8 * NUM_BINS:
        raise CorruptFile(f"{path} is not a valid LTAS record.")

    return Ltas(np.frombuffer(payload[4:], dtype='<f8').astype(np.float64))


def mix_utterance(clean: Waveform, noise: Waveform, spec: MixSpec, key: int, epoch: int = 0) -> tuple[Waveform, Waveform]:
    """Mix `clean` at `spec.snr_db` and peak-normalise the mixture.

    Returns:
        (mixture, reference) where the reference is `clean` scaled by the
        same gain as the mixture, so that masks computed from the pair
        are unaffected by the normalisation.
    """

    offset = noise_offset(spec, len(noise), len(clean), key, epoch)
    mixture, _ = mix_at_snr(clean, noise, spec.snr_db, offset)
    gain = 1.0 / np.max(np.abs(mixture.samples))

    return Waveform(mixture.samples * gain, clean.sample_rate), Waveform(clean.samples * gain, clean.sample_rate)
