"""Extended short-time objective intelligibility (ESTOI).

Both signals are brought to 10 kHz, frames where the clean signal is
more than 40 dB below its loudest frame are removed from both, and the
remaining signals are decomposed into 15 one-third octave bands
(256-sample Hann frames, hop 128, 512-point DFT). Every 30-frame segment
of band envelopes is normalised to zero mean and unit norm, first per
band and then per frame; the score is the mean correlation of the
normalised clean and processed segments.

Scores lie in [-1, 1] and are invariant to the gain of `processed`.
"""

import math

import numpy as np
from scipy import signal

from source.dsp.stft import Waveform
from source.utils.errors import LengthMismatch, TooShortAfterVad

FS = 10000
N_FRAME = 256
NFFT = 512
NUM_BANDS = 15
MIN_FREQ = 150
SEGMENT = 30
DYN_RANGE = 40

# Anti-aliasing filter of the 16 -> 10 kHz polyphase resampler: 64 taps
# per phase at the 5x upsampled rate, cutoff at the new Nyquist.
RESAMPLE_TAPS_PER_PHASE = 64

EPS = np.finfo(np.float64).eps


def third_octave_bands(fs: int = FS, nfft: int = NFFT, num_bands: int = NUM_BANDS, min_freq: float = MIN_FREQ) -> tuple[np.ndarray, np.ndarray]:
    """(num_bands, nfft // 2 + 1) band matrix and centre frequencies.

    Band edges sit at the DFT bins closest to the geometric means of
    neighbouring centre frequencies 150 * 2^(j/3).
    """

    f = np.linspace(0, fs, nfft + 1)[:nfft // 2 + 1]
    k = np.arange(num_bands, dtype=np.float64)
    centres = min_freq * 2 ** (k / 3)
    lower = min_freq * 2 ** ((2 * k - 1) / 6)
    upper = min_freq * 2 ** ((2 * k + 1) / 6)

    bands = np.zeros((num_bands, len(f)))
    for i in range(num_bands):
        lo = np.argmin(np.square(f - lower[i]))
        hi = np.argmin(np.square(f - upper[i]))
        bands[i, lo:hi] = 1

    return bands, centres


_BANDS, _ = third_octave_bands()


def resample_to_10k(x: np.ndarray, fs: int) -> np.ndarray:
    if fs == FS:
        return x

    gcd = math.gcd(FS, fs)
    up, down = FS // gcd, fs // gcd
    taps = 2 * (RESAMPLE_TAPS_PER_PHASE * up // 2) + 1
    h = signal.firwin(taps, FS / 2, window=('kaiser', 5.0), fs=fs * up)

    return signal.resample_poly(x, up, down, window=h)


def _frames(x: np.ndarray, framelen: int, hop: int) -> np.ndarray:
    window = np.hanning(framelen + 2)[1:-1]
    return np.array([window * x[i:i + framelen] for i in range(0, len(x) - framelen, hop)]).reshape(-1, framelen)


def _overlap_add(frames: np.ndarray, hop: int) -> np.ndarray:
    num_frames, framelen = frames.shape
    out = np.zeros((num_frames - 1) * hop + framelen if num_frames else 0)
    for i, frame in enumerate(frames):
        out[i * hop:i * hop + framelen] += frame
    return out


def remove_silent_frames(x: np.ndarray, y: np.ndarray, dyn_range: float = DYN_RANGE, framelen: int = N_FRAME, hop: int = N_FRAME // 2) -> tuple[np.ndarray, np.ndarray]:
    """Drop frames of both signals where `x` is more than `dyn_range` dB below its loudest frame."""

    x_frames, y_frames = _frames(x, framelen, hop), _frames(y, framelen, hop)
    if len(x_frames) == 0:
        return np.zeros(0), np.zeros(0)

    energies = 20 * np.log10(np.linalg.norm(x_frames, axis=1) + EPS)
    keep = (np.max(energies) - dyn_range - energies) < 0

    return _overlap_add(x_frames[keep], hop), _overlap_add(y_frames[keep], hop)


def band_envelopes(x: np.ndarray) -> np.ndarray:
    """(15, frames) one-third octave band amplitudes."""

    frames = _frames(x, N_FRAME, N_FRAME // 2)
    spectrum = np.fft.rfft(frames, n=NFFT, axis=1).T
    return np.sqrt(_BANDS @ np.square(np.abs(spectrum)))


def _normalize(segments: np.ndarray, axis: int) -> np.ndarray:
    centred = segments - np.mean(segments, axis=axis, keepdims=True)
    return centred / (np.linalg.norm(centred, axis=axis, keepdims=True) + EPS)


def estoi(clean: Waveform, processed: Waveform) -> float:
    """ESTOI of `processed` against the reference `clean`.

    Raises:
        LengthMismatch if the signals differ in length or rate.
        TooShortAfterVad if fewer than 30 frames survive silence removal.
    """

    if len(clean) != len(processed) or clean.sample_rate != processed.sample_rate:
        raise LengthMismatch(
            f"Clean ({len(clean)} @ {clean.sample_rate} Hz) and processed "
            f"({len(processed)} @ {processed.sample_rate} Hz) signals differ."
        )

    x = resample_to_10k(clean.samples, clean.sample_rate)
    y = resample_to_10k(processed.samples, processed.sample_rate)
    x, y = remove_silent_frames(x, y)

    X, Y = band_envelopes(x), band_envelopes(y)
    if X.shape[1] < SEGMENT:
        raise TooShortAfterVad(f"{X.shape[1]} frames remain after silence removal, at least {SEGMENT} required.")

    # (segments, bands, frames) views of every 30-frame window.
    X_seg = np.lib.stride_tricks.sliding_window_view(X, SEGMENT, axis=1).transpose(1, 0, 2)
    Y_seg = np.lib.stride_tricks.sliding_window_view(Y, SEGMENT, axis=1).transpose(1, 0, 2)

    X_n = _normalize(_normalize(X_seg, axis=2), axis=1)
    Y_n = _normalize(_normalize(Y_seg, axis=2), axis=1)

    return float(np.sum(X_n * Y_n) / SEGMENT / len(X_n))
