"""Ideal amplitude masks and mask-based enhancement.

The training target is the ideal amplitude mask (IAM) A / R, with A the
clean and R the mixture STFT magnitude, clipped to [0, clip_max].
Enhancement multiplies the network mask with the complex mixture STFT,
which keeps the noisy phase, and resynthesises with the inverse STFT.
"""

from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from source.data.video import (
    AUDIO_FRAMES_PER_VIDEO_FRAME,
    VideoClip,
    expected_video_frames,
)
from source.dsp.stft import (
    ComplexSpectrogram,
    MagnitudeSpectrogram,
    StftParams,
    Waveform,
    istft,
    magnitude,
    stft,
)
from source.utils.errors import (
    MissingModality,
    ShapeMismatch,
    ValidationError,
    VideoAudioLengthMismatch,
)

CLIP_MAX = 10.0
CHUNK_FRAMES = 20
CHUNK_VIDEO_FRAMES = CHUNK_FRAMES // AUDIO_FRAMES_PER_VIDEO_FRAME

# Mixture magnitudes below this count as silent cells.
SILENT_FLOOR = 1e-12


@dataclass(frozen=True)
class Mask:
    """Non-negative mask of shape (bins, frames).

    Training targets carry `clip_max`; network outputs use `None`
    (non-negative, unbounded above).
    """

    values: np.ndarray
    clip_max: Optional[float] = CLIP_MAX

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatch(f"Mask must be 2-D, got shape {values.shape}.")
        if np.any(values < 0):
            raise ValidationError("Mask values must be non-negative.")
        if self.clip_max is not None and np.any(values > self.clip_max):
            raise ValidationError(f"Mask values exceed clip_max={self.clip_max}.")
        object.__setattr__(self, 'values', values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


class MaskEstimator(Protocol):
    """Anything that turns raw chunks into masks, e.g. a trained model.

    `audio` holds mixture magnitudes (N, 321, 20), `video` holds pixels
    in [0, 1] with shape (N, 5, 128, 128); either is None when the
    modality does not use it. Returns masks of shape (N, 321, 20).
    """

    modality: str

    def estimate_masks(self, audio: Optional[np.ndarray], video: Optional[np.ndarray]) -> np.ndarray:
        ...


def ideal_amplitude_mask(
        clean: MagnitudeSpectrogram,
        mixture: MagnitudeSpectrogram,
        clip_max: Optional[float] = CLIP_MAX,
    ) -> Mask:
    """Elementwise A / R clipped to [0, clip_max].

    Silent mixture cells (R < 1e-12) get `clip_max` where the clean
    magnitude is positive and 0 otherwise; with `clip_max=None` the mask
    is left unclipped and silent cells are set to 0.
    """

    A, R = clean.values, mixture.values
    if A.shape != R.shape:
        raise ShapeMismatch(f"Clean {A.shape} and mixture {R.shape} magnitudes differ in shape.")

    silent = R < SILENT_FLOOR
    with np.errstate(divide='ignore', invalid='ignore'):
        ratio = np.where(silent, 0.0, A / np.where(silent, 1.0, R))

    if clip_max is None:
        return Mask(ratio, clip_max=None)

    ratio = np.where(silent & (A > 0), clip_max, ratio)
    return Mask(np.clip(ratio, 0.0, clip_max), clip_max=clip_max)


def apply_mask(mask: Mask, Y: ComplexSpectrogram) -> ComplexSpectrogram:
    """Point-wise real scaling of the complex mixture STFT."""

    if mask.shape != Y.shape:
        raise ShapeMismatch(f"Mask {mask.shape} and spectrogram {Y.shape} differ in shape.")

    return ComplexSpectrogram(mask.values * Y.values, Y.params)


def needs_audio(modality: str) -> bool:
    return modality in ('AV', 'AO')


def needs_video(modality: str) -> bool:
    return modality in ('AV', 'VO')


def audio_chunks(R: np.ndarray, num_chunks: int) -> np.ndarray:
    """(bins, T) magnitudes -> (num_chunks, bins, 20), zero-padding the tail."""

    bins, num_frames = R.shape
    padded = np.zeros((bins, num_chunks * CHUNK_FRAMES), dtype=R.dtype)
    padded[:, :num_frames] = R[:, :num_chunks * CHUNK_FRAMES]

    return padded.reshape(bins, num_chunks, CHUNK_FRAMES).transpose(1, 0, 2)


def video_chunks(pixels: np.ndarray, num_chunks: int) -> np.ndarray:
    """(frames, 128, 128) -> (num_chunks, 5, 128, 128), repeating the last frame if short."""

    needed = num_chunks * CHUNK_VIDEO_FRAMES
    if len(pixels) < needed:
        pad = np.repeat(pixels[-1:], needed - len(pixels), axis=0)
        pixels = np.concatenate([pixels, pad], axis=0)

    return pixels[:needed].reshape(num_chunks, CHUNK_VIDEO_FRAMES, *pixels.shape[1:])


def check_video_alignment(video: VideoClip, num_audio_frames: int):
    """Video frames must equal ceil(T / 4) within one frame."""

    expected = expected_video_frames(num_audio_frames)
    if abs(len(video) - expected) > 1:
        raise VideoAudioLengthMismatch(
            f"Video has {len(video)} frames, {expected} (+/- 1) expected for {num_audio_frames} audio frames."
        )


def enhance_utterance(
        y: Waveform,
        video: Optional[VideoClip],
        model: MaskEstimator,
        params: StftParams = None,
    ) -> Waveform:
    """Enhance one noisy utterance with non-overlapping 20-frame chunks.

    Args:
        y : Waveform
            Noisy mixture (already peak-normalised).
        video : VideoClip or None
            Mouth frames, required by AV and VO models, ignored by AO.
        model : MaskEstimator
            Source of the masks.
        params : StftParams (default front end)

    Returns:
        Waveform
            Enhanced signal with the same length as `y`.
    """

    Y = stft(y, params)
    num_frames = Y.num_frames
    num_chunks = -(-num_frames // CHUNK_FRAMES)

    audio = None
    if needs_audio(model.modality):
        audio = audio_chunks(magnitude(Y).values, num_chunks)

    pixels = None
    if needs_video(model.modality):
        if video is None:
            raise MissingModality(f"A {model.modality} model needs the video of the utterance.")
        check_video_alignment(video, num_frames)
        pixels = video_chunks(video.pixels, num_chunks)

    masks = np.asarray(model.estimate_masks(audio, pixels), dtype=np.float64)
    if masks.shape != (num_chunks, Y.shape[0], CHUNK_FRAMES):
        raise ShapeMismatch(f"Model returned masks of shape {masks.shape}.")

    # Concatenate along time and drop the columns of the padded tail.
    full = masks.transpose(1, 0, 2).reshape(Y.shape[0], num_chunks * CHUNK_FRAMES)[:, :num_frames]
    enhanced = apply_mask(Mask(full, clip_max=None), Y)

    return istft(enhanced, len(y))


def oracle_enhance(clean: Waveform, mixture: Waveform, params: StftParams = None) -> Waveform:
    """Upper bound: unclipped IAM applied with the noisy phase."""

    X, Y = stft(clean, params), stft(mixture, params)
    mask = ideal_amplitude_mask(magnitude(X), magnitude(Y), clip_max=None)

    return istft(apply_mask(mask, Y), len(mixture))
