"""Input normalisation statistics, computed on training data only."""

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from source.utils.errors import EmptySplit, ShapeMismatch

STD_FLOOR = 1e-6


@dataclass(frozen=True)
class FeatureStats:
    """Per-bin audio mean / std (321,) and scalar video mean / std."""

    audio_mean: np.ndarray
    audio_std: np.ndarray
    video_mean: float = 0.0
    video_std: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, 'audio_mean', np.asarray(self.audio_mean, dtype=np.float64))
        object.__setattr__(self, 'audio_std', np.maximum(np.asarray(self.audio_std, dtype=np.float64), STD_FLOOR))
        object.__setattr__(self, 'video_std', max(float(self.video_std), STD_FLOOR))
        object.__setattr__(self, 'video_mean', float(self.video_mean))
        if self.audio_mean.shape != self.audio_std.shape or self.audio_mean.ndim != 1:
            raise ShapeMismatch(f"Audio mean {self.audio_mean.shape} and std {self.audio_std.shape} must be matching vectors.")

    def normalize_audio(self, magnitudes: np.ndarray) -> np.ndarray:
        """Magnitudes (..., bins, frames) to zero mean, unit variance per bin."""
        return (magnitudes - self.audio_mean[:, None]) / self.audio_std[:, None]

    def normalize_video(self, pixels: np.ndarray) -> np.ndarray:
        return (pixels - self.video_mean) / self.video_std


class _RunningMoments:
    """Chan's parallel update of count, mean and squared deviations."""

    def __init__(self, shape):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def update(self, values: np.ndarray, axis):
        n = values.size // int(np.prod(self.mean.shape))
        if n == 0:
            return
        mean = values.mean(axis=axis)
        m2 = np.square(values - np.expand_dims(mean, axis) if axis is not None else values - mean).sum(axis=axis)

        total = self.count + n
        delta = mean - self.mean
        self.mean = self.mean + delta * n / total
        self.m2 = self.m2 + m2 + np.square(delta) * self.count * n / total
        self.count = total

    @property
    def std(self):
        return np.sqrt(self.m2 / self.count)


def compute_feature_stats(
        magnitudes: Iterable[np.ndarray],
        pixels: Optional[Iterable[np.ndarray]] = None,
    ) -> FeatureStats:
    """Normalisation statistics over all training frames.

    Args:
        magnitudes : iterable of np.ndarray
            Mixture magnitudes of shape (321, T) per training example.
        pixels : iterable of np.ndarray, optional
            Video pixels in [0, 1] of shape (frames, 128, 128).

    Returns:
        FeatureStats with std floored at 1e-6. Without video the video
        statistics are the identity (0, 1).
    """

    audio = None
    for R in magnitudes:
        R = np.asarray(R, dtype=np.float64)
        if audio is None:
            audio = _RunningMoments(R.shape[0])
        elif R.shape[0] != audio.mean.shape[0]:
            raise ShapeMismatch(f"Magnitudes with {R.shape[0]} bins, expected {audio.mean.shape[0]}.")
        audio.update(R, axis=1)

    if audio is None or audio.count == 0:
        raise EmptySplit("No training frames to compute feature statistics on.")

    video_mean, video_std = 0.0, 1.0
    if pixels is not None:
        video = _RunningMoments(())
        for P in pixels:
            video.update(np.asarray(P, dtype=np.float64).ravel(), axis=None)
        if video.count == 0:
            raise EmptySplit("No training video frames to compute feature statistics on.")
        video_mean, video_std = float(video.mean), float(video.std)

    return FeatureStats(audio.mean, audio.std, video_mean, video_std)
