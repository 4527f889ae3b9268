"""Mouth-region video features in VFR1 format.

Upstream face detection and alignment are outside this toolkit; what
arrives here are 25 fps, 128x128 grayscale mouth crops stored as

    magic 'VFR1' | uint32 num_frames | uint32 height | uint32 width |
    num_frames * height * width bytes (row-major, 8-bit grayscale)

with all integers little-endian.
"""

from dataclasses import dataclass
import os
import struct

import numpy as np

from source.utils.errors import CorruptFile, DimensionMismatch, IoError
from source.utils.path import atomic_target

VFR_MAGIC = b'VFR1'
FRAME_SIZE = 128
VIDEO_FPS = 25

# Audio STFT frames (hop 160 at 16 kHz -> 100 frames/s) per video frame.
AUDIO_FRAMES_PER_VIDEO_FRAME = 4

_header = struct.Struct('<4sIII')


@dataclass(frozen=True)
class VideoClip:
    """Grayscale frames of shape (num_frames, 128, 128) as uint8."""

    frames: np.ndarray

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.dtype != np.uint8:
            raise DimensionMismatch(f"Video frames must be uint8, got {frames.dtype}.")
        if frames.ndim != 3 or frames.shape[1:] != (FRAME_SIZE, FRAME_SIZE):
            raise DimensionMismatch(f"Video frames must be N x {FRAME_SIZE} x {FRAME_SIZE}, got {frames.shape}.")
        object.__setattr__(self, 'frames', frames)

    def __len__(self):
        return len(self.frames)

    @property
    def pixels(self) -> np.ndarray:
        """Frames as reals in [0, 1]."""
        return self.frames.astype(np.float32) / 255.0


def read_video_frames(path: str) -> VideoClip:

    try:
        with open(path, 'rb') as file:
            payload = file.read()
    except OSError as error:
        raise IoError(f"Cannot read video {path}: {error}") from error

    if len(payload) < _header.size:
        raise CorruptFile(f"{path} is too short to be a VFR1 file.")

    magic, num_frames, height, width = _header.unpack_from(payload)
    if magic != VFR_MAGIC:
        raise CorruptFile(f"{path} has magic {magic!r}, expected {VFR_MAGIC!r}.")
    if (height, width) != (FRAME_SIZE, FRAME_SIZE):
        raise DimensionMismatch(f"{path} holds {height}x{width} frames, expected {FRAME_SIZE}x{FRAME_SIZE}.")

    body = payload[_header.size:]
    if len(body) != num_frames * height * width:
        raise CorruptFile(f"{path} declares {num_frames} frames but carries {len(body)} pixel bytes.")

    frames = np.frombuffer(body, dtype=np.uint8).reshape(num_frames, height, width).copy()

    return VideoClip(frames)


def write_video_frames(clip: VideoClip, path: str):

    num_frames, height, width = clip.frames.shape
    tmp_path = atomic_target(path)
    try:
        with open(tmp_path, 'wb') as file:
            file.write(_header.pack(VFR_MAGIC, num_frames, height, width))
            file.write(np.ascontiguousarray(clip.frames).tobytes())
        os.replace(tmp_path, path)
    except OSError as error:
        raise IoError(f"Cannot write video {path}: {error}") from error


def expected_video_frames(num_audio_frames: int) -> int:
    """Video frames pairing with `num_audio_frames` STFT frames (4:1)."""
    return -(-num_audio_frames // AUDIO_FRAMES_PER_VIDEO_FRAME)
