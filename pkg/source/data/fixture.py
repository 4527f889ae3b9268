"""Synthetic audio-visual corpus for desk-scale runs and tests.

Every utterance is a sum of harmonics of a per-speaker fundamental under
a syllable-rate amplitude envelope, recorded in two conditions:

    - NL: harmonic amplitudes falling as 1/k, peak 0.25;
    - L : the same sentence with a flatter spectral tilt and exactly
          `lombard_gain_db` more energy.

The paired mouth video (25 fps, 128x128, 8-bit) shows a dark ellipse on
a lighter face whose vertical aperture follows the envelope. Durations
are whole video frames (640 samples), so an utterance of T STFT frames
pairs with exactly ceil(T / 4) video frames.
"""

import os

import numpy as np

from source.data.corpus import Manifest, ManifestEntry, write_manifest
from source.data.video import FRAME_SIZE, VIDEO_FPS, VideoClip, write_video_frames
from source.dsp.mixture import rms
from source.dsp.stft import SAMPLE_RATE, Waveform, write_wav
from source.utils.errors import IoError, ValidationError

SAMPLES_PER_VIDEO_FRAME = SAMPLE_RATE // VIDEO_FPS
MIN_FRAMES, MAX_FRAMES = 2 * VIDEO_FPS, 3 * VIDEO_FPS

NL_PEAK = 0.25
LOMBARD_GAIN_DB = 6.0
LOMBARD_TILT = 0.6
MAX_HARMONIC_HZ = 7000.0
NOISE_FLOOR = 1e-4

FACE_LEVEL = 170
MOUTH_LEVEL = 30


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# DataLog: {message}")


def _speaker_traits(seed: int, speaker: int) -> dict:
    rng = np.random.default_rng([seed, speaker])
    return {
        'f0': rng.uniform(95.0, 230.0),
        'mouth_width': rng.uniform(22.0, 34.0),
        'syllable_rate': rng.uniform(3.0, 5.0),
    }


def _envelope(num_samples: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Syllable-like envelope in [0, 1], fading in and out."""

    t = np.arange(num_samples) / SAMPLE_RATE
    syllables = np.sin(np.pi * (rate * t + rng.uniform(0, 1))) ** 2
    stress = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * t + rng.uniform(0, 2 * np.pi))
    fade = np.minimum(1.0, np.minimum(t, t[-1] - t) / 0.1)

    return syllables * stress * np.clip(fade, 0.0, 1.0)


def _harmonics(num_samples: int, f0: float, tilt: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(num_samples) / SAMPLE_RATE
    contour = f0 * (1.0 + 0.06 * np.sin(2 * np.pi * rng.uniform(0.4, 1.2) * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(contour) / SAMPLE_RATE

    total = np.zeros(num_samples)
    for k in range(1, int(MAX_HARMONIC_HZ // (1.07 * f0)) + 1):
        total += k ** (tilt - 1.0) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    return total


def _mouth_frames(envelope: np.ndarray, mouth_width: float, opening: float) -> np.ndarray:
    """One frame per 640 envelope samples, aperture ~ frame RMS of the envelope."""

    blocks = envelope.reshape(-1, SAMPLES_PER_VIDEO_FRAME)
    aperture = np.sqrt(np.mean(blocks ** 2, axis=1))
    aperture = aperture / max(aperture.max(), 1e-12)

    y, x = np.mgrid[0:FRAME_SIZE, 0:FRAME_SIZE]
    centre = (FRAME_SIZE - 1) / 2
    frames = np.full((len(aperture), FRAME_SIZE, FRAME_SIZE), FACE_LEVEL, dtype=np.uint8)
    for i, a in enumerate(aperture):
        height = 1.5 + opening * a
        inside = ((x - centre) / mouth_width) ** 2 + ((y - centre) / height) ** 2 <= 1.0
        frames[i][inside] = MOUTH_LEVEL

    return frames


def synthesize_utterance(seed: int, speaker: int, utterance: int, lombard_gain_db: float = LOMBARD_GAIN_DB) -> dict:
    """NL / L waveforms and videos of one fixture utterance."""

    traits = _speaker_traits(seed, speaker)
    rng = np.random.default_rng([seed, speaker, utterance])

    num_frames = int(rng.integers(MIN_FRAMES, MAX_FRAMES + 1))
    num_samples = num_frames * SAMPLES_PER_VIDEO_FRAME
    envelope = _envelope(num_samples, traits['syllable_rate'], rng)

    # Both conditions share the sentence: same envelope and harmonic phases.
    harmonic_state = rng.bit_generator.state
    neutral = envelope * _harmonics(num_samples, traits['f0'], 0.0, rng)
    rng.bit_generator.state = harmonic_state
    lombard = envelope * _harmonics(num_samples, traits['f0'], LOMBARD_TILT, rng)

    floor = NOISE_FLOOR * rng.standard_normal((2, num_samples))
    neutral = NL_PEAK * neutral / np.max(np.abs(neutral)) + floor[0]
    lombard = lombard + floor[1]
    lombard *= rms(neutral) * 10 ** (lombard_gain_db / 20) / rms(lombard)

    peak = np.max(np.abs(lombard))
    if peak > 0.99:
        neutral, lombard = neutral * 0.99 / peak, lombard * 0.99 / peak

    return {
        'NL': (Waveform(neutral), VideoClip(_mouth_frames(envelope, traits['mouth_width'], 18.0))),
        'L': (Waveform(lombard), VideoClip(_mouth_frames(envelope, traits['mouth_width'], 22.0))),
    }


def generate_fixture_corpus(
        n_speakers: int,
        n_utterances: int,
        seed: int,
        out_dir: str,
        lombard_gain_db: float = LOMBARD_GAIN_DB,
    ) -> Manifest:
    """Write the fixture corpus and its manifest under `out_dir`.

    Layout: `audio/<speaker>_<condition>_<utterance>.wav`, the matching
    `video/*.vfr` and `manifest.tsv`.
    """

    if n_speakers < 2:
        raise ValidationError(f"Fixture needs at least 2 speakers, got {n_speakers}.")
    if n_utterances < 16:
        raise ValidationError(f"Fixture needs at least 16 utterances per speaker, got {n_utterances}.")

    audio_dir, video_dir = os.path.join(out_dir, 'audio'), os.path.join(out_dir, 'video')
    try:
        os.makedirs(audio_dir, exist_ok=True)
        os.makedirs(video_dir, exist_ok=True)
    except OSError as error:
        raise IoError(f"Cannot create fixture directories under {out_dir}: {error}") from error

    entries = []
    for speaker in range(n_speakers):
        speaker_id = f"s{speaker + 1:02d}"
        for utterance in range(n_utterances):
            utterance_id = f"u{utterance + 1:03d}"
            recordings = synthesize_utterance(seed, speaker, utterance, lombard_gain_db)
            for condition in ('L', 'NL'):
                waveform, clip = recordings[condition]
                stem = f"{speaker_id}_{condition}_{utterance_id}"
                audio_path = os.path.join(audio_dir, f"{stem}.wav")
                video_path = os.path.join(video_dir, f"{stem}.vfr")
                write_wav(waveform, audio_path)
                write_video_frames(clip, video_path)
                entries.append(ManifestEntry(speaker_id, condition, utterance_id, os.path.abspath(audio_path), os.path.abspath(video_path)))

    manifest_path = os.path.join(out_dir, 'manifest.tsv')
    write_manifest(entries, manifest_path)
    _log(f"fixture={manifest_path} speakers={n_speakers} utterances={n_utterances} entries={len(entries)}")

    return Manifest(entries)
