import numpy as np
import pytest

from source.data.corpus import load_audio, load_video
from source.data.video import VideoClip
from source.dsp.masking import (
    CLIP_MAX,
    Mask,
    apply_mask,
    audio_chunks,
    enhance_utterance,
    ideal_amplitude_mask,
    oracle_enhance,
    video_chunks,
)
from source.dsp.mixture import MixSpec, mix_utterance, utterance_key
from source.dsp.stft import ComplexSpectrogram, MagnitudeSpectrogram, Waveform, magnitude, peak_normalize, stft
from source.metrics.estoi import estoi
from source.utils.errors import MissingModality, ShapeMismatch, ValidationError, VideoAudioLengthMismatch

from conftest import ConstantMaskModel


def _video(num_frames: int) -> VideoClip:
    return VideoClip(np.full((num_frames, 128, 128), 100, dtype=np.uint8))


def test_iam_is_clipped():
    clean = MagnitudeSpectrogram(np.array([[0.0, 1.0, 30.0, 2.0]]))
    mixture = MagnitudeSpectrogram(np.array([[1.0, 2.0, 1.0, 0.0]]))

    mask = ideal_amplitude_mask(clean, mixture)
    np.testing.assert_allclose(mask.values, [[0.0, 0.5, CLIP_MAX, CLIP_MAX]])

    unclipped = ideal_amplitude_mask(clean, mixture, clip_max=None)
    np.testing.assert_allclose(unclipped.values, [[0.0, 0.5, 30.0, 0.0]])


def test_iam_of_silent_cells():
    zeros = MagnitudeSpectrogram(np.zeros((321, 3)))
    assert not np.any(ideal_amplitude_mask(zeros, zeros).values)

    with pytest.raises(ShapeMismatch):
        ideal_amplitude_mask(zeros, MagnitudeSpectrogram(np.zeros((321, 4))))


def test_mask_validation():
    with pytest.raises(ValidationError):
        Mask(np.array([[-0.1]]))
    with pytest.raises(ValidationError):
        Mask(np.array([[11.0]]), clip_max=10.0)
    with pytest.raises(ShapeMismatch):
        apply_mask(Mask(np.ones((321, 2))), ComplexSpectrogram(np.ones((321, 3))))


def test_oracle_mask_restores_clean_magnitude():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(8000)
    y = x + rng.standard_normal(8000)

    X, Y = stft(Waveform(x)), stft(Waveform(y))
    mask = ideal_amplitude_mask(magnitude(X), magnitude(Y), clip_max=None)
    np.testing.assert_allclose(magnitude(apply_mask(mask, Y)).values, magnitude(X).values, atol=1e-9)


def test_unit_mask_is_identity():
    y = peak_normalize(Waveform(np.random.default_rng(1).standard_normal(23457)))
    model = ConstantMaskModel('AO', 1.0)

    enhanced = enhance_utterance(y, None, model)
    assert len(enhanced) == len(y)
    assert np.max(np.abs(enhanced.samples - y.samples)) < 1e-6
    assert model.calls == 1


def test_enhancement_needs_video_for_visual_models():
    y = Waveform(np.random.default_rng(2).standard_normal(16000))
    with pytest.raises(MissingModality):
        enhance_utterance(y, None, ConstantMaskModel('AV'))
    with pytest.raises(MissingModality):
        enhance_utterance(y, None, ConstantMaskModel('VO'))


def test_enhancement_checks_video_alignment():
    # 16000 samples -> 97 STFT frames -> 25 video frames.
    y = Waveform(np.random.default_rng(3).standard_normal(16000))

    for num_frames in (24, 25, 26):
        enhanced = enhance_utterance(y, _video(num_frames), ConstantMaskModel('VO'))
        assert len(enhanced) == 16000

    with pytest.raises(VideoAudioLengthMismatch):
        enhance_utterance(y, _video(23), ConstantMaskModel('AV'))
    with pytest.raises(VideoAudioLengthMismatch):
        enhance_utterance(y, _video(27), ConstantMaskModel('AV'))


def test_audio_model_ignores_video():
    y = Waveform(np.random.default_rng(4).standard_normal(16000))
    enhanced = enhance_utterance(y, _video(3), ConstantMaskModel('AO'))
    assert len(enhanced) == 16000


def test_audio_chunks_pad_the_tail():
    R = np.arange(321 * 45, dtype=np.float64).reshape(321, 45)
    chunks = audio_chunks(R, 3)

    assert chunks.shape == (3, 321, 20)
    np.testing.assert_array_equal(chunks[1], R[:, 20:40])
    np.testing.assert_array_equal(chunks[2, :, :5], R[:, 40:])
    assert not np.any(chunks[2, :, 5:])


def test_video_chunks_repeat_the_last_frame():
    pixels = np.stack([np.full((128, 128), i, dtype=np.float32) for i in range(8)])
    chunks = video_chunks(pixels, 2)

    assert chunks.shape == (2, 5, 128, 128)
    assert [chunk[0, 0] for chunk in chunks[1]] == [5, 6, 7, 7, 7]


def test_oracle_beats_the_mixture(seen_plan, noise):
    better = 0
    for entry in seen_plan.test:
        clean = load_audio(entry)
        mixture, reference = mix_utterance(clean, noise, MixSpec(0.0, seen_plan.seed), utterance_key(entry.name))
        if estoi(reference, oracle_enhance(reference, mixture)) > estoi(reference, mixture):
            better += 1

    assert better >= 0.9 * len(seen_plan.test)


def test_fixture_video_fits_its_audio(seen_plan):
    entry = seen_plan.test[0]
    audio, video = load_audio(entry), load_video(entry)

    enhanced = enhance_utterance(peak_normalize(audio), video, ConstantMaskModel('AV'))
    assert len(enhanced) == len(audio)
