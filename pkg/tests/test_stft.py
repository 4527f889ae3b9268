import numpy as np
import pytest
import soundfile as sf

from source.dsp.stft import (
    ComplexSpectrogram,
    StftParams,
    Waveform,
    hamming_window,
    istft,
    magnitude,
    peak_normalize,
    phase,
    read_wav,
    stft,
    write_wav,
)
from source.utils.errors import AllZeroSignal, DimensionMismatch, IoError, SignalTooShort


def test_peak_normalize_examples():
    np.testing.assert_array_equal(peak_normalize(Waveform([1.0, -2.0])).samples, [0.5, -1.0])
    np.testing.assert_array_equal(peak_normalize(Waveform([-1.0, 0.5])).samples, [-1.0, 0.5])
    with pytest.raises(AllZeroSignal):
        peak_normalize(Waveform([0.0, 0.0, 0.0]))


def test_peak_normalize_is_idempotent():
    x = Waveform(np.random.default_rng(0).standard_normal(1000))
    once = peak_normalize(x)
    assert np.max(np.abs(once.samples)) == 1.0
    np.testing.assert_array_equal(peak_normalize(once).samples, once.samples)


def test_hamming_window_values():
    w = hamming_window(640)
    assert w[0] == pytest.approx(0.08)
    assert w[320] == pytest.approx(1.0)
    np.testing.assert_allclose(w[1:], w[1:][::-1])


@pytest.mark.parametrize('length, frames', [(640, 1), (641, 2), (800, 2), (16000, 97)])
def test_stft_frame_count(length, frames):
    s = stft(Waveform(np.random.default_rng(length).standard_normal(length)))
    assert s.shape == (321, frames)


def test_stft_of_constant_sums_the_window():
    s = stft(Waveform(np.ones(640)))
    assert s.values[0, 0].real == pytest.approx(hamming_window(640).sum())
    assert s.values[0, 0].imag == 0.0


def test_stft_rejects_short_signals():
    with pytest.raises(SignalTooShort):
        stft(Waveform(np.ones(639)))


@pytest.mark.parametrize('length', [640, 641, 1000, 16000, 23457, 48000])
def test_istft_reconstructs_signal(length):
    x = Waveform(np.random.default_rng(length).uniform(-1, 1, length))
    y = istft(stft(x), length)
    assert len(y) == length
    assert np.max(np.abs(y.samples - x.samples)) < 1e-6


def test_istft_of_zeros_is_silent():
    s = ComplexSpectrogram(np.zeros((321, 5)))
    np.testing.assert_array_equal(istft(s, 1280).samples, np.zeros(1280))


def test_stft_is_linear():
    rng = np.random.default_rng(1)
    x, y = rng.standard_normal(4000), rng.standard_normal(4000)
    lhs = stft(Waveform(2.5 * x - 0.5 * y)).values
    rhs = 2.5 * stft(Waveform(x)).values - 0.5 * stft(Waveform(y)).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-9)


def test_stft_energy_matches_windowed_frames():
    params = StftParams()
    x = np.random.default_rng(2).standard_normal(16000)
    s = stft(Waveform(x), params)

    # One-sided spectrum: double every bin except DC and Nyquist.
    weights = np.full(321, 2.0)
    weights[[0, -1]] = 1.0
    spectral = np.sum(weights[:, None] * np.abs(s.values) ** 2) / params.n_fft

    frames = np.array([x[i * 160:i * 160 + 640] * params.window for i in range(s.num_frames)])
    assert spectral == pytest.approx(np.sum(frames ** 2), rel=0.01)


def test_magnitude_and_phase():
    s = ComplexSpectrogram(np.full((321, 1), 3 + 4j))
    assert magnitude(s).values[0, 0] == 5.0

    zero = ComplexSpectrogram(np.zeros((321, 1)))
    assert magnitude(zero).values[0, 0] == 0.0
    assert phase(zero)[0, 0] == 0.0

    rng = np.random.default_rng(3)
    s = ComplexSpectrogram(rng.standard_normal((321, 7)) + 1j * rng.standard_normal((321, 7)))
    np.testing.assert_allclose(magnitude(s).values * np.exp(1j * phase(s)), s.values, atol=1e-9)


def test_wav_files_hold_16_bit_samples(tmp_path):
    x = Waveform(np.random.default_rng(4).uniform(-0.9, 0.9, 3200))
    path = str(tmp_path / 'x.wav')
    write_wav(x, path)

    y = read_wav(path)
    assert y.sample_rate == 16000
    assert np.max(np.abs(y.samples - x.samples)) <= 1 / 32768


def test_read_wav_errors(tmp_path):
    with pytest.raises(IoError, match='missing.wav'):
        read_wav(str(tmp_path / 'missing.wav'))

    path = str(tmp_path / 'eight_khz.wav')
    sf.write(path, np.zeros(800, dtype=np.int16), 8000, subtype='PCM_16')
    with pytest.raises(DimensionMismatch):
        read_wav(path)
