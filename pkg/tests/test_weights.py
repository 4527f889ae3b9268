import numpy as np
import pytest
import torch

from source.models.features import FeatureStats, compute_feature_stats
from source.models.network import EnhancementNet, build_model
from source.models.weights import TrainedModel, load_weights, save_weights
from source.utils.errors import CorruptFile, EmptySplit, IoError, ShapeMismatchOnLoad


@pytest.fixture(scope='module')
def trained():
    network = EnhancementNet(build_model('AO'), seed=5)
    stats = FeatureStats(np.linspace(0.1, 1.0, 321), np.linspace(1.0, 2.0, 321))
    return TrainedModel(network, stats, {'model_id': 'AO-L', 'epoch': 3, 'valid_loss': 0.25})


def test_weights_are_restored(trained, tmp_path):
    path = str(tmp_path / 'AO-L.avse')
    save_weights(trained, path)
    loaded = load_weights(path)

    assert loaded.modality == 'AO'
    assert loaded.metadata == {'model_id': 'AO-L', 'epoch': 3, 'valid_loss': 0.25}
    np.testing.assert_array_equal(loaded.stats.audio_mean, trained.stats.audio_mean)
    for name, tensor in trained.network.state_dict().items():
        assert torch.equal(tensor, loaded.network.state_dict()[name])

    audio = np.random.default_rng(0).random((2, 321, 20))
    trained.network.eval()
    np.testing.assert_array_equal(loaded.estimate_masks(audio, None), trained.estimate_masks(audio, None))


def test_weight_files_are_deterministic(trained, tmp_path):
    a, b = str(tmp_path / 'a.avse'), str(tmp_path / 'b.avse')
    save_weights(trained, a)
    save_weights(trained, b)
    with open(a, 'rb') as fa, open(b, 'rb') as fb:
        assert fa.read() == fb.read()


def test_corrupt_weight_files(trained, tmp_path):
    path = str(tmp_path / 'model.avse')
    save_weights(trained, path)
    with open(path, 'rb') as file:
        payload = file.read()

    flipped = bytearray(payload)
    flipped[len(payload) // 2] ^= 0xFF
    (tmp_path / 'flipped.avse').write_bytes(bytes(flipped))
    with pytest.raises(CorruptFile):
        load_weights(str(tmp_path / 'flipped.avse'))

    (tmp_path / 'truncated.avse').write_bytes(payload[:len(payload) - 100])
    with pytest.raises(CorruptFile):
        load_weights(str(tmp_path / 'truncated.avse'))

    (tmp_path / 'empty.avse').write_bytes(b'')
    with pytest.raises(CorruptFile):
        load_weights(str(tmp_path / 'empty.avse'))


def test_weights_must_fit_the_model(trained, tmp_path):
    path = str(tmp_path / 'model.avse')
    save_weights(trained, path)
    with pytest.raises(ShapeMismatchOnLoad):
        load_weights(path, spec=build_model('AV'))


def test_weight_file_io_errors(trained, tmp_path):
    path = str(tmp_path / 'model.avse')
    save_weights(trained, path)
    with pytest.raises(IoError):
        save_weights(trained, path, force=False)
    with pytest.raises(IoError):
        load_weights(str(tmp_path / 'missing.avse'))


def test_feature_stats():
    rng = np.random.default_rng(1)
    magnitudes = [rng.random((321, n)) * 3 for n in (7, 40, 13)]
    pixels = [rng.random((k, 128, 128)) for k in (2, 5)]

    stats = compute_feature_stats(magnitudes, pixels)
    joined = np.concatenate(magnitudes, axis=1)
    np.testing.assert_allclose(stats.audio_mean, joined.mean(axis=1))
    np.testing.assert_allclose(stats.audio_std, joined.std(axis=1))

    flat = np.concatenate([p.ravel() for p in pixels])
    assert stats.video_mean == pytest.approx(flat.mean())
    assert stats.video_std == pytest.approx(flat.std())

    normalised = stats.normalize_audio(joined)
    np.testing.assert_allclose(normalised.mean(axis=1), 0.0, atol=1e-9)


def test_feature_stats_floor_and_defaults():
    stats = compute_feature_stats([np.ones((321, 4))])
    assert np.all(stats.audio_std == 1e-6)
    assert (stats.video_mean, stats.video_std) == (0.0, 1.0)

    with pytest.raises(EmptySplit):
        compute_feature_stats([])


def test_target_clip_is_stored_with_the_model(tmp_path):
    model = TrainedModel(EnhancementNet(build_model('VO', clip_max=4.0), seed=1), FeatureStats(np.zeros(321), np.ones(321)))
    path = str(tmp_path / 'VO-L.avse')
    save_weights(model, path)

    loaded = load_weights(path)
    assert loaded.spec.clip_max == 4.0
    assert 'clip_max' not in loaded.metadata
