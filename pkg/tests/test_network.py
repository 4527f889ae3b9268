import pytest
import torch

from source.models import layers
from source.models.network import EnhancementNet, build_model, count_parameters, forward
from source.utils.errors import BadChunkShape, MissingModality, ValidationError


@pytest.mark.parametrize('modality, parameters', [('AV', 20336897), ('AO', 12795265), ('VO', 14703873)])
def test_parameter_counts(modality, parameters):
    spec = build_model(modality)
    assert count_parameters(spec) == parameters

    network = EnhancementNet(spec)
    assert sum(p.numel() for p in network.parameters()) == parameters


def test_audio_encoder_shapes():
    spec = build_model('AV')
    assert [layer.out_shape for layer in spec.group('audio')] == [
        (64, 161, 10), (64, 81, 10), (128, 41, 5), (128, 21, 5), (128, 11, 5), (128, 6, 5),
    ]
    assert [layer.out_shape for layer in spec.group('video')] == [
        (128, 64, 64), (128, 32, 32), (256, 16, 16), (256, 8, 8), (512, 4, 4), (512, 2, 2),
    ]


@pytest.mark.parametrize('modality, width', [('AV', 5888), ('AO', 3840), ('VO', 2048)])
def test_fusion_width(modality, width):
    spec = build_model(modality)
    assert spec.fusion_width == width
    assert spec.group('fusion')[-1].out_shape == (3840,)
    assert spec.group('decoder')[-1].out_shape == (1, 321, 20)


def test_skip_connections():
    expected = [('audio5', 'decoder2'), ('audio3', 'decoder4'), ('audio1', 'decoder6')]
    assert build_model('AV').skips == expected
    assert build_model('AO').skips == expected
    assert build_model('VO').skips == []

    # Decoder inputs carry the skip channels.
    assert build_model('AO').layer('decoder6').in_shape == (128, 161, 10)


def test_output_layer_uses_relu_without_batchnorm():
    last = build_model('AV').group('decoder')[-1]
    assert last.activation == 'relu'
    assert not last.batchnorm


def test_unknown_modality():
    with pytest.raises(ValidationError):
        build_model('AVX')


def test_audio_only_forward():
    network = EnhancementNet(build_model('AO'), seed=0)
    audio = torch.rand(3, 321, 20)

    masks = forward(network, audio, None)
    assert masks.shape == (3, 321, 20)
    assert torch.all(masks >= 0)

    # A single chunk gets a batch axis.
    assert forward(network, audio[0], None).shape == (1, 321, 20)


def test_audio_visual_forward():
    network = EnhancementNet(build_model('AV'), seed=0)
    masks = forward(network, torch.rand(2, 321, 20), torch.rand(2, 5, 128, 128))
    assert masks.shape == (2, 321, 20)
    assert torch.all(masks >= 0)


def test_forward_input_checks():
    network = EnhancementNet(build_model('AO'), seed=0)
    with pytest.raises(MissingModality):
        forward(network, None, torch.rand(1, 5, 128, 128))
    with pytest.raises(BadChunkShape):
        forward(network, torch.rand(2, 320, 20), None)
    with pytest.raises(ValidationError):
        forward(network, torch.rand(2, 321, 20), None, mode='eval')

    av = EnhancementNet(build_model('AV'), seed=0)
    with pytest.raises(MissingModality):
        forward(av, torch.rand(1, 321, 20), None)
    with pytest.raises(BadChunkShape):
        forward(av, torch.rand(2, 321, 20), torch.rand(3, 5, 128, 128))


def test_single_modality_models_ignore_the_other_input():
    generator = torch.Generator().manual_seed(5)
    audio = torch.rand(2, 321, 20, generator=generator)
    video = torch.rand(2, 5, 128, 128, generator=generator)

    vo = EnhancementNet(build_model('VO'), seed=0)
    reference = forward(vo, audio, video)
    torch.testing.assert_close(forward(vo, torch.rand(2, 321, 20, generator=generator), video), reference, rtol=0, atol=0)
    torch.testing.assert_close(forward(vo, None, video), reference, rtol=0, atol=0)

    ao = EnhancementNet(build_model('AO'), seed=0)
    reference = forward(ao, audio, video)
    torch.testing.assert_close(forward(ao, audio, torch.rand(2, 5, 128, 128, generator=generator)), reference, rtol=0, atol=0)
    torch.testing.assert_close(forward(ao, audio, None), reference, rtol=0, atol=0)

    # Both inputs reach an AV model.
    av = EnhancementNet(build_model('AV'), seed=0)
    reference = forward(av, audio, video)
    assert not torch.equal(forward(av, audio, torch.rand(2, 5, 128, 128, generator=generator)), reference)


def test_skips_reach_the_output():
    network = EnhancementNet(build_model('AO'), seed=0).eval()
    audio = torch.rand(2, 1, 321, 20)

    with torch.no_grad():
        wired = network(audio, None)
        unwired = network(audio, None, zero_skips=True)
    assert not torch.equal(wired, unwired)


def test_initialisation_is_seeded():
    spec = build_model('AO')
    a, b, c = EnhancementNet(spec, seed=1), EnhancementNet(spec, seed=1), EnhancementNet(spec, seed=2)

    for name, tensor in a.state_dict().items():
        assert torch.equal(tensor, b.state_dict()[name])
    assert not torch.equal(a.convs['audio1'].weight, c.convs['audio1'].weight)
    assert not torch.any(a.convs['audio1'].bias)


def test_train_mode_updates_batchnorm_statistics():
    network = EnhancementNet(build_model('AO'), seed=0)
    before = network.norms['audio1'].running_mean.clone()

    forward(network, torch.rand(4, 321, 20), None, mode='train')
    assert network.training
    assert not torch.equal(before, network.norms['audio1'].running_mean)


@pytest.mark.slow
def test_one_adam_step_lowers_the_mask_loss():
    # Eval mode keeps the loss deterministic across the two evaluations.
    decreased = 0
    for seed in range(20):
        generator = torch.Generator().manual_seed(seed)
        audio = torch.randn(2, 1, 321, 20, generator=generator)
        target = 2 * torch.rand(2, 321, 20, generator=generator)

        network = EnhancementNet(build_model('AO'), seed=seed).eval()
        optimizer = layers.Adam(network.parameters(), lr=1e-4)

        before, _ = layers.mask_mse_loss(network(audio, None), target)
        optimizer.zero_grad()
        before.backward()
        optimizer.step()
        with torch.no_grad():
            after, _ = layers.mask_mse_loss(network(audio, None), target)
        decreased += int(after.item() < before.item())

    assert decreased >= 19
