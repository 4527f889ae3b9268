"""Audio-visual enhancement network and its AO / VO ablations.

The audio encoder maps a 321x20 magnitude chunk through six strided
convolutions to 128x6x5 (3840 values); the video encoder maps five
stacked 128x128 mouth frames through six conv + pool blocks to 512x2x2
(2048 values). The fusion subnetwork (dense 1312 -> 1312 -> 3840) feeds
a decoder of six transposed convolutions that mirror the audio encoder
and receive U-Net style skip connections from audio encoder layers 5, 3
and 1. The output layer uses ReLU, so masks are never negative.

AO and VO models drop the video or the audio encoder. Skips come from
the audio encoder, so the VO decoder runs without any.

Shapes below are (channels, height, width), height being frequency for
the audio path.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn

from source.dsp.masking import CLIP_MAX
from source.models import layers
from source.utils.errors import BadChunkShape, MissingModality, ValidationError

NUM_BINS = 321
CHUNK_FRAMES = 20
CHUNK_VIDEO_FRAMES = 5
FRAME_SIZE = 128

# (filters, kernel, stride) per audio encoder layer.
AUDIO_ENCODER = (
    (64, (5, 5), (2, 2)),
    (64, (4, 4), (2, 1)),
    (128, (4, 4), (2, 2)),
    (128, (2, 2), (2, 1)),
    (128, (2, 2), (2, 1)),
    (128, (2, 2), (2, 1)),
)

# (filters, kernel) per video encoder layer, stride 1 and 2x2 pooling.
VIDEO_ENCODER = (
    (128, (5, 5)),
    (128, (5, 5)),
    (256, (3, 3)),
    (256, (3, 3)),
    (512, (3, 3)),
    (512, (3, 3)),
)

FUSION_WIDTHS = (1312, 1312, 3840)

# Audio encoder layers whose output joins the decoder, 1-based.
SKIP_LAYERS = (5, 3, 1)


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# ModelLog: {message}")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the network.

    Args:
        name : str
            'audio<i>', 'video<i>', 'fusion<i>' or 'decoder<i>'.
        kind : str
            'conv', 'conv_pool', 'dense' or 'conv_transpose'.
        in_shape / out_shape : tuple
            (C, H, W) for convolutions, (D,) for dense layers. For
            decoder layers `in_shape` includes skip channels.
        filters : int
            Output channels (or neurons).
        kernel / stride : tuple[int, int]
        activation : str
            'leaky' or 'relu'.
        batchnorm / dropout : bool
        skip_from : str or None
            Encoder layer concatenated (channel-wise) to this layer's input.
    """

    name: str
    kind: str
    in_shape: tuple
    out_shape: tuple
    filters: int
    kernel: tuple = (1, 1)
    stride: tuple = (1, 1)
    activation: str = 'leaky'
    batchnorm: bool = True
    dropout: bool = False
    skip_from: Optional[str] = None


@dataclass(frozen=True)
class ModelSpec:
    modality: str
    layers: tuple
    clip_max: float = CLIP_MAX
    chunk_frames: int = CHUNK_FRAMES
    chunk_video_frames: int = CHUNK_VIDEO_FRAMES
    leaky_alpha: float = layers.LEAKY_ALPHA
    dropout: float = layers.DROPOUT_P

    def group(self, prefix: str) -> list[LayerSpec]:
        return [layer for layer in self.layers if layer.name.startswith(prefix)]

    def layer(self, name: str) -> LayerSpec:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise KeyError(name)

    @property
    def skips(self) -> list[tuple[str, str]]:
        return [(layer.skip_from, layer.name) for layer in self.layers if layer.skip_from is not None]

    @property
    def fusion_width(self) -> int:
        return self.group('fusion')[0].in_shape[0]

    @property
    def uses_audio(self) -> bool:
        return self.modality in ('AV', 'AO')

    @property
    def uses_video(self) -> bool:
        return self.modality in ('AV', 'VO')


def _audio_encoder() -> list[LayerSpec]:
    specs = []
    shape = (1, NUM_BINS, CHUNK_FRAMES)
    for i, (filters, kernel, stride) in enumerate(AUDIO_ENCODER, start=1):
        out_shape = (filters, _ceil_div(shape[1], stride[0]), _ceil_div(shape[2], stride[1]))
        specs.append(LayerSpec(f"audio{i}", 'conv', shape, out_shape, filters, kernel, stride))
        shape = out_shape
    return specs


def _video_encoder() -> list[LayerSpec]:
    specs = []
    shape = (CHUNK_VIDEO_FRAMES, FRAME_SIZE, FRAME_SIZE)
    for i, (filters, kernel) in enumerate(VIDEO_ENCODER, start=1):
        out_shape = (filters, shape[1] // 2, shape[2] // 2)
        specs.append(LayerSpec(f"video{i}", 'conv_pool', shape, out_shape, filters, kernel, (1, 1), dropout=True))
        shape = out_shape
    return specs


def _decoder(audio: list[LayerSpec], with_skips: bool) -> list[LayerSpec]:
    """Transposed convolutions mirroring `audio` in reverse order."""

    specs = []
    channels = audio[-1].out_shape[0]
    skip_after = {f"audio{i}" for i in SKIP_LAYERS} if with_skips else set()
    producers = {layer.name: layer for layer in audio}
    skip_from = None

    for j, mirrored in enumerate(reversed(audio), start=1):
        in_channels = channels + (producers[skip_from].out_shape[0] if skip_from else 0)
        in_shape = (in_channels, *mirrored.out_shape[1:])
        out_shape = mirrored.in_shape
        last = j == len(audio)
        specs.append(LayerSpec(
            f"decoder{j}", 'conv_transpose', in_shape, out_shape, out_shape[0],
            mirrored.kernel, mirrored.stride,
            activation='relu' if last else 'leaky',
            batchnorm=not last,
            skip_from=skip_from,
        ))
        channels = out_shape[0]

        # The encoder layer producing this decoder layer's output shape joins the next input.
        producer = f"audio{len(audio) - j}"
        skip_from = producer if producer in skip_after else None

    return specs


def build_model(
        modality: str,
        leaky_alpha: float = layers.LEAKY_ALPHA,
        dropout: float = layers.DROPOUT_P,
        clip_max: float = CLIP_MAX,
    ) -> ModelSpec:
    """Layer table of the AV, AO or VO network, shape chain validated.

    `clip_max` is the upper clip of the training targets the network is fitted to.
    """

    if modality not in ('AV', 'AO', 'VO'):
        raise ValidationError(f"Unknown modality '{modality}', expected AV, AO or VO.")
    if not clip_max > 0:
        raise ValidationError(f"clip_max must be positive, got {clip_max}.")

    audio = _audio_encoder()
    video = _video_encoder()

    encoders, width = [], 0
    if modality in ('AV', 'AO'):
        encoders += audio
        width += int(np.prod(audio[-1].out_shape))
    if modality in ('AV', 'VO'):
        encoders += video
        width += int(np.prod(video[-1].out_shape))

    fusion = []
    for i, neurons in enumerate(FUSION_WIDTHS, start=1):
        fusion.append(LayerSpec(f"fusion{i}", 'dense', (width,), (neurons,), neurons, batchnorm=False))
        width = neurons

    decoder = _decoder(audio, with_skips=modality != 'VO')
    spec = ModelSpec(modality, tuple(encoders + fusion + decoder), clip_max=float(clip_max), leaky_alpha=leaky_alpha, dropout=dropout)
    validate_shape_chain(spec)

    return spec


def validate_shape_chain(spec: ModelSpec):
    """Each layer's input equals its predecessor's output (plus skip channels)."""

    def check(ok: bool, message: str):
        if not ok:
            raise ValidationError(f"Inconsistent {spec.modality} model: {message}")

    for prefix in ('audio', 'video', 'fusion'):
        group = spec.group(prefix)
        for prev, layer in zip(group, group[1:]):
            check(prev.out_shape == layer.in_shape, f"{prev.name} -> {layer.name}")

    decoder = spec.group('decoder')
    check(int(np.prod(decoder[0].in_shape)) == spec.group('fusion')[-1].out_shape[0], 'fusion -> decoder1')
    for prev, layer in zip(decoder, decoder[1:]):
        extra = spec.layer(layer.skip_from).out_shape[0] if layer.skip_from else 0
        check((prev.out_shape[0] + extra, *prev.out_shape[1:]) == layer.in_shape, f"{prev.name} -> {layer.name}")
        if layer.skip_from:
            check(spec.layer(layer.skip_from).out_shape[1:] == prev.out_shape[1:], f"skip {layer.skip_from}")
    check(decoder[-1].out_shape == (1, NUM_BINS, CHUNK_FRAMES), 'decoder output')


def count_parameters(spec: ModelSpec) -> int:
    """Weights, biases and batch-norm affine parameters of `spec`."""

    total = 0
    for layer in spec.layers:
        if layer.kind == 'dense':
            total += layer.in_shape[0] * layer.filters + layer.filters
        else:
            kh, kw = layer.kernel
            total += layer.in_shape[0] * layer.filters * kh * kw + layer.filters
        if layer.batchnorm:
            total += 2 * layer.filters
    return total


class EnhancementNet(nn.Module):
    def __init__(self, spec: ModelSpec, seed: int = 0):
        """Network instantiated from `spec`.

        Weights are Xavier-uniform from one generator seeded with
        `seed`, biases zero; dropout layers get their own seeded
        generators.
        """

        super().__init__()

        self.spec = spec
        generator = torch.Generator().manual_seed(seed)

        self.convs = nn.ModuleDict()
        self.norms = nn.ModuleDict()
        self.drops = nn.ModuleDict()
        self.denses = nn.ModuleDict()

        for i, layer in enumerate(spec.layers):
            if layer.kind in ('conv', 'conv_pool'):
                self.convs[layer.name] = layers.Conv2d(layer.in_shape[0], layer.filters, layer.kernel, layer.stride, generator)
            elif layer.kind == 'conv_transpose':
                self.convs[layer.name] = layers.ConvTranspose2d(layer.in_shape[0], layer.filters, layer.kernel, layer.stride, generator)
            else:
                self.denses[layer.name] = layers.Dense(layer.in_shape[0], layer.filters, generator)
            if layer.batchnorm:
                self.norms[layer.name] = layers.BatchNorm(layer.filters)
            if layer.dropout:
                self.drops[layer.name] = layers.Dropout(spec.dropout, seed=seed + 1000 + i)

    def _block(self, layer: LayerSpec, x: torch.Tensor, output_shape: Optional[tuple] = None) -> torch.Tensor:
        # conv -> activation -> batch norm -> (pool) -> (dropout)
        if layer.kind == 'conv_transpose':
            x = self.convs[layer.name](x, output_shape)
        else:
            x = self.convs[layer.name](x)
        x = layers.relu(x) if layer.activation == 'relu' else layers.leaky_relu(x, self.spec.leaky_alpha)
        if layer.batchnorm:
            x = self.norms[layer.name](x)
        if layer.kind == 'conv_pool':
            x, _ = layers.maxpool2x2(x)
        if layer.dropout:
            x = self.drops[layer.name](x)
        return x

    def forward(self, audio: Optional[torch.Tensor], video: Optional[torch.Tensor], zero_skips: bool = False) -> torch.Tensor:
        """Masks of shape (N, 321, 20).

        Args:
            audio : torch.Tensor or None
                Normalised magnitudes (N, 1, 321, 20).
            video : torch.Tensor or None
                Normalised pixels (N, 5, 128, 128).
            zero_skips : bool (default False)
                Replace skip tensors by zeros (wiring check).
        """

        features = []
        skips = {}

        if self.spec.uses_audio:
            x = audio
            for layer in self.spec.group('audio'):
                x = self._block(layer, x)
                skips[layer.name] = x
            features.append(x.flatten(start_dim=1))

        if self.spec.uses_video:
            x = video
            for layer in self.spec.group('video'):
                x = self._block(layer, x)
            features.append(x.flatten(start_dim=1))

        x = torch.cat(features, dim=1)
        for layer in self.spec.group('fusion'):
            x = layers.leaky_relu(self.denses[layer.name](x), self.spec.leaky_alpha)

        decoder = self.spec.group('decoder')
        x = x.view(-1, *decoder[0].in_shape)
        for layer in decoder:
            if layer.skip_from is not None:
                skip = skips[layer.skip_from]
                x = torch.cat([x, torch.zeros_like(skip) if zero_skips else skip], dim=1)
            x = self._block(layer, x, output_shape=layer.out_shape[1:])

        return x.squeeze(1)


def forward(
        network: EnhancementNet,
        audio_chunk: Optional[torch.Tensor],
        video_chunk: Optional[torch.Tensor],
        mode: str = 'inference',
    ) -> torch.Tensor:
    """Mask(s) of shape (N, 321, 20) for normalised chunks.

    Chunks may be single (321x20 / 5x128x128) or batched. The input a
    modality does not use is ignored.
    """

    spec = network.spec
    if mode not in ('train', 'inference'):
        raise ValidationError(f"Unknown mode '{mode}'.")

    def batched(chunk: Optional[torch.Tensor], shape: tuple, what: str) -> torch.Tensor:
        if chunk is None:
            raise MissingModality(f"A {spec.modality} model needs the {what} chunk.")
        chunk = torch.as_tensor(chunk, dtype=torch.float32)
        if tuple(chunk.shape[-len(shape):]) != shape or chunk.dim() not in (len(shape), len(shape) + 1):
            raise BadChunkShape(f"{what.capitalize()} chunk has shape {tuple(chunk.shape)}, expected (N, {', '.join(map(str, shape))}).")
        return chunk if chunk.dim() == len(shape) + 1 else chunk.unsqueeze(0)

    audio = batched(audio_chunk, (NUM_BINS, CHUNK_FRAMES), 'audio').unsqueeze(1) if spec.uses_audio else None
    video = batched(video_chunk, (CHUNK_VIDEO_FRAMES, FRAME_SIZE, FRAME_SIZE), 'video') if spec.uses_video else None
    if audio is not None and video is not None and audio.shape[0] != video.shape[0]:
        raise BadChunkShape(f"Batch sizes differ: {audio.shape[0]} audio vs {video.shape[0]} video chunks.")

    network.train(mode == 'train')
    if mode == 'train':
        return network(audio, video)
    with torch.no_grad():
        return network(audio, video)

