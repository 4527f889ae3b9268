"""Trained models and their weight files.

A weight file is

    magic 'AVSE' | uint16 version | 2-byte modality tag | uint32 count |
    count tensor records | uint64 checksum

with every tensor record

    uint16 name length | name (utf-8) | uint8 dtype code | uint8 rank |
    rank * uint32 dims | row-major little-endian data

and the checksum a 64-bit BLAKE2b digest of everything before it. Besides
the network's state dict the records hold the feature statistics
('stats.*') and a JSON metadata blob ('meta.json', uint8).
"""

from dataclasses import dataclass, field
import hashlib
import json
import os
import struct
from typing import Optional

import numpy as np
import torch

from source.models.features import FeatureStats
from source.models.network import EnhancementNet, ModelSpec, build_model, forward
from source.utils.errors import CorruptFile, IoError, ShapeMismatchOnLoad, ValidationError
from source.utils.path import atomic_target

MAGIC = b'AVSE'
VERSION = 1

_header = struct.Struct('<4sH2sI')
_checksum = struct.Struct('<Q')

_dtypes = {code: np.dtype(name) for code, name in enumerate(('<f4', '<f8', '<i8', '|u1'))}
_codes = {dtype.str: code for code, dtype in _dtypes.items()}


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# ModelLog: {message}")


@dataclass
class TrainedModel:
    """A network with the statistics it was trained with.

    Implements the mask estimator interface used by enhancement:
    raw magnitudes and pixels in, masks out.
    """

    network: EnhancementNet
    stats: FeatureStats
    metadata: dict = field(default_factory=dict)

    @property
    def spec(self) -> ModelSpec:
        return self.network.spec

    @property
    def modality(self) -> str:
        return self.spec.modality

    def estimate_masks(self, audio: Optional[np.ndarray], video: Optional[np.ndarray], batch_size: int = 64) -> np.ndarray:
        if audio is not None:
            audio = self.stats.normalize_audio(audio).astype(np.float32)
        if video is not None:
            video = self.stats.normalize_video(video).astype(np.float32)

        num_chunks = len(audio) if audio is not None else len(video)
        device = next(self.network.parameters()).device
        masks = []
        for start in range(0, num_chunks, batch_size):
            part = slice(start, start + batch_size)
            a = torch.from_numpy(audio[part]).to(device) if audio is not None else None
            v = torch.from_numpy(video[part]).to(device) if video is not None else None
            masks.append(forward(self.network, a, v, mode='inference').cpu().numpy())

        return np.concatenate(masks, axis=0).astype(np.float64)


def _records(model: TrainedModel) -> dict[str, np.ndarray]:
    records = {name: tensor.detach().cpu().numpy() for name, tensor in model.network.state_dict().items()}
    records['stats.audio_mean'] = model.stats.audio_mean
    records['stats.audio_std'] = model.stats.audio_std
    records['stats.video'] = np.array([model.stats.video_mean, model.stats.video_std])
    metadata = {
        'modality': model.modality,
        'leaky_alpha': model.spec.leaky_alpha,
        'dropout': model.spec.dropout,
        'clip_max': model.spec.clip_max,
        **model.metadata,
    }
    records['meta.json'] = np.frombuffer(json.dumps(metadata, sort_keys=True).encode('utf-8'), dtype=np.uint8)
    return records


def save_weights(model: TrainedModel, path: str, force: bool = True):
    """Write `model` atomically to `path`."""

    if os.path.exists(path) and not force:
        raise IoError(f"{path} already exists, use force to overwrite.")

    records = _records(model)
    chunks = [_header.pack(MAGIC, VERSION, model.modality.encode('ascii'), len(records))]
    for name, array in records.items():
        code = _codes.get(array.dtype.str)
        if code is None:
            raise ValidationError(f"Tensor '{name}' has unsupported dtype {array.dtype}.")
        dtype = _dtypes[code]
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<H', len(encoded)) + encoded)
        chunks.append(struct.pack('<BB', code, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=dtype).tobytes())

    payload = b''.join(chunks)
    digest = hashlib.blake2b(payload, digest_size=8).digest()

    tmp_path = atomic_target(path)
    try:
        with open(tmp_path, 'wb') as file:
            file.write(payload)
            file.write(digest)
        os.replace(tmp_path, path)
    except OSError as error:
        raise IoError(f"Cannot write weights to {path}: {error}") from error

    _log(f"weights={path} modality={model.modality} tensors={len(records)}")


def _parse(payload: bytes, path: str) -> tuple[str, dict[str, np.ndarray]]:
    if len(payload) < _header.size + _checksum.size:
        raise CorruptFile(f"{path} is too short to be a weight file.")

    body, digest = payload[:-_checksum.size], payload[-_checksum.size:]
    if hashlib.blake2b(body, digest_size=8).digest() != digest:
        raise CorruptFile(f"{path} fails its checksum.")

    magic, version, tag, count = _header.unpack_from(body)
    if magic != MAGIC or version != VERSION:
        raise CorruptFile(f"{path} has magic {magic!r} version {version}, expected {MAGIC!r} version {VERSION}.")

    records = {}
    offset = _header.size
    try:
        for _ in range(count):
            (length,) = struct.unpack_from('<H', body, offset)
            offset += 2
            name = body[offset:offset + length].decode('utf-8')
            offset += length
            code, rank = struct.unpack_from('<BB', body, offset)
            offset += 2
            shape = struct.unpack_from(f"<{rank}I", body, offset)
            offset += 4 * rank
            dtype = _dtypes[code]
            size = int(np.prod(shape)) * dtype.itemsize
            if offset + size > len(body):
                raise CorruptFile(f"{path} is truncated in tensor '{name}'.")
            records[name] = np.frombuffer(body, dtype=dtype, count=int(np.prod(shape)), offset=offset).reshape(shape).copy()
            offset += size
    except (struct.error, KeyError, UnicodeDecodeError) as error:
        raise CorruptFile(f"{path} has a malformed tensor record: {error}") from error

    if offset != len(body):
        raise CorruptFile(f"{path} has {len(body) - offset} trailing bytes.")

    return tag.decode('ascii', errors='replace'), records


def load_weights(path: str, spec: Optional[ModelSpec] = None, device: str = 'cpu') -> TrainedModel:
    """Read a weight file, optionally into an expected `spec`.

    Raises:
        CorruptFile if the file is malformed or fails its checksum.
        ShapeMismatchOnLoad if the tensors do not fit the model.
    """

    try:
        with open(path, 'rb') as file:
            payload = file.read()
    except OSError as error:
        raise IoError(f"Cannot read weights from {path}: {error}") from error

    tag, records = _parse(payload, path)

    try:
        metadata = json.loads(records.pop('meta.json').tobytes().decode('utf-8'))
        stats = FeatureStats(records.pop('stats.audio_mean'), records.pop('stats.audio_std'), *records.pop('stats.video'))
    except (KeyError, ValueError) as error:
        raise CorruptFile(f"{path} lacks metadata or feature statistics: {error}") from error

    if spec is None:
        if tag not in ('AV', 'AO', 'VO'):
            raise CorruptFile(f"{path} has unknown modality tag '{tag}'.")
        spec = build_model(tag, metadata.get('leaky_alpha', 0.2), metadata.get('dropout', 0.25), metadata.get('clip_max', 10.0))

    network = EnhancementNet(spec)
    expected = {name: tuple(tensor.shape) for name, tensor in network.state_dict().items()}
    found = {name: tuple(array.shape) for name, array in records.items()}
    if expected != found:
        missing = sorted(set(expected) - set(found))
        mismatched = sorted(name for name in set(expected) & set(found) if expected[name] != found[name])
        raise ShapeMismatchOnLoad(
            f"{path} ({tag}) does not fit a {spec.modality} model: "
            f"{len(missing)} missing, {len(set(found) - set(expected))} unexpected, {len(mismatched)} mis-shaped tensors."
        )

    network.load_state_dict({name: torch.from_numpy(array) for name, array in records.items()})
    network.to(device).eval()

    for key in ('modality', 'leaky_alpha', 'dropout', 'clip_max'):
        metadata.pop(key, None)

    return TrainedModel(network, stats, metadata)
