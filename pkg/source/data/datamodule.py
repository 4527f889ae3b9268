"""Lightning data module of 20-frame mask-estimation chunks."""

import functools
from typing import Iterator, Optional

import lightning as L
import numpy as np
import torch
from torch.utils.data import DataLoader as TorchDataLoader

from source.data.corpus import ManifestEntry, load_audio, load_video
from source.data.video import VideoClip
from source.data.splits import SplitPlan
from source.dsp.masking import (
    CHUNK_FRAMES,
    CLIP_MAX,
    check_video_alignment,
    ideal_amplitude_mask,
    needs_audio,
    needs_video,
    video_chunks,
)
from source.dsp.mixture import MixSpec, mix_utterance, utterance_key
from source.dsp.stft import StftParams, Waveform, magnitude, stft
from source.models.features import FeatureStats, compute_feature_stats
from source.utils.errors import EmptySplit, StatsMissing

# (utterance, SNR) pairs whose chunks are shuffled together.
SHUFFLE_BLOCK = 32


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# DataLog: {message}")


class UtteranceStore:
    """Peak-normalised clean audio and mouth videos, read once per entry."""

    @functools.lru_cache(maxsize=None)
    def audio(self, entry: ManifestEntry) -> Waveform:
        return load_audio(entry)

    @functools.lru_cache(maxsize=None)
    def video(self, entry: ManifestEntry) -> VideoClip:
        return load_video(entry)


def mixture_key(entry: ManifestEntry, snr_db: float) -> int:
    return utterance_key(entry.speaker_id, entry.condition, entry.utterance_id, f"{snr_db:g}")


class ChunkDataset(torch.utils.data.Dataset):
    def __init__(
            self,
            entries: list[ManifestEntry],
            snrs: tuple,
            noise: Waveform,
            stats: Optional[FeatureStats],
            modality: str,
            seed: int,
            epoch: int = 0,
            policy: str = 'fixed',
            store: Optional[UtteranceStore] = None,
            params: Optional[StftParams] = None,
            clip_max: float = CLIP_MAX,
        ):
        """Every complete 20-frame chunk of `entries` at every SNR.

        Mixtures are synthesised on access, with noise offsets given by
        (seed, utterance, SNR) and, under the 'random' policy, the epoch.
        Targets are the clipped IAM of the unnormalised magnitudes,
        inputs are normalised with `stats`.

        Args:
            entries : list[ManifestEntry]
                Utterances of one set of a plan.
            snrs : tuple[float]
            noise : Waveform
                Long SSN realisation.
            stats : FeatureStats
                Training-set normalisation statistics.
            modality : str
                'AV', 'AO' or 'VO'; decides which inputs are produced.
            seed / epoch : int
            policy : str (default 'fixed')
                Noise offset policy, 'random' for training.
            clip_max : float (default 10)
                Upper clip of the target masks.
        """

        if stats is None:
            raise StatsMissing("Feature statistics of the training set are required to assemble batches.")

        self.entries = list(entries)
        self.snrs = tuple(snrs)
        self.noise = noise
        self.stats = stats
        self.modality = modality
        self.seed = seed
        self.epoch = epoch
        self.policy = policy
        self.store = UtteranceStore() if store is None else store
        self.params = StftParams() if params is None else params
        self.clip_max = clip_max

        # (entry index, snr index, chunk index) per example; `groups` holds
        # the example range of every (entry, snr) pair.
        self.index, self.groups = [], []
        for i, entry in enumerate(self.entries):
            num_frames = self.params.num_frames(len(self.store.audio(entry)))
            if needs_video(modality):
                check_video_alignment(self.store.video(entry), num_frames)
            for j in range(len(self.snrs)):
                start = len(self.index)
                self.index += [(i, j, c) for c in range(num_frames // CHUNK_FRAMES)]
                if len(self.index) > start:
                    self.groups.append(range(start, len(self.index)))

        self._spectra = functools.lru_cache(maxsize=SHUFFLE_BLOCK)(self._compute_spectra)

    def __len__(self):
        return len(self.index)

    def _compute_spectra(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        entry, snr_db = self.entries[i], self.snrs[j]
        spec = MixSpec(snr_db, self.seed, self.policy)
        mixture, reference = mix_utterance(self.store.audio(entry), self.noise, spec, mixture_key(entry, snr_db), self.epoch)

        R = magnitude(stft(mixture, self.params))
        target = ideal_amplitude_mask(magnitude(stft(reference, self.params)), R, clip_max=self.clip_max)

        return R.values, target.values

    def __getitem__(self, idx: int) -> dict[str, np.ndarray]:
        i, j, c = self.index[idx]
        R, target = self._spectra(i, j)
        frames = slice(c * CHUNK_FRAMES, (c + 1) * CHUNK_FRAMES)

        item = {'target': target[:, frames].astype(np.float32)}
        if needs_audio(self.modality):
            item['audio'] = self.stats.normalize_audio(R[:, frames]).astype(np.float32)
        if needs_video(self.modality):
            pixels = self.store.video(self.entries[i]).pixels
            chunk = video_chunks(pixels, c + 1)[c]
            item['video'] = self.stats.normalize_video(chunk).astype(np.float32)

        return item


class BlockShuffleSampler(torch.utils.data.Sampler):
    """Seeded chunk order touching a bounded set of mixtures at a time.

    (utterance, SNR) pairs are permuted and cut into blocks of `block`
    pairs; the chunks of a block are permuted together. With a spectra
    cache of `block` entries every mixture is synthesised once per pass.
    """

    def __init__(self, groups: list[range], generator: torch.Generator, block: int = SHUFFLE_BLOCK):
        self.groups = groups
        self.generator = generator
        self.block = block

    def __len__(self):
        return sum(len(group) for group in self.groups)

    def __iter__(self):
        order = torch.randperm(len(self.groups), generator=self.generator).tolist()
        for start in range(0, len(order), self.block):
            members = [idx for g in order[start:start + self.block] for idx in self.groups[g]]
            for k in torch.randperm(len(members), generator=self.generator).tolist():
                yield members[k]


def assemble_batches(
        plan: SplitPlan,
        stats: Optional[FeatureStats],
        noise: Waveform,
        modality: str,
        snrs: Optional[tuple] = None,
        batch: int = 64,
        seed: int = 0,
        epoch: int = 0,
        set_name: str = 'train',
        store: Optional[UtteranceStore] = None,
        clip_max: float = CLIP_MAX,
    ) -> TorchDataLoader:
    """Stream of batches {'audio', 'video', 'target'} of one set of `plan`.

    The training set is block-shuffled by a generator seeded with (seed,
    epoch) and mixed with per-epoch random noise offsets; other sets
    keep their order and fixed offsets. A trailing single-example
    training batch is dropped, since batch normalisation needs two.
    """

    training = set_name == 'train'
    entries = plan.entries(set_name)
    if not entries:
        raise EmptySplit(f"The {set_name} set of plan {plan.tag} is empty.")

    dataset = ChunkDataset(
        entries, plan.snrs if snrs is None else snrs, noise, stats, modality,
        seed=seed, epoch=epoch, policy='random' if training else 'fixed', store=store, clip_max=clip_max,
    )
    if len(dataset) == 0:
        raise EmptySplit(f"The {set_name} set of plan {plan.tag} has no complete chunk.")

    generator = torch.Generator().manual_seed(int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0]))

    return TorchDataLoader(
        dataset,
        batch_size=batch,
        sampler=BlockShuffleSampler(dataset.groups, generator) if training else None,
        drop_last=training and len(dataset) % batch == 1,
    )


def iter_training_features(
        plan: SplitPlan,
        noise: Waveform,
        seed: int,
        with_video: bool,
        store: Optional[UtteranceStore] = None,
    ) -> tuple[Iterator[np.ndarray], Optional[Iterator[np.ndarray]]]:
    """Mixture magnitudes of every training (utterance, SNR) pair and the training videos."""

    store = UtteranceStore() if store is None else store
    params = StftParams()

    def magnitudes():
        for entry in plan.train:
            for snr_db in plan.snrs:
                mixture, _ = mix_utterance(store.audio(entry), noise, MixSpec(snr_db, seed), mixture_key(entry, snr_db))
                yield magnitude(stft(mixture, params)).values

    def pixels():
        for entry in plan.train:
            yield store.video(entry).pixels

    return magnitudes(), (pixels() if with_video else None)


def training_feature_stats(plan: SplitPlan, noise: Waveform, seed: int, modality: str, store: Optional[UtteranceStore] = None) -> FeatureStats:
    magnitudes, pixels = iter_training_features(plan, noise, seed, needs_video(modality), store)
    stats = compute_feature_stats(magnitudes, pixels)
    _log(f"stats={plan.tag} video_mean={stats.video_mean:.4f} video_std={stats.video_std:.4f}")
    return stats


class MaskDataModule(L.LightningDataModule):
    def __init__(
            self,
            plan: SplitPlan,
            noise: Waveform,
            modality: str,
            batch_size: int,
            seed: int,
            stats: Optional[FeatureStats] = None,
            clip_max: float = CLIP_MAX,
            **kwargs
        ):
        """Pytorch Lightning Data Module for mask estimation.

        Training batches are rebuilt every epoch (the trainer reloads
        dataloaders every epoch), so each epoch draws new noise offsets
        and a new chunk order. Validation data is fixed.

        Args:
            plan : SplitPlan
            noise : Waveform
                Long SSN realisation of the experiment.
            modality : str
            batch_size : int
            seed : int
            stats : FeatureStats (default None)
                Computed from the training set when not given.
            clip_max : float (default 10)
                Upper clip of the target masks.
        """

        super().__init__()
        self.plan = plan
        self.noise = noise
        self.modality = modality
        self.batch_size = batch_size
        self.seed = seed
        self.clip_max = clip_max
        self.store = UtteranceStore()
        self.stats = stats if stats is not None else training_feature_stats(plan, noise, seed, modality, self.store)

    def _current_epoch(self) -> int:
        trainer = getattr(self, 'trainer', None)
        return trainer.current_epoch if trainer is not None else 0

    def train_dataloader(self):
        """Training data loader"""
        return assemble_batches(
            self.plan, self.stats, self.noise, self.modality,
            batch=self.batch_size, seed=self.seed, epoch=self._current_epoch(), set_name='train', store=self.store,
            clip_max=self.clip_max,
        )

    def val_dataloader(self):
        """Validation data loader"""
        return assemble_batches(
            self.plan, self.stats, self.noise, self.modality,
            batch=self.batch_size, seed=self.seed, set_name='validation', store=self.store, clip_max=self.clip_max,
        )
