"""Seen-speaker splits and unseen-speaker folds.

Seen case: per speaker, a seeded shuffle of the Lombard utterance ids
gives 10 test, 5 validation and the remaining training sentences. NL
training material uses the same sentence ids in the NL condition, the
test set stays Lombard for both.

Unseen case: the sorted speaker list is cut into 6 groups by a shuffled
`KFold`; each fold tests on one group and trains on the other five, with
5 validation sentences per training speaker.
"""

from dataclasses import dataclass
import os
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold

from source.data.corpus import (
    MANIFEST_COLUMNS,
    Manifest,
    ManifestEntry,
    entries_to_frame,
    frame_to_entries,
    with_condition,
)
from source.dsp.mixture import SNR_GRID, utterance_key
from source.utils.errors import (
    BadSpeakerCount,
    InsufficientUtterances,
    IoError,
    MalformedCsv,
    ValidationError,
)
from source.utils.path import atomic_target

NUM_TEST = 10
NUM_VALID = 5
NUM_FOLDS = 6
MIN_SEEN_UTTERANCES = NUM_TEST + NUM_VALID + 1

SETS = ('train', 'validation', 'test')


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# DataLog: {message}")


@dataclass(frozen=True)
class SplitPlan:
    """Train / validation / test entries of one experiment.

    Args:
        train / validation / test : tuple[ManifestEntry]
        snrs : tuple[float]
            SNR grid every set is mixed at.
        seed : int
        split : str
            'seen' or 'unseen'.
        condition : str
            Condition of the training and validation material.
        fold : int or None
            Fold index of unseen plans.
    """

    train: tuple
    validation: tuple
    test: tuple
    snrs: tuple = SNR_GRID
    seed: int = 0
    split: str = 'seen'
    condition: str = 'L'
    fold: Optional[int] = None

    def __post_init__(self):
        for name in SETS:
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, 'snrs', tuple(float(snr) for snr in self.snrs))

        keys = [{entry.key for entry in getattr(self, name)} for name in SETS]
        for i in range(len(SETS)):
            for j in range(i + 1, len(SETS)):
                if keys[i] & keys[j]:
                    raise ValidationError(f"{SETS[i]} and {SETS[j]} share {len(keys[i] & keys[j])} utterances.")
        if any(entry.condition != 'L' for entry in self.test):
            raise ValidationError("Test entries must be Lombard (L) recordings.")
        if not self.snrs:
            raise ValidationError("SNR grid must not be empty.")

    def entries(self, name: str) -> tuple:
        if name not in SETS:
            raise ValidationError(f"Unknown set '{name}', expected one of {SETS}.")
        return getattr(self, name)

    @property
    def test_speakers(self) -> set[str]:
        return {entry.speaker_id for entry in self.test}

    @property
    def tag(self) -> str:
        """File stem of the plan, e.g. 'seen_L' or 'unseen_NL_fold3'."""
        tag = f"{self.split}_{self.condition}"
        return tag if self.fold is None else f"{tag}_fold{self.fold}"


def _shuffled(ids: list[str], seed: int, speaker_id: str) -> list[str]:
    # Keyed by speaker so that adding speakers leaves the others' draws untouched.
    rng = np.random.default_rng([seed, utterance_key(speaker_id)])
    return [ids[i] for i in rng.permutation(len(ids))]


def _counterparts(manifest: Manifest, entries: list[ManifestEntry], condition: str) -> list[ManifestEntry]:
    mapped = []
    for entry in entries:
        other = with_condition(entry, manifest, condition)
        if other is None:
            raise InsufficientUtterances(f"{entry.name} has no {condition} counterpart.")
        mapped.append(other)
    return mapped


def make_seen_split(
        manifest: Manifest,
        condition_for_training: str = 'L',
        seed: int = 0,
        snrs: tuple = SNR_GRID,
    ) -> SplitPlan:
    """Per speaker 10 test, 5 validation and the rest training sentences."""

    if condition_for_training not in ('L', 'NL'):
        raise ValidationError(f"Training condition must be L or NL, got '{condition_for_training}'.")

    train, validation, test = [], [], []
    for speaker_id in manifest.speakers:
        ids = manifest.utterances(speaker_id, 'L')
        if len(ids) < MIN_SEEN_UTTERANCES:
            raise InsufficientUtterances(
                f"Speaker {speaker_id} has {len(ids)} L utterances, at least {MIN_SEEN_UTTERANCES} needed."
            )
        ids = _shuffled(ids, seed, speaker_id)
        lombard = [manifest.get(speaker_id, 'L', u) for u in ids]

        test += lombard[:NUM_TEST]
        validation += _counterparts(manifest, lombard[NUM_TEST:NUM_TEST + NUM_VALID], condition_for_training)
        train += _counterparts(manifest, lombard[NUM_TEST + NUM_VALID:], condition_for_training)

    plan = SplitPlan(train, validation, test, snrs, seed, 'seen', condition_for_training)
    _log(f"plan={plan.tag} train={len(plan.train)} validation={len(plan.validation)} test={len(plan.test)}")

    return plan


def make_unseen_folds(
        manifest: Manifest,
        seed: int = 0,
        condition_for_training: str = 'L',
        snrs: tuple = SNR_GRID,
    ) -> list[SplitPlan]:
    """6 speaker-disjoint folds; every speaker is tested in exactly one."""

    if condition_for_training not in ('L', 'NL'):
        raise ValidationError(f"Training condition must be L or NL, got '{condition_for_training}'.")

    speakers = manifest.speakers
    if len(speakers) < NUM_FOLDS or len(speakers) % NUM_FOLDS:
        raise BadSpeakerCount(f"{len(speakers)} speakers cannot be split into {NUM_FOLDS} equal groups.")

    kfold = KFold(n_splits=NUM_FOLDS, shuffle=True, random_state=seed)
    plans = []
    for fold, (train_index, test_index) in enumerate(kfold.split(speakers)):
        train, validation, test = [], [], []

        for speaker_id in (speakers[i] for i in sorted(test_index)):
            test += [manifest.get(speaker_id, 'L', u) for u in manifest.utterances(speaker_id, 'L')]

        for speaker_id in (speakers[i] for i in sorted(train_index)):
            ids = manifest.utterances(speaker_id, 'L')
            if len(ids) < NUM_VALID + 1:
                raise InsufficientUtterances(
                    f"Speaker {speaker_id} has {len(ids)} L utterances, at least {NUM_VALID + 1} needed."
                )
            lombard = [manifest.get(speaker_id, 'L', u) for u in _shuffled(ids, seed, speaker_id)]
            validation += _counterparts(manifest, lombard[:NUM_VALID], condition_for_training)
            train += _counterparts(manifest, lombard[NUM_VALID:], condition_for_training)

        plans.append(SplitPlan(train, validation, test, snrs, seed, 'unseen', condition_for_training, fold))
        _log(f"plan={plans[-1].tag} train={len(train)} validation={len(validation)} test={len(test)}")

    return plans


def save_plan(plan: SplitPlan, path: str, force: bool = False):
    """Manifest records plus a trailing set column, after '#' header lines."""

    if os.path.exists(path) and not force:
        raise IoError(f"{path} already exists, use force to overwrite.")

    frames = []
    for name in SETS:
        frame = entries_to_frame(plan.entries(name))
        frame['set'] = name
        frames.append(frame)

    header = (
        f"# split={plan.split} condition={plan.condition} "
        f"fold={'' if plan.fold is None else plan.fold} seed={plan.seed}\n"
        f"# snrs={','.join(f'{snr:g}' for snr in plan.snrs)}\n"
    )

    tmp_path = atomic_target(path)
    try:
        with open(tmp_path, 'w', encoding='utf-8') as file:
            file.write(header)
            pd.concat(frames).to_csv(file, sep='\t', header=False, index=False, lineterminator='\n')
        os.replace(tmp_path, path)
    except OSError as error:
        raise IoError(f"Cannot write plan {path}: {error}") from error


def load_plan(path: str) -> SplitPlan:

    try:
        with open(path, 'r', encoding='utf-8') as file:
            header = [file.readline(), file.readline()]
            frame = pd.read_csv(file, sep='\t', header=None, names=MANIFEST_COLUMNS + ['set'], dtype=str, keep_default_na=False)
    except FileNotFoundError as error:
        raise IoError(f"Plan {path} does not exist.") from error
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as error:
        raise MalformedCsv(f"Plan {path} is not a valid plan file: {error}") from error

    try:
        fields = dict(item.split('=', 1) for item in header[0].lstrip('# ').split())
        snrs = tuple(float(snr) for snr in header[1].strip().removeprefix('# snrs=').split(','))
        seed = int(fields['seed'])
        fold = int(fields['fold']) if fields['fold'] else None
        split, condition = fields['split'], fields['condition']
    except (KeyError, ValueError) as error:
        raise MalformedCsv(f"Plan {path} has a malformed header: {error}") from error

    if not set(frame['set']) <= set(SETS):
        raise MalformedCsv(f"Plan {path} has unknown set tags {sorted(set(frame['set']) - set(SETS))}.")

    sets = {name: frame_to_entries(frame[frame['set'] == name], os.path.dirname(os.path.abspath(path))) for name in SETS}

    return SplitPlan(sets['train'], sets['validation'], sets['test'], snrs, seed, split, condition, fold)
