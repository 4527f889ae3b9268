"""Artifact layout of one experiment directory.

    <work_dir>/splits/<split>_<condition>[_fold<k>].tsv
    <work_dir>/prepared/<split>[/fold<k>]/ltas.bin, ssn.wav
    <work_dir>/models/<model file>.avse, <model file>.history.csv
    <work_dir>/reports/

Noise is prepared per split family (and fold), not per condition: the
LTAS is always measured on the non-Lombard recordings of the training
sentences, so L- and NL-trained models of one split see the same noise.
"""

import os
from typing import Optional

import soundfile as sf

from source.data.corpus import Manifest, load_audio, with_condition
from source.data.splits import SplitPlan
from source.dsp.mixture import Ltas, estimate_ltas, generate_ssn, load_ltas, save_ltas
from source.dsp.stft import Waveform, read_wav, write_wav
from source.utils.errors import InsufficientUtterances, IoError


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# DataLog: {message}")


class Workspace:
    def __init__(self, work_dir: str):
        self.work_dir = work_dir

    @property
    def splits_dir(self) -> str:
        return os.path.join(self.work_dir, 'splits')

    @property
    def models_dir(self) -> str:
        return os.path.join(self.work_dir, 'models')

    @property
    def reports_dir(self) -> str:
        return os.path.join(self.work_dir, 'reports')

    def plan_path(self, split: str, condition: str, fold: Optional[int] = None) -> str:
        tag = f"{split}_{condition}" if split == 'seen' else f"{split}_{condition}_fold{fold}"
        return os.path.join(self.splits_dir, f"{tag}.tsv")

    def prepared_dir(self, split: str, fold: Optional[int] = None) -> str:
        path = os.path.join(self.work_dir, 'prepared', split)
        return path if split == 'seen' else os.path.join(path, f"fold{fold}")

    def ltas_path(self, split: str, fold: Optional[int] = None) -> str:
        return os.path.join(self.prepared_dir(split, fold), 'ltas.bin')

    def noise_path(self, split: str, fold: Optional[int] = None) -> str:
        return os.path.join(self.prepared_dir(split, fold), 'ssn.wav')

    def model_path(self, file_stem: str) -> str:
        return os.path.join(self.models_dir, f"{file_stem}.avse")

    @staticmethod
    def history_path(model_path: str) -> str:
        return os.path.splitext(model_path)[0] + '.history.csv'

    def ensure(self, *directories: str):
        for directory in directories:
            try:
                os.makedirs(directory, exist_ok=True)
            except OSError as error:
                raise IoError(f"Cannot create directory {directory}: {error}") from error

    def load_noise(self, split: str, fold: Optional[int] = None) -> Waveform:
        path = self.noise_path(split, fold)
        if not os.path.exists(path):
            raise IoError(f"Prepared noise {path} does not exist, run the prepare command first.")
        return read_wav(path)


def longest_utterance(manifest: Manifest) -> int:
    """Sample count of the longest recording in `manifest`."""

    longest = 0
    for entry in manifest:
        try:
            longest = max(longest, sf.info(entry.audio_path).frames)
        except RuntimeError as error:
            raise IoError(f"Cannot read {entry.audio_path}: {error}") from error
    return longest


def neutral_training_speech(plan: SplitPlan, manifest: Manifest):
    """Peak-normalised NL recordings of the training sentences of `plan`."""

    for entry in plan.train:
        neutral = with_condition(entry, manifest, 'NL')
        if neutral is None:
            raise InsufficientUtterances(f"{entry.name} has no NL counterpart for the noise spectrum.")
        yield load_audio(neutral)


def prepare_noise(
        plan: SplitPlan,
        manifest: Manifest,
        workspace: Workspace,
        length_factor: int = 10,
        force: bool = False,
    ) -> tuple[Ltas, Waveform]:
    """Estimate the LTAS of `plan`'s training speech and write a long SSN realisation."""

    ltas_path, noise_path = workspace.ltas_path(plan.split, plan.fold), workspace.noise_path(plan.split, plan.fold)
    if not force:
        for path in (ltas_path, noise_path):
            if os.path.exists(path):
                raise IoError(f"{path} already exists, use force to overwrite.")

    ltas = estimate_ltas(neutral_training_speech(plan, manifest))
    noise = generate_ssn(ltas, length_factor * longest_utterance(manifest), plan.seed)

    workspace.ensure(workspace.prepared_dir(plan.split, plan.fold))
    save_ltas(ltas, ltas_path, force=True)
    write_wav(noise, noise_path)
    _log(f"noise={noise_path} samples={len(noise)} seconds={noise.duration:.1f}")

    # Training and evaluation read the 16-bit file, so hand back the same samples.
    return load_ltas(ltas_path), read_wav(noise_path)
