"""Test-set evaluation across the SNR grid.

Every test utterance is mixed at every SNR of the plan with its fixed
noise offset, enhanced, and scored against the peak-normalised clean
recording. Per-utterance scores are kept in long format

    model_id, modality, train_condition, snr_db, metric, utterance, value

and reduced to the report columns

    model_id, modality, train_condition, snr_db, metric, mean, std, n

so that scores of several models (e.g. the 6 unseen-speaker folds) can be
pooled before aggregation.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os
import tempfile
from typing import Optional

import numpy as np
import pandas as pd

from source.data.corpus import ManifestEntry, load_audio, load_video
from source.data.datamodule import mixture_key
from source.data.splits import SplitPlan
from source.dsp.masking import MaskEstimator, enhance_utterance, needs_video, oracle_enhance
from source.dsp.mixture import MixSpec, mix_utterance
from source.dsp.stft import Waveform, write_wav
from source.metrics.estoi import estoi
from source.metrics.pesq import PESQ_MAX, PESQ_MIN, pesq_external
from source.utils.errors import EmptyTestSet, IoError, MalformedCsv, ValidationError
from source.utils.path import atomic_target

REPORT_COLUMNS = ['model_id', 'modality', 'train_condition', 'snr_db', 'metric', 'mean', 'std', 'n']
SCORE_COLUMNS = ['model_id', 'modality', 'train_condition', 'snr_db', 'metric', 'utterance', 'value']

UNPROC = 'unproc'
ORACLE = 'oracle'

METRIC_RANGES = {'estoi': (-1.0, 1.0), 'pesq': (PESQ_MIN, PESQ_MAX)}


def baseline_id(name: str, split: str) -> str:
    """Baselines of unseen-speaker plans carry the same '*' as their models."""
    return name + ('*' if split == 'unseen' else '')


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# EvalLog: {message}")


@dataclass
class MetricReport:
    """Mean / std / count per (model_id, snr_db, metric)."""

    frame: pd.DataFrame

    def __post_init__(self):
        missing = set(REPORT_COLUMNS) - set(self.frame.columns)
        if missing:
            raise MalformedCsv(f"Report lacks columns {sorted(missing)}.")
        self.frame = self.frame[REPORT_COLUMNS].reset_index(drop=True)
        if (self.frame['n'] <= 0).any():
            raise MalformedCsv("Report has cells without utterances.")
        for metric, (low, high) in METRIC_RANGES.items():
            means = self.frame.loc[self.frame['metric'] == metric, 'mean']
            if ((means < low) | (means > high)).any():
                raise MalformedCsv(f"Report has {metric} means outside [{low}, {high}].")

    @property
    def model_ids(self) -> list[str]:
        return list(dict.fromkeys(self.frame['model_id']))

    @property
    def metrics(self) -> list[str]:
        return list(dict.fromkeys(self.frame['metric']))

    def to_csv(self, path: str, force: bool = False):
        if os.path.exists(path) and not force:
            raise IoError(f"{path} already exists, use force to overwrite.")
        tmp_path = atomic_target(path)
        try:
            self.frame.to_csv(tmp_path, index=False, lineterminator='\n')
            os.replace(tmp_path, path)
        except OSError as error:
            raise IoError(f"Cannot write report {path}: {error}") from error

    @classmethod
    def read_csv(cls, path: str) -> 'MetricReport':
        try:
            frame = pd.read_csv(path, dtype={'model_id': str, 'modality': str, 'train_condition': str, 'metric': str}, keep_default_na=False)
        except FileNotFoundError as error:
            raise IoError(f"Report {path} does not exist.") from error
        except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as error:
            raise MalformedCsv(f"Report {path} cannot be parsed: {error}") from error

        try:
            frame['snr_db'] = frame['snr_db'].astype(float)
            frame[['mean', 'std']] = frame[['mean', 'std']].astype(float)
            frame['n'] = frame['n'].astype(int)
        except (KeyError, ValueError) as error:
            raise MalformedCsv(f"Report {path} has malformed columns: {error}") from error

        return cls(frame)


def aggregate(scores: pd.DataFrame) -> MetricReport:
    """Reduce long-format utterance scores to report rows, keeping input order."""

    if scores.empty:
        raise EmptyTestSet("No scores to aggregate.")

    keys = ['model_id', 'modality', 'train_condition', 'snr_db', 'metric']
    frame = (
        scores.groupby(keys, sort=False)['value']
        .agg(mean='mean', std=lambda v: float(np.std(v)), n='count')
        .reset_index()
    )

    return MetricReport(frame)


@dataclass(frozen=True)
class _Job:
    entry: ManifestEntry
    snr_db: float


class Evaluator:
    def __init__(
            self,
            plan: SplitPlan,
            noise: Waveform,
            pesq_command: Optional[str] = None,
            pesq_mode: str = 'wb',
            jobs: int = 1,
        ):
        """Scores processed versions of the test mixtures of `plan`.

        Args:
            plan : SplitPlan
            noise : Waveform
                The experiment's long SSN realisation.
            pesq_command : str (default None)
                External PESQ command template; without it only ESTOI
                is reported.
            pesq_mode : str (default 'wb')
            jobs : int (default 1)
                Worker threads, one utterance-SNR pair per task.
        """

        if not plan.test:
            raise EmptyTestSet(f"Plan {plan.tag} has no test utterances.")

        self.plan = plan
        self.noise = noise
        self.pesq_command = pesq_command
        self.pesq_mode = pesq_mode
        self.jobs = max(1, jobs)
        self.with_pesq = bool(pesq_command)
        if not self.with_pesq:
            _log("pesq=absent metrics=estoi")

    @property
    def metrics(self) -> list[str]:
        return ['estoi', 'pesq'] if self.with_pesq else ['estoi']

    def _jobs(self) -> list[_Job]:
        return [_Job(entry, snr_db) for entry in self.plan.test for snr_db in self.plan.snrs]

    def _mixture(self, job: _Job) -> tuple[Waveform, Waveform, Waveform]:
        """Clean recording, normalised mixture and the clean signal at the mixture's scale."""
        clean = load_audio(job.entry)
        mixture, reference = mix_utterance(clean, self.noise, MixSpec(job.snr_db, self.plan.seed, 'fixed'), mixture_key(job.entry, job.snr_db))
        return clean, mixture, reference

    def _score(self, clean: Waveform, processed: Waveform) -> dict[str, float]:
        scores = {'estoi': estoi(clean, processed)}
        if self.with_pesq:
            with tempfile.TemporaryDirectory(prefix='avse-pesq-') as tmp_dir:
                clean_path, processed_path = os.path.join(tmp_dir, 'clean.wav'), os.path.join(tmp_dir, 'processed.wav')
                write_wav(clean, clean_path)
                write_wav(processed, processed_path)
                scores['pesq'] = pesq_external(clean_path, processed_path, self.pesq_command, self.pesq_mode)
        return scores

    def _run(self, process, model_id: str, modality: str, train_condition: str) -> pd.DataFrame:

        def task(job: _Job) -> list[tuple]:
            clean, mixture, reference = self._mixture(job)
            processed = process(job.entry, reference, mixture)
            return [
                (model_id, modality, train_condition, job.snr_db, metric, job.entry.name, value)
                for metric, value in self._score(clean, processed).items()
            ]

        jobs = self._jobs()
        if self.jobs == 1:
            rows = [row for job in jobs for row in task(job)]
        else:
            # map keeps submission order, so reruns reduce identically.
            with ThreadPoolExecutor(max_workers=self.jobs) as executor:
                rows = [row for result in executor.map(task, jobs) for row in result]

        _log(f"model_id={model_id} utterances={len(self.plan.test)} snrs={len(self.plan.snrs)} rows={len(rows)}")

        return pd.DataFrame(rows, columns=SCORE_COLUMNS)

    def score_model(self, model: MaskEstimator, model_id: str, train_condition: str) -> pd.DataFrame:
        """Per-utterance scores of `model` on the test set; `model` is not modified."""

        def process(entry: ManifestEntry, reference: Waveform, mixture: Waveform) -> Waveform:
            video = load_video(entry) if needs_video(model.modality) else None
            return enhance_utterance(mixture, video, model)

        return self._run(process, model_id, model.modality, train_condition)

    def score_unprocessed(self) -> pd.DataFrame:
        return self._run(lambda entry, reference, mixture: mixture, baseline_id(UNPROC, self.plan.split), 'none', 'none')

    def score_oracle(self) -> pd.DataFrame:
        """Unclipped IAM with the noisy phase, an upper bound for mask-based enhancement."""
        return self._run(lambda entry, reference, mixture: oracle_enhance(reference, mixture), baseline_id(ORACLE, self.plan.split), 'none', 'none')


def evaluate(
        model: Optional[MaskEstimator],
        plan: SplitPlan,
        noise: Waveform,
        model_id: str = 'model',
        train_condition: str = 'L',
        pesq_command: Optional[str] = None,
        pesq_mode: str = 'wb',
        include_unproc: bool = True,
        include_oracle: bool = False,
        jobs: int = 1,
    ) -> MetricReport:
    """Report of `model` (if any), the unprocessed mixtures and optionally the oracle mask."""

    evaluator = Evaluator(plan, noise, pesq_command, pesq_mode, jobs)

    scores = []
    if model is not None:
        scores.append(evaluator.score_model(model, model_id, train_condition))
    if include_unproc:
        scores.append(evaluator.score_unprocessed())
    if include_oracle:
        scores.append(evaluator.score_oracle())
    if not scores:
        raise ValidationError("Nothing to evaluate: no model, baseline or oracle requested.")

    return aggregate(pd.concat(scores, ignore_index=True))
