"""Experiment configuration.

Configurations live in flat YAML documents under `configs/`. Each key is
declared once in `ExperimentConfig`; loading rejects unknown keys and
validates every value before any work starts.
"""

from dataclasses import asdict, dataclass, field, fields
import math
import os
from typing import Any, Optional

import yaml

from source.utils.errors import ConfigError
from source.utils.path import root_path

modalities = ('AV', 'AO', 'VO')
conditions = ('L', 'NL')
splits = ('seen', 'unseen')


@dataclass
class ExperimentConfig:
    # Front end.
    sample_rate: int = 16000
    n_fft: int = 640
    hop: int = 160
    clip_max: float = 10.0
    snrs: list = field(default_factory=lambda: [-20, -15, -10, -5, 0, 5])

    # Training.
    epochs: int = 50
    batch: int = 64
    lr: float = 4e-4
    leaky_alpha: float = 0.2
    dropout: float = 0.25
    lr_halving_baseline: str = 'previous'
    seed: int = 0

    # Experiment.
    modality: str = 'AV'
    train_condition: str = 'L'
    split: str = 'seen'
    fold: int = 0

    # Evaluation.
    pesq_command: Optional[str] = None
    pesq_mode: str = 'wb'

    # Paths.
    data_dir: str = 'dataset'
    work_dir: str = 'training_logs'
    manifest: Optional[str] = None

    # Fixture corpus and noise.
    fixture_speakers: int = 6
    fixture_utterances: int = 20
    ssn_length_factor: int = 10

    # Runtime.
    use_wandb: bool = False
    jobs: int = 1

    @classmethod
    def from_yaml(cls, path: Optional[str] = None, **overrides) -> 'ExperimentConfig':
        """Load a flat YAML document, apply overrides and validate.

        Args:
            path : str (default None)
                YAML file. `None` gives the built-in defaults.
            overrides : dict
                Key/value pairs applied after the file (`None` values
                are ignored so unset CLI flags do not clobber the file).
        """

        values = {}
        if path is not None:
            try:
                with open(path, 'r', encoding='utf-8') as file:
                    values = yaml.safe_load(file) or {}
            except OSError as error:
                raise ConfigError(f"Cannot read config {path}: {error}") from error
            except yaml.YAMLError as error:
                raise ConfigError(f"Config {path} is not valid YAML: {error}") from error
            if not isinstance(values, dict):
                raise ConfigError(f"Config {path} must be a flat key/value mapping.")

        values.update({key: value for key, value in overrides.items() if value is not None})

        # Path overrides from the environment.
        if os.environ.get('AVSE_DATA_DIR'):
            values['data_dir'] = os.environ['AVSE_DATA_DIR']
        if os.environ.get('AVSE_PESQ_CMD'):
            values['pesq_command'] = os.environ['AVSE_PESQ_CMD']

        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

        config = cls(**values)
        config.validate()
        return config

    def validate(self):
        """Type and range check of every key."""

        def check(key: str, ok: bool, expected: str):
            if not ok:
                raise ConfigError(f"Config key '{key}' = {getattr(self, key)!r}, expected {expected}.")

        def is_int(value: Any) -> bool:
            return isinstance(value, int) and not isinstance(value, bool)

        def is_real(value: Any) -> bool:
            return (is_int(value) or isinstance(value, float)) and math.isfinite(value)

        # The network takes 321 bins and 4 STFT frames per 25 fps video frame,
        # which pins the front end.
        check('sample_rate', is_int(self.sample_rate) and self.sample_rate == 16000, '16000')
        check('n_fft', is_int(self.n_fft) and self.n_fft == 640, '640')
        check('hop', is_int(self.hop) and self.hop == 160, '160')
        check('clip_max', is_real(self.clip_max) and self.clip_max > 0, 'a positive number')
        check('snrs', isinstance(self.snrs, list) and len(self.snrs) > 0 and all(is_real(s) for s in self.snrs),
              'a non-empty list of finite numbers')
        check('epochs', is_int(self.epochs) and self.epochs >= 1, 'an integer >= 1')
        check('batch', is_int(self.batch) and self.batch >= 2, 'an integer >= 2')
        check('lr', is_real(self.lr) and self.lr > 0, 'a positive number')
        check('leaky_alpha', is_real(self.leaky_alpha) and 0 <= self.leaky_alpha < 1, 'a number in [0, 1)')
        check('dropout', is_real(self.dropout) and 0 <= self.dropout < 1, 'a number in [0, 1)')
        check('lr_halving_baseline', self.lr_halving_baseline in ('previous', 'best'), "'previous' or 'best'")
        check('seed', is_int(self.seed) and self.seed >= 0, 'a non-negative integer')
        check('modality', self.modality in modalities, ' | '.join(modalities))
        check('train_condition', self.train_condition in conditions, ' | '.join(conditions))
        check('split', self.split in splits, ' | '.join(splits))
        check('fold', is_int(self.fold) and 0 <= self.fold < 6, 'an integer in [0, 6)')
        check('pesq_command', self.pesq_command is None or isinstance(self.pesq_command, str), 'a string or null')
        check('pesq_mode', self.pesq_mode in ('wb', 'nb'), "'wb' or 'nb'")
        check('data_dir', isinstance(self.data_dir, str) and self.data_dir != '', 'a path')
        check('work_dir', isinstance(self.work_dir, str) and self.work_dir != '', 'a path')
        check('manifest', self.manifest is None or isinstance(self.manifest, str), 'a path or null')
        check('fixture_speakers', is_int(self.fixture_speakers) and self.fixture_speakers >= 2, 'an integer >= 2')
        check('fixture_utterances', is_int(self.fixture_utterances) and self.fixture_utterances >= 16, 'an integer >= 16')
        check('ssn_length_factor', is_int(self.ssn_length_factor) and self.ssn_length_factor >= 10, 'an integer >= 10')
        check('use_wandb', isinstance(self.use_wandb, bool), 'true or false')
        check('jobs', is_int(self.jobs) and self.jobs >= 1, 'an integer >= 1')

        self.snrs = [float(s) for s in self.snrs]
        self.clip_max = float(self.clip_max)
        self.lr = float(self.lr)

    def to_dict(self) -> dict:
        return asdict(self)

    def resolve(self, path: str) -> str:
        """Relative paths are taken from the repository root."""
        return path if os.path.isabs(path) else os.path.join(root_path, path)

    @property
    def data_path(self) -> str:
        return self.resolve(self.data_dir)

    @property
    def work_path(self) -> str:
        return self.resolve(self.work_dir)

    @property
    def manifest_path(self) -> str:
        if self.manifest is not None:
            return self.resolve(self.manifest)
        return os.path.join(self.data_path, 'manifest.tsv')
