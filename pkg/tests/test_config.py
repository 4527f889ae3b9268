import os

import pytest

from source.utils.config import ExperimentConfig
from source.utils.errors import ConfigError
from source.utils.path import root_path


def test_defaults(clean_env):
    config = ExperimentConfig.from_yaml()
    assert config.snrs == [-20.0, -15.0, -10.0, -5.0, 0.0, 5.0]
    assert (config.epochs, config.batch, config.lr) == (50, 64, 4e-4)
    assert (config.modality, config.train_condition, config.split) == ('AV', 'L', 'seen')
    assert config.pesq_command is None
    assert config.manifest_path == os.path.join(root_path, 'dataset', 'manifest.tsv')


@pytest.mark.parametrize('name', ['config.yaml', 'config_lite.yaml'])
def test_shipped_configs_are_valid(clean_env, name):
    config = ExperimentConfig.from_yaml(os.path.join(root_path, 'configs', name))
    assert config.sample_rate == 16000


def test_yaml_and_overrides(clean_env, tmp_path):
    path = tmp_path / 'config.yaml'
    path.write_text("epochs: 3\nmodality: AO\nsnrs: [0, 5]\n")

    config = ExperimentConfig.from_yaml(str(path), seed=7, modality=None, jobs=None)
    assert (config.epochs, config.modality, config.seed, config.jobs) == (3, 'AO', 7, 1)
    assert config.snrs == [0.0, 5.0]


@pytest.mark.parametrize('content', [
    'epochs: 0\n',
    'modality: AVO\n',
    'lr: -1\n',
    'snrs: []\n',
    'fold: 6\n',
    'batch: 1\n',
    'use_wandb: "yes"\n',
    'sample_rate: 8000\n',
    'n_fft: 512\n',
    'hop: 128\n',
    'clip_max: 0\n',
    'epohcs: 3\n',
    '- a\n- b\n',
    'epochs: [\n',
])
def test_invalid_configs(clean_env, tmp_path, content):
    path = tmp_path / 'config.yaml'
    path.write_text(content)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml(str(path))


def test_missing_config_file(clean_env, tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml(str(tmp_path / 'missing.yaml'))


def test_environment_overrides(clean_env, monkeypatch, tmp_path):
    monkeypatch.setenv('AVSE_DATA_DIR', str(tmp_path))
    monkeypatch.setenv('AVSE_PESQ_CMD', 'pesq {clean} {degraded}')

    config = ExperimentConfig.from_yaml()
    assert config.data_path == str(tmp_path)
    assert config.manifest_path == os.path.join(str(tmp_path), 'manifest.tsv')
    assert config.pesq_command == 'pesq {clean} {degraded}'
