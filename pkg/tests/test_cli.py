import os

import numpy as np
import pandas as pd
import pytest
import yaml

from source.cli import main
from source.dsp.stft import Waveform, read_wav, write_wav
from source.metrics.evaluate import MetricReport
from source.models.features import FeatureStats
from source.models.network import EnhancementNet, build_model
from source.models.weights import TrainedModel, load_weights, save_weights


def _config(tmp_path, **values) -> str:
    config = {
        'data_dir': str(tmp_path / 'data'),
        'work_dir': str(tmp_path / 'work'),
        'fixture_speakers': 2,
        'fixture_utterances': 20,
        'snrs': [0, 5],
        'epochs': 3,
        'batch': 32,
        'modality': 'AO',
    }
    config.update(values)
    path = tmp_path / 'config.yaml'
    path.write_text(yaml.safe_dump(config))
    return str(path)


def test_invalid_config_exits_with_1(tmp_path, clean_env, capsys):
    path = tmp_path / 'bad.yaml'
    path.write_text('epochs: 0\n')

    assert main(['--config', str(path), 'split']) == 1
    assert 'ConfigError' in capsys.readouterr().err


def test_missing_manifest_exits_with_2(tmp_path, clean_env, capsys):
    assert main(['--config', _config(tmp_path), 'split']) == 2
    assert 'IoError' in capsys.readouterr().err


def test_fixture_command(tmp_path, clean_env, capsys):
    config = _config(tmp_path, fixture_utterances=16)

    assert main(['--config', config, 'fixture']) == 0
    assert os.path.exists(tmp_path / 'data' / 'manifest.tsv')
    assert 'entries=64' in capsys.readouterr().out

    # Existing artifacts are only replaced with --force.
    assert main(['--config', config, 'fixture']) == 2
    assert main(['fixture', '--config', config, '--force']) == 0


def test_report_command(tmp_path, clean_env, capsys):
    frame = pd.DataFrame(
        [('AO-L', 'AO', 'L', snr, 'estoi', mean, 0.1, 10) for snr, mean in ((0.0, 0.6), (5.0, 0.7))]
        + [('unproc', 'none', 'none', snr, 'estoi', mean, 0.1, 10) for snr, mean in ((0.0, 0.5), (5.0, 0.6))],
        columns=['model_id', 'modality', 'train_condition', 'snr_db', 'metric', 'mean', 'std', 'n'],
    )
    csv = str(tmp_path / 'metrics.csv')
    MetricReport(frame).to_csv(csv)

    out_dir = tmp_path / 'figures'
    assert main(['--config', _config(tmp_path), 'report', csv, '--out', str(out_dir)]) == 0
    assert (out_dir / 'estoi_seen.svg').exists()
    assert 'Mean scores' in capsys.readouterr().out


def test_enhance_with_audio_only_model(tmp_path, clean_env, capsys):
    model = TrainedModel(EnhancementNet(build_model('AO'), seed=0), FeatureStats(np.zeros(321), np.ones(321)))
    model_path = str(tmp_path / 'AO-L.avse')
    save_weights(model, model_path)

    noisy = str(tmp_path / 'noisy.wav')
    write_wav(Waveform(0.5 * np.random.default_rng(0).uniform(-1, 1, 20000)), noisy)

    output = str(tmp_path / 'enhanced.wav')
    args = ['--config', _config(tmp_path), 'enhance', '--model', model_path, '--input', noisy, '--output', output]
    assert main(args + ['--video', str(tmp_path / 'ignored.vfr')]) == 0
    assert 'warning=' in capsys.readouterr().out
    assert len(read_wav(output)) == 20000

    assert main(args) == 2
    assert main(args + ['--force']) == 0


def _run(*argv) -> None:
    assert main(list(argv)) == 0, argv


@pytest.mark.slow
def test_pipeline(tmp_path, clean_env, capsys):
    config = _config(tmp_path)
    work = tmp_path / 'work'

    _run('--config', config, 'fixture')
    _run('--config', config, 'split')
    assert sorted(os.listdir(work / 'splits')) == ['seen_L.tsv', 'seen_NL.tsv']

    _run('--config', config, 'prepare')
    assert (work / 'prepared' / 'seen' / 'ssn.wav').exists()

    _run('--config', config, 'train', '--condition', 'L')
    _run('--config', config, 'train', '--condition', 'NL')
    models = [str(work / 'models' / 'AO-L.avse'), str(work / 'models' / 'AO-NL.avse')]

    _run('--config', config, 'evaluate', *models, '--oracle')
    report = MetricReport.read_csv(str(work / 'reports' / 'metrics.csv'))
    assert report.model_ids == ['AO-L', 'AO-NL', 'unproc', 'oracle']
    assert len(report.frame) == 4 * 2

    # Evaluation is deterministic.
    first = (work / 'reports' / 'metrics.csv').read_bytes()
    _run('--config', config, '--force', 'evaluate', *models, '--oracle')
    assert (work / 'reports' / 'metrics.csv').read_bytes() == first

    _run('--config', config, 'report', str(work / 'reports' / 'metrics.csv'))
    summary = (work / 'reports' / 'figures' / 'summary.txt').read_text()
    assert 'AO-L' in summary and 'SNR gain' in summary


@pytest.mark.slow
def test_training_history(tmp_path, clean_env):
    config = _config(tmp_path, epochs=4, lr=5e-3)
    for command in ('fixture', 'split', 'prepare', 'train'):
        _run('--config', config, command)

    model_path = str(tmp_path / 'work' / 'models' / 'AO-L.avse')
    history = pd.read_csv(str(tmp_path / 'work' / 'models' / 'AO-L.history.csv'))
    model = load_weights(model_path)

    assert list(history.columns) == ['epoch', 'train_loss', 'valid_loss', 'lr']
    assert list(history['epoch']) == [1, 2, 3, 4]

    # The lr is kept or halved exactly, halving follows a rise of the validation loss.
    lr = history['lr'].to_numpy()
    valid = history['valid_loss'].to_numpy()
    assert lr[0] == 5e-3
    for i in range(1, len(lr)):
        rose = i >= 2 and valid[i - 1] > valid[i - 2]
        assert lr[i] == (lr[i - 1] * 0.5 if rose else lr[i - 1])

    assert model.metadata['valid_loss'] == pytest.approx(valid.min(), rel=1e-12)
    assert model.metadata['epoch'] == int(np.argmin(valid)) + 1
    assert model.metadata['model_id'] == 'AO-L'

    # Same seed, same weights.
    first = open(model_path, 'rb').read()
    _run('--config', config, '--force', 'train')
    assert open(model_path, 'rb').read() == first


@pytest.mark.slow
def test_training_improves_on_the_mixture(tmp_path, clean_env):
    config = _config(tmp_path, snrs=[0], epochs=12, lr=1e-3)
    for command in ('fixture', 'split', 'prepare', 'train'):
        _run('--config', config, command)

    valid = pd.read_csv(str(tmp_path / 'work' / 'models' / 'AO-L.history.csv'))['valid_loss'].to_numpy()
    assert valid.min() <= 0.5 * valid[0]

    _run('--config', config, 'evaluate', str(tmp_path / 'work' / 'models' / 'AO-L.avse'))
    frame = MetricReport.read_csv(str(tmp_path / 'work' / 'reports' / 'metrics.csv')).frame
    estoi = frame[(frame['metric'] == 'estoi') & (frame['snr_db'] == 0)].set_index('model_id')['mean']
    assert estoi['AO-L'] > estoi['unproc']


def test_evaluate_rejects_models_without_metadata(tmp_path, clean_env, capsys):
    model = TrainedModel(
        EnhancementNet(build_model('AO'), seed=0),
        FeatureStats(np.zeros(321), np.ones(321)),
        {'fold': None, 'train_condition': 'L', 'model_id': 'AO-L'},
    )
    model_path = str(tmp_path / 'AO-L.avse')
    save_weights(model, model_path)

    assert main(['--config', _config(tmp_path), 'evaluate', model_path]) == 2
    err = capsys.readouterr().err
    assert 'CorruptFile' in err and "'split'" in err


def test_config_directory_exits_with_1(tmp_path, clean_env, capsys):
    assert main(['--config', str(tmp_path), 'split']) == 1
    assert 'ConfigError' in capsys.readouterr().err


@pytest.mark.parametrize('raised, code, name', [
    (PermissionError('Permission denied'), 2, 'IoError'),
    (yaml.YAMLError('bad document'), 1, 'ConfigError'),
])
def test_stray_errors_map_to_exit_codes(tmp_path, clean_env, capsys, monkeypatch, raised, code, name):
    def failing(paths):
        raise raised

    monkeypatch.setattr('source.cli.read_reports', failing)
    assert main(['--config', _config(tmp_path), 'report', str(tmp_path / 'metrics.csv')]) == code
    assert name in capsys.readouterr().err
