"""Command line of the toolkit.

    avse [--config PATH] [--seed N] [--force] [--jobs N] <command> ...

Commands run one stage of the experiment pipeline

    fixture -> split -> prepare -> train -> evaluate -> report

plus `enhance` for single files. Artifacts are laid out by
`source.data.workspace.Workspace` under the configured `work_dir`.
Exit code 0 on success, 1 on invalid input, 2 on failures while running.
"""

import argparse
import os
import sys
from typing import Optional

import numpy as np
import pandas as pd
import yaml

from source.data.corpus import read_manifest
from source.data.fixture import generate_fixture_corpus
from source.data.splits import make_seen_split, make_unseen_folds, load_plan, save_plan, NUM_FOLDS
from source.data.video import read_video_frames
from source.data.workspace import Workspace, prepare_noise
from source.dsp.masking import enhance_utterance, needs_video
from source.dsp.stft import Waveform, peak_normalize, read_wav, write_wav
from source.metrics.evaluate import Evaluator, aggregate
from source.models.weights import load_weights, save_weights
from source.training.result import read_reports, write_report
from source.training.trainer import model_file_stem, save_history, train_model
from source.utils.config import ExperimentConfig, conditions, splits
from source.utils.errors import AvseError, ConfigError, CorruptFile, IoError, ValidationError


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# CliLog: {message}")


def _folds(config: ExperimentConfig, all_folds: bool) -> list[Optional[int]]:
    if config.split == 'seen':
        return [None]
    return list(range(NUM_FOLDS)) if all_folds else [config.fold]


def _refuse_existing(path: str, force: bool):
    if os.path.exists(path) and not force:
        raise IoError(f"{path} already exists, use --force to overwrite.")


def cmd_fixture(config: ExperimentConfig, args: argparse.Namespace) -> int:
    out_dir = args.out or config.data_path
    _refuse_existing(os.path.join(out_dir, 'manifest.tsv'), args.force)

    manifest = generate_fixture_corpus(config.fixture_speakers, config.fixture_utterances, config.seed, out_dir)
    _log(f"manifest={os.path.join(out_dir, 'manifest.tsv')} entries={len(manifest)}")

    return 0


def cmd_split(config: ExperimentConfig, args: argparse.Namespace) -> int:
    manifest = read_manifest(config.manifest_path)
    workspace = Workspace(config.work_path)
    workspace.ensure(workspace.splits_dir)

    for condition in conditions:
        snrs = tuple(config.snrs)
        if config.split == 'seen':
            plans = [make_seen_split(manifest, condition, config.seed, snrs)]
        else:
            plans = make_unseen_folds(manifest, config.seed, condition, snrs)
        for plan in plans:
            path = workspace.plan_path(plan.split, plan.condition, plan.fold)
            save_plan(plan, path, args.force)
            _log(f"plan={path}")

    return 0


def cmd_prepare(config: ExperimentConfig, args: argparse.Namespace) -> int:
    manifest = read_manifest(config.manifest_path)
    workspace = Workspace(config.work_path)

    for fold in _folds(config, args.all_folds):
        plan = load_plan(workspace.plan_path(config.split, config.train_condition, fold))
        _, noise = prepare_noise(plan, manifest, workspace, config.ssn_length_factor, args.force)
        _log(f"prepared={workspace.prepared_dir(plan.split, plan.fold)} noise_samples={len(noise)}")

    return 0


def cmd_train(config: ExperimentConfig, args: argparse.Namespace) -> int:
    workspace = Workspace(config.work_path)
    workspace.ensure(workspace.models_dir)

    for fold in _folds(config, args.all_folds):
        plan = load_plan(workspace.plan_path(config.split, config.train_condition, fold))
        path = workspace.model_path(model_file_stem(config.modality, plan.condition, plan.split, plan.fold))
        _refuse_existing(path, args.force)

        model, history = train_model(config, plan, workspace.load_noise(plan.split, plan.fold))
        save_weights(model, path, force=True)
        save_history(history, workspace.history_path(path))
        _log(f"model={path} epoch={model.metadata['epoch']} valid_loss={model.metadata['valid_loss']:.6f}")

    return 0


def cmd_enhance(config: ExperimentConfig, args: argparse.Namespace) -> int:
    _refuse_existing(args.output, args.force)

    model = load_weights(args.model)
    noisy = read_wav(args.input)

    video = None
    if args.video is not None:
        if needs_video(model.modality):
            video = read_video_frames(args.video)
        else:
            _log(f"warning=ignoring video of {args.video}, a {model.modality} model uses audio only")

    # Models see peak-normalised mixtures; the output keeps the input level.
    peak = float(np.max(np.abs(noisy.samples)))
    enhanced = enhance_utterance(peak_normalize(noisy), video, model)
    write_wav(Waveform(enhanced.samples * peak, enhanced.sample_rate), args.output)
    _log(f"enhanced={args.output} samples={len(enhanced)}")

    return 0


def _evaluation_metadata(model, path: str) -> tuple[str, Optional[int], str, str]:
    """(split, fold, train_condition, model_id) recorded with a trained model."""

    missing = [key for key in ('split', 'fold', 'train_condition', 'model_id') if key not in model.metadata]
    if missing:
        raise CorruptFile(f"Model {path} lacks metadata {missing}.")

    metadata = model.metadata
    if metadata['split'] not in splits or metadata['train_condition'] not in conditions:
        raise CorruptFile(f"Model {path} has split '{metadata['split']}' and condition '{metadata['train_condition']}'.")
    return metadata['split'], metadata['fold'], metadata['train_condition'], metadata['model_id']


def cmd_evaluate(config: ExperimentConfig, args: argparse.Namespace) -> int:
    workspace = Workspace(config.work_path)
    output = args.output or os.path.join(workspace.reports_dir, 'metrics.csv')
    _refuse_existing(output, args.force)

    # One evaluator per test set; baselines are scored once per test set.
    evaluators = {}
    scores = []
    for path in args.models:
        model = load_weights(path)
        split, fold, condition, model_id = _evaluation_metadata(model, path)

        if (split, fold) not in evaluators:
            plan = load_plan(workspace.plan_path(split, condition, fold))
            evaluators[(split, fold)] = Evaluator(
                plan, workspace.load_noise(split, fold), config.pesq_command, config.pesq_mode, config.jobs,
            )
        evaluator = evaluators[(split, fold)]

        scores.append(evaluator.score_model(model, model_id, condition))

    for evaluator in evaluators.values():
        scores.append(evaluator.score_unprocessed())
        if args.oracle:
            scores.append(evaluator.score_oracle())

    report = aggregate(pd.concat(scores, ignore_index=True))
    workspace.ensure(os.path.dirname(os.path.abspath(output)))
    report.to_csv(output, force=args.force)
    _log(f"report={output} rows={len(report.frame)} models={','.join(report.model_ids)}")

    return 0


def cmd_report(config: ExperimentConfig, args: argparse.Namespace) -> int:
    report = read_reports(args.csv)
    out_dir = args.out or os.path.join(Workspace(config.work_path).reports_dir, 'figures')

    paths, text = write_report(report, out_dir, args.force)
    print(text, end='')
    _log(f"figures={len(paths)} summary={os.path.join(out_dir, 'summary.txt')}")

    return 0


def build_parser() -> argparse.ArgumentParser:
    # Global flags are accepted before and after the command name.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default=argparse.SUPPRESS, type=str, help='YAML configuration file')
    common.add_argument('--seed', default=argparse.SUPPRESS, type=int, help='Override the configured seed')
    common.add_argument('--force', default=argparse.SUPPRESS, action='store_true', help='Overwrite existing artifacts')
    common.add_argument('--jobs', default=argparse.SUPPRESS, type=int, help='Worker threads for evaluation')

    parser = argparse.ArgumentParser(prog='avse', description='Audio-visual speech enhancement experiments.', parents=[common])
    subparsers = parser.add_subparsers(dest='command', required=True)

    fixture = subparsers.add_parser('fixture', parents=[common], help='Write the synthetic corpus')
    fixture.add_argument('--out', default=None, type=str, help='Corpus directory (default: data_dir)')

    subparsers.add_parser('split', parents=[common], help='Write split plans for both training conditions')

    prepare = subparsers.add_parser('prepare', parents=[common], help='Estimate the LTAS and write the SSN')
    prepare.add_argument('--all-folds', action='store_true', help='Every unseen-speaker fold')

    train = subparsers.add_parser('train', parents=[common], help='Train one model (per fold)')
    train.add_argument('--modality', default=None, choices=('AV', 'AO', 'VO'))
    train.add_argument('--condition', default=None, choices=conditions, help='Training condition')
    train.add_argument('--all-folds', action='store_true', help='Every unseen-speaker fold')

    enhance = subparsers.add_parser('enhance', parents=[common], help='Enhance one noisy recording')
    enhance.add_argument('--model', required=True, type=str)
    enhance.add_argument('--input', required=True, type=str, help='Noisy 16 kHz WAV')
    enhance.add_argument('--video', default=None, type=str, help='Mouth video (.vfr)')
    enhance.add_argument('--output', required=True, type=str)

    evaluate = subparsers.add_parser('evaluate', parents=[common], help='Score models on their test sets')
    evaluate.add_argument('models', nargs='+', type=str, help='Weight files')
    evaluate.add_argument('--output', default=None, type=str, help='Report CSV')
    evaluate.add_argument('--oracle', action='store_true', help='Add the oracle mask baseline')

    report = subparsers.add_parser('report', parents=[common], help='Plots and tables of report CSVs')
    report.add_argument('csv', nargs='+', type=str)
    report.add_argument('--out', default=None, type=str, help='Output directory')

    return parser


def _report_failure(error: AvseError) -> int:
    print(f"error: {type(error).__name__}: {error}", file=sys.stderr)
    return error.exit_code


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    for key, default in (('config', None), ('seed', None), ('force', False), ('jobs', None)):
        if not hasattr(args, key):
            setattr(args, key, default)

    try:
        overrides = {'seed': args.seed, 'jobs': args.jobs}
        if args.command == 'train':
            overrides.update(modality=args.modality, train_condition=args.condition)
        config = ExperimentConfig.from_yaml(args.config, **overrides)

        commands = {
            'fixture': cmd_fixture,
            'split': cmd_split,
            'prepare': cmd_prepare,
            'train': cmd_train,
            'enhance': cmd_enhance,
            'evaluate': cmd_evaluate,
            'report': cmd_report,
        }
        return commands[args.command](config, args)

    except AvseError as error:
        return _report_failure(error)
    except yaml.YAMLError as error:
        return _report_failure(ConfigError(f"Malformed YAML: {error}"))
    except OSError as error:
        return _report_failure(IoError(str(error)))
