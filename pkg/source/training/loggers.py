"""Lightning loggers of a training run."""

import os

import yaml
from lightning.pytorch.loggers import CSVLogger, Logger, WandbLogger

from source.utils.device import runtime_info
from source.utils.errors import ConfigError
from source.utils.path import configs_dir


def _wandb_settings() -> dict:
    path = os.path.join(configs_dir, 'wandb.yaml')
    try:
        with open(path, 'r') as file:
            settings = yaml.safe_load(file) or {}
    except (OSError, yaml.YAMLError) as error:
        raise ConfigError(f"Cannot read W&B settings {path}: {error}") from error
    missing = {'project', 'group'} - set(settings)
    if missing:
        raise ConfigError(f"W&B settings {path} lack {sorted(missing)}.")
    return settings


def build_loggers(name: str, hparams: dict, work_dir: str, use_wandb: bool = False) -> list[Logger]:
    """`CSVLogger` under `<work_dir>/CSVLogger/<name>`, plus a `WandbLogger` if asked.

    Every logger receives `hparams` together with the host description.
    """

    log_info = {**hparams, **runtime_info()}

    save_dir = os.path.join(work_dir, 'CSVLogger')
    os.makedirs(save_dir, exist_ok=True)
    csv = CSVLogger(save_dir=save_dir, name=name, version='latest_run')
    csv.log_hyperparams(log_info)
    loggers = [csv]

    if use_wandb:
        settings = _wandb_settings()
        save_dir = os.path.join(work_dir, 'WandbLogger')
        os.makedirs(save_dir, exist_ok=True)
        wandb = WandbLogger(
            name=name,
            id=name,
            project=settings['project'],
            group=settings['group'],
            save_dir=save_dir,
        )
        wandb.experiment.config.update(log_info, allow_val_change=True)
        loggers.append(wandb)

    return loggers
