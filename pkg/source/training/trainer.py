"""Training of one mask estimation model."""

import os
from typing import Optional

import lightning as L
import pandas as pd

from source.data.datamodule import MaskDataModule
from source.data.splits import SplitPlan
from source.dsp.stft import Waveform
from source.models.features import FeatureStats
from source.models.network import EnhancementNet, build_model, count_parameters
from source.models.weights import TrainedModel
from source.training.litmodel import MaskLightningModule
from source.training.loggers import build_loggers
from source.utils.config import ExperimentConfig
from source.utils.errors import DivergedTraining, IoError
from source.utils.path import atomic_target

HISTORY_COLUMNS = ['epoch', 'train_loss', 'valid_loss', 'lr', 'epoch_time']


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# TrainLog: {message}")


def model_id(modality: str, condition: str, split: str) -> str:
    """'AV-L' for seen-speaker models, 'AV-L*' for unseen-speaker folds."""
    return f"{modality}-{condition}" + ('*' if split == 'unseen' else '')


def model_file_stem(modality: str, condition: str, split: str, fold: Optional[int] = None) -> str:
    """File name of a model, one per fold in the unseen case."""
    stem = f"{modality}-{condition}"
    return stem if split == 'seen' else f"{stem}-unseen-fold{fold}"


def train_model(
        config: ExperimentConfig,
        plan: SplitPlan,
        noise: Waveform,
        stats: Optional[FeatureStats] = None,
        print_log: bool = True,
    ) -> tuple[TrainedModel, pd.DataFrame]:
    """Train `config.modality` on `plan` and keep the best validation epoch.

    Returns:
        (TrainedModel, history) with one history row per epoch.
    """

    L.seed_everything(config.seed, workers=True)

    spec = build_model(config.modality, config.leaky_alpha, config.dropout, config.clip_max)
    network = EnhancementNet(spec, seed=config.seed)
    datamodule = MaskDataModule(plan, noise, config.modality, config.batch, config.seed, stats, clip_max=config.clip_max)
    module = MaskLightningModule(network, config.lr, config.lr_halving_baseline, print_log)

    name = model_file_stem(config.modality, plan.condition, plan.split, plan.fold)
    training_info = {
        'name': name,
        'model_id': model_id(config.modality, plan.condition, plan.split),
        'num_parameters': count_parameters(spec),
        **config.to_dict(),
    }
    loggers = build_loggers(name, training_info, config.work_path, config.use_wandb)

    _log(f"model={training_info['model_id']} plan={plan.tag} parameters={training_info['num_parameters']} epochs={config.epochs}")

    trainer = L.Trainer(
        accelerator='cpu',
        max_epochs=config.epochs,
        logger=loggers,
        deterministic=True,
        enable_checkpointing=False,
        enable_progress_bar=False,
        enable_model_summary=False,
        num_sanity_val_steps=0,
        reload_dataloaders_every_n_epochs=1,
        log_every_n_steps=1,
    )
    trainer.fit(module, datamodule=datamodule)

    if module.best_state is None:
        raise DivergedTraining(f"Training of {name} finished without a finite validation loss.")

    network.load_state_dict(module.best_state)
    network.eval()

    metadata = {
        'model_id': training_info['model_id'],
        'train_condition': plan.condition,
        'split': plan.split,
        'fold': plan.fold,
        'seed': config.seed,
        'epoch': int(module.best_epoch) + 1,
        'valid_loss': float(module.best_valid_loss),
    }
    _log(f"model={metadata['model_id']} best_epoch={metadata['epoch']} valid_loss={metadata['valid_loss']:.6f}")

    history = pd.DataFrame(module.history, columns=HISTORY_COLUMNS)

    return TrainedModel(network, datamodule.stats, metadata), history


def save_history(history: pd.DataFrame, path: str):
    # Timings differ between reruns; they stay in the Lightning logs only.
    tmp_path = atomic_target(path)
    try:
        history.drop(columns=['epoch_time']).to_csv(tmp_path, index=False, lineterminator='\n')
        os.replace(tmp_path, path)
    except OSError as error:
        raise IoError(f"Cannot write training history {path}: {error}") from error
