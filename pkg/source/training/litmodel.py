"""Lightning Module for mask estimation."""

import copy
import time
from typing import Optional

import lightning as L
import torch

from source.models import layers
from source.models.network import EnhancementNet
from source.utils.errors import DivergedTraining

# Order of lightning hooks https://lightning.ai/docs/pytorch/stable/common/lightning_module.html#hooks
# Validation runs inside the training epoch, so `on_validation_epoch_end`
# precedes `on_train_epoch_end` of the same epoch.

LR_HALVING_BASELINES = ('previous', 'best')


def _log(message: str) -> None:
    """Printing function for log."""
    print(f"# TrainLog: {message}")


class MaskLightningModule(L.LightningModule):
    def __init__(self, network: EnhancementNet, lr: float, lr_halving_baseline: str = 'previous', print_log: bool = True):
        """Lightning Module training an `EnhancementNet` on IAM targets.

        After every validation pass the learning rate is halved if the
        validation loss rose above the previous epoch's (or, with
        `lr_halving_baseline='best'`, above the best so far). The weights
        of the epoch with the lowest validation loss are kept in
        `best_state`.
        """

        super().__init__()

        self.network = network
        self.lr = lr
        self.lr_halving_baseline = lr_halving_baseline
        self.print_log = print_log

        # Sums of loss * examples and example counts per epoch.
        self.loss_buffer = {'train': [0.0, 0], 'valid': [0.0, 0]}

        self.history = []
        self.best_state: Optional[dict] = None
        self.best_epoch: Optional[int] = None
        self.best_valid_loss = float('inf')
        self.previous_valid_loss: Optional[float] = None
        self.best_before: Optional[float] = None

    def forward(self, batch: dict[str, torch.Tensor], mode: str) -> torch.Tensor:
        """Return the mask MSE of one batch."""

        audio = batch['audio'].unsqueeze(1) if 'audio' in batch else None
        predicted = self.network(audio, batch.get('video'))

        loss, _ = layers.mask_mse_loss(predicted, batch['target'])
        if not torch.isfinite(loss):
            raise DivergedTraining(f"({mode}) Loss became {loss.item()} at epoch {self.current_epoch}.")

        size = len(batch['target'])
        self.loss_buffer[mode][0] += loss.item() * size
        self.loss_buffer[mode][1] += size

        return loss

    def configure_optimizers(self):
        return layers.Adam(self.network.parameters(), lr=self.lr)

    @property
    def current_lr(self) -> float:
        return self.optimizers().param_groups[0]['lr']

    def _epoch_loss(self, mode: str) -> float:
        total, count = self.loss_buffer[mode]
        return total / count if count else float('nan')

    def on_train_epoch_start(self):
        self.epoch_start_time = time.time()
        self.epoch_lr = self.current_lr
        self.loss_buffer['train'] = [0.0, 0]

    def on_validation_epoch_start(self):
        self.loss_buffer['valid'] = [0.0, 0]

    def training_step(self, batch: dict[str, torch.Tensor], batch_idx: int):
        loss = self.forward(batch, mode='train')
        self.log('train_loss', loss, on_step=False, on_epoch=True, batch_size=len(batch['target']))
        return loss

    def validation_step(self, batch: dict[str, torch.Tensor], batch_idx: int):
        loss = self.forward(batch, mode='valid')
        self.log('valid_loss', loss, on_step=False, on_epoch=True, batch_size=len(batch['target']))

    def on_validation_epoch_end(self):
        if self.trainer.sanity_checking:
            return

        valid_loss = self._epoch_loss('valid')

        if valid_loss < self.best_valid_loss:
            self.best_valid_loss = valid_loss
            self.best_epoch = self.current_epoch
            self.best_state = copy.deepcopy({k: v.detach().cpu() for k, v in self.network.state_dict().items()})

        baseline = self.previous_valid_loss if self.lr_halving_baseline == 'previous' else self.best_before
        if baseline is not None and valid_loss > baseline:
            for group in self.optimizers().param_groups:
                group['lr'] *= 0.5

        self.best_before = self.best_valid_loss
        self.previous_valid_loss = valid_loss

    def on_train_epoch_end(self):
        record = {
            'epoch': self.current_epoch + 1,
            'train_loss': self._epoch_loss('train'),
            'valid_loss': self._epoch_loss('valid'),
            'lr': self.epoch_lr,
            'epoch_time': time.time() - self.epoch_start_time,
        }
        self.history.append(record)
        self.log('lr', record['lr'], on_epoch=True)
        self.log('epoch_time', record['epoch_time'], on_epoch=True)

        if self.print_log:
            _log(f"epoch={record['epoch']} train_loss={record['train_loss']:.6f} valid_loss={record['valid_loss']:.6f} lr={record['lr']:.3e}")
