"""Numpy 1D U-Net: layer kernels, loss, optimizer and checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import bce_loss
from .optim import AdamState, adam_step
from .unet import UNetConfig, UNetModel

__all__ = [
    "AdamState",
    "UNetConfig",
    "UNetModel",
    "adam_step",
    "bce_loss",
    "load_checkpoint",
    "save_checkpoint",
]
