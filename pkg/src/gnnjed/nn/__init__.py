"""Small reverse-mode autodiff core: tensors, MLPs, Adam, losses, checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import Mlp
from .losses import bce_loss, bce_with_logits, bmi_estimate, golden_section_max, multi_loss
from .optim import Adam
from .tensor import Tape, Tensor, as_tensor

__all__ = [
    "Adam",
    "CheckpointError",
    "Mlp",
    "Tape",
    "Tensor",
    "as_tensor",
    "bce_loss",
    "bce_with_logits",
    "bmi_estimate",
    "golden_section_max",
    "load_checkpoint",
    "multi_loss",
    "save_checkpoint",
]
