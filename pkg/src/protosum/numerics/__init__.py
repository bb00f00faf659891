from . import tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .nn import Module, multi_head_attention
from .optim import AdamState, adam_step, scheduled_lr
from .tensor import Tensor, no_grad

__all__ = [
    "AdamState",
    "Module",
    "Tensor",
    "adam_step",
    "grad_check",
    "load_checkpoint",
    "multi_head_attention",
    "no_grad",
    "save_checkpoint",
    "scheduled_lr",
    "tensor",
]
