from .tensor import Tensor, assert_finite
from .params import ParamStore
from .layers import AttentionBlock, MlpSpec, attention, init_attention, init_mlp, mlp_forward
from .optim import adam_step, adamw_step, collect_grads, gradient_check
from .seeding import stream, substream_seed
from .checkpoint import CheckpointError, load_checkpoint, restore_into, save_checkpoint

__all__ = [
    "Tensor",
    "assert_finite",
    "ParamStore",
    "MlpSpec",
    "AttentionBlock",
    "mlp_forward",
    "init_mlp",
    "attention",
    "init_attention",
    "adam_step",
    "adamw_step",
    "collect_grads",
    "gradient_check",
    "stream",
    "substream_seed",
    "CheckpointError",
    "save_checkpoint",
    "load_checkpoint",
    "restore_into",
]
