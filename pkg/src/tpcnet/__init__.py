"""Low-light image enhancement with physically constrained light/reflectivity features."""
from .attention import AttentionVariant, CGMSA, cg_msa, count_attention_flops
from .blocks import CGAB, IEL, CgabVariant
from .checkpoint import load_checkpoint, load_model, save_checkpoint
from .complexity import count_params_flops
from .config import RunConfig
from .network import ABLATIONS, NetworkConfig, TPCNet, build_model, tpcnet_forward
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS",
    "AttentionVariant",
    "CGAB",
    "CGMSA",
    "CgabVariant",
    "IEL",
    "NetworkConfig",
    "RunConfig",
    "TPCNet",
    "TrainConfig",
    "build_model",
    "cg_msa",
    "count_attention_flops",
    "count_params_flops",
    "load_checkpoint",
    "load_model",
    "save_checkpoint",
    "tpcnet_forward",
    "train",
]
