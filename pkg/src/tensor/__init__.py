from src.tensor.checkpoint import load_checkpoint, save_checkpoint
from src.tensor.gradcheck import grad_check
from src.tensor.ops import Graph, OpKind, OpRecord, backward, op_forward

__all__ = [
    "Graph",
    "OpKind",
    "OpRecord",
    "backward",
    "grad_check",
    "load_checkpoint",
    "op_forward",
    "save_checkpoint",
]
