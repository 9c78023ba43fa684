from toonflow.numerics.tensor import (
    Tape,
    Tensor,
    add,
    attention,
    backward,
    concat,
    const,
    embedding,
    gelu,
    layernorm,
    matmul,
    mean_all,
    mse,
    mul,
    narrow,
    reshape,
    rope_rotate,
    row_range_add,
    set_finite_checks,
    silu,
    softmax_lastdim,
    sub,
    sum_all,
    sum_axis,
    tensor,
    transpose,
)
from toonflow.numerics.params import Parameter, ParamStore
from toonflow.numerics.optim import AdamW
from toonflow.numerics.checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    "AdamW",
    "Checkpoint",
    "Parameter",
    "ParamStore",
    "Tape",
    "Tensor",
    "add",
    "attention",
    "backward",
    "concat",
    "const",
    "embedding",
    "gelu",
    "layernorm",
    "load_checkpoint",
    "matmul",
    "mean_all",
    "mse",
    "mul",
    "narrow",
    "reshape",
    "rope_rotate",
    "row_range_add",
    "save_checkpoint",
    "set_finite_checks",
    "silu",
    "softmax_lastdim",
    "sub",
    "sum_all",
    "sum_axis",
    "tensor",
    "transpose",
]
