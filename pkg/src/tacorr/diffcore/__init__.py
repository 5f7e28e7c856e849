"""Minimal reverse-mode differentiation over numpy arrays."""

from .functional import (
    ContractError,
    cosine_similarity,
    cross_entropy_rows,
    gumbel_softmax,
    log_softmax_rows,
    one_hot,
    smooth_l1,
    softmax_rows,
)
from .gradcheck import finite_diff_check
from .nn import AttentionBlock, FeedForward, Linear, Module, attention_block, init_weight, scaled_attention
from .optim import AdamW, adamw_step
from .tensor import (
    NumericError,
    Parameter,
    ShapeError,
    Tape,
    Tensor,
    as_tensor,
    concat,
    exp,
    index,
    is_grad_enabled,
    log,
    matmul,
    no_grad,
    relu,
    sqrt,
    stack,
    take_along_rows,
    transpose,
)

__all__ = [
    "AdamW", "AttentionBlock", "ContractError", "FeedForward", "Linear", "Module",
    "NumericError", "Parameter", "ShapeError", "Tape", "Tensor", "adamw_step", "as_tensor",
    "attention_block", "concat", "cosine_similarity", "cross_entropy_rows", "exp",
    "finite_diff_check", "gumbel_softmax", "index", "init_weight", "is_grad_enabled", "log",
    "log_softmax_rows", "matmul", "no_grad", "one_hot", "relu", "scaled_attention", "smooth_l1",
    "softmax_rows",
    "sqrt", "stack", "take_along_rows", "transpose",
]
