"""Minimal dense-tensor autodiff core: ops, LSTM, losses, Adam, checkpoints."""

from .checkpoint import (
    CHECKPOINT_VERSION,
    load_checkpoint,
    restore_params,
    save_checkpoint,
)
from .losses import bce, ce_over_positions
from .lstm import LSTMParams, bilstm_seq, lstm_seq
from .optim import AdamState, adam_step
from .tensor import (
    DTYPE,
    LEAKY_RELU_SLOPE,
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    TensorkitError,
    add,
    as_tensor,
    concat,
    dropout,
    elementwise,
    flip_rows,
    gather_rows,
    leaky_relu,
    matmul,
    mul,
    pool,
    record,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    rows,
    scale,
    sigmoid,
    softmax,
    sub,
    tanh,
    transpose,
)

__all__ = [
    "CHECKPOINT_VERSION",
    "DTYPE",
    "LEAKY_RELU_SLOPE",
    "AdamState",
    "LSTMParams",
    "NonFiniteError",
    "ShapeError",
    "Tape",
    "Tensor",
    "TensorkitError",
    "adam_step",
    "add",
    "as_tensor",
    "bce",
    "bilstm_seq",
    "ce_over_positions",
    "concat",
    "dropout",
    "elementwise",
    "flip_rows",
    "gather_rows",
    "leaky_relu",
    "load_checkpoint",
    "lstm_seq",
    "matmul",
    "mul",
    "pool",
    "record",
    "reduce_max",
    "reduce_mean",
    "reduce_sum",
    "relu",
    "reshape",
    "restore_params",
    "rows",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "softmax",
    "sub",
    "tanh",
    "transpose",
]
