from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .functional import (
    AttentionWeights,
    causal_mask,
    cross_entropy,
    gelu,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax,
    multi_head_attention,
    softmax,
    take_rows,
)
from .optim import OptimizerState, adamw_step, clip_grad_norm, cosine_lr
from .rng import make_rng
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    backward,
    broadcast_to,
    concat,
    div,
    exp,
    getitem,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    power,
    reshape,
    sqrt,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
)
