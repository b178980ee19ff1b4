from .tensor import (
    Tensor,
    cast,
    absolute,
    activation,
    add,
    add_scalar,
    backward,
    concat_channels,
    dense,
    div,
    elementwise,
    global_avg_pool,
    leaky_relu,
    mean_all,
    mul,
    neg,
    relu,
    reshape,
    scale,
    sigmoid,
    slice_channels,
    sub,
    sum_all,
    zero_grads,
)
from .conv import (
    avg_pool_patches,
    conv2d,
    crop_tl,
    gather_patches,
    reflect_pad_br,
    repeat_patches,
)
from .gradcheck import finite_diff_check, op_gradcheck_suite

__all__ = [
    "Tensor", "cast", "absolute", "activation", "add", "add_scalar", "backward",
    "concat_channels", "dense", "div", "elementwise", "global_avg_pool",
    "leaky_relu", "mean_all", "mul", "neg", "relu", "reshape", "scale",
    "sigmoid", "slice_channels", "sub", "sum_all", "zero_grads",
    "avg_pool_patches", "conv2d", "crop_tl", "gather_patches",
    "reflect_pad_br", "repeat_patches", "finite_diff_check",
    "op_gradcheck_suite",
]
