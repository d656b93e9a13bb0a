from .tensor import Tensor, Parameter, no_grad, is_taping, unbroadcast
from .rng import RngStream
from .ops import (
    contract,
    einsum,
    concat,
    stack,
    scatter_rows,
    relu,
    softplus,
    softmax,
    log_softmax,
    signed_sqrt,
    l2_normalize,
    activations,
    entmax15,
    keep_topk,
    topk_mask,
    normal_cdf,
    linear,
    conv2d,
    maxpool2d,
    cross_entropy,
)
from .gradcheck import gradcheck, GradcheckReport, relative_error

__all__ = [
    "Tensor",
    "Parameter",
    "no_grad",
    "is_taping",
    "unbroadcast",
    "RngStream",
    "contract",
    "einsum",
    "concat",
    "stack",
    "scatter_rows",
    "relu",
    "softplus",
    "softmax",
    "log_softmax",
    "signed_sqrt",
    "l2_normalize",
    "activations",
    "entmax15",
    "keep_topk",
    "topk_mask",
    "normal_cdf",
    "linear",
    "conv2d",
    "maxpool2d",
    "cross_entropy",
    "gradcheck",
    "GradcheckReport",
    "relative_error",
]
