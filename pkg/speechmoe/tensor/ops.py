from typing import Literal, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import norm

from speechmoe.constants import L2_EPS
from speechmoe.errors import ShapeError, ValidationError
from speechmoe.tensor.tensor import Tensor

ActivationKind = Literal["relu", "softmax", "softplus", "signed_sqrt", "l2_normalize"]


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ---------------------------------------------------------------------------
# contractions
# ---------------------------------------------------------------------------


def contract(a: Tensor, b: Tensor, axes: Sequence[tuple[int, int]]) -> Tensor:
    """
    Contract `a` and `b` over paired axes.

    The output carries the uncontracted axes of `a` followed by those of `b`. An empty
    `axes` gives the outer product; ((1, 0),) on two matrices is the matrix product.

    Args:
        a: left operand
        b: right operand
        axes: pairs (axis of a, axis of b) to sum over

    Raises:
        ShapeError: a paired axis has different sizes on the two sides
    """
    a, b = _wrap(a), _wrap(b)
    a_axes = [ax % a.ndim for ax, _ in axes]
    b_axes = [bx % b.ndim for _, bx in axes]
    for ax, bx in zip(a_axes, b_axes):
        if a.shape[ax] != b.shape[bx]:
            raise ShapeError(
                f"contract: axis {ax} of a has size {a.shape[ax]} "
                f"but axis {bx} of b has size {b.shape[bx]}"
            )
    a_free = [i for i in range(a.ndim) if i not in a_axes]
    b_free = [i for i in range(b.ndim) if i not in b_axes]
    out = np.tensordot(a.data, b.data, axes=(a_axes, b_axes))
    n_a_free = len(a_free)

    def grad_fn(g):
        g_b_free = list(range(n_a_free, g.ndim))
        ga = np.tensordot(g, b.data, axes=(g_b_free, b_free))
        ga = ga.transpose(np.argsort(a_free + a_axes))
        gb = np.tensordot(a.data, g, axes=(a_free, list(range(n_a_free))))
        gb = gb.transpose(np.argsort(b_axes + b_free))
        return ga, gb

    return Tensor(out, (a, b), grad_fn, "contract")


def einsum(subscripts: str, *operands: Tensor) -> Tensor:
    """Explicit-output einsum (`"ij,jk->ik"`) with gradients; no ellipsis, no repeated indices."""
    if "->" not in subscripts or "." in subscripts:
        raise ValidationError(f"einsum needs explicit output and no ellipsis: {subscripts!r}")
    lhs, output = subscripts.replace(" ", "").split("->")
    inputs = lhs.split(",")
    if len(inputs) != len(operands):
        raise ValidationError(f"einsum: {len(inputs)} subscripts for {len(operands)} operands")
    tensors = [_wrap(op) for op in operands]
    for sub, t in zip(inputs, tensors):
        if len(sub) != t.ndim or len(set(sub)) != len(sub):
            raise ShapeError(f"einsum: subscript {sub!r} does not fit operand shape {t.shape}")
    try:
        out = np.einsum(subscripts, *[t.data for t in tensors], optimize=True)
    except ValueError as e:
        raise ShapeError(f"einsum {subscripts!r}: {e}") from e

    def grad_fn(g):
        grads = []
        for k, target in enumerate(inputs):
            others = [inputs[j] for j in range(len(inputs)) if j != k] + [output]
            arrays = [tensors[j].data for j in range(len(inputs)) if j != k] + [g]
            present = set("".join(others))
            kept = "".join(c for c in target if c in present)
            gk = np.einsum(",".join(others) + "->" + kept, *arrays, optimize=True)
            # indices summed only inside operand k broadcast back
            for pos, c in enumerate(target):
                if c not in present:
                    gk = np.expand_dims(gk, pos)
            grads.append(np.broadcast_to(gk, tensors[k].shape).copy())
        return grads

    return Tensor(out, tuple(tensors), grad_fn, "einsum")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return np.split(g, splits, axis=axis)

    return Tensor(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), grad_fn, "concat"
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]

    def grad_fn(g):
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return Tensor(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), grad_fn, "stack")


def scatter_rows(values: Tensor, rows: np.ndarray, n_rows: int) -> Tensor:
    """Place `values` at `rows` of a zero tensor with `n_rows` rows."""
    rows = np.asarray(rows, dtype=np.int64)
    out = np.zeros((n_rows,) + values.shape[1:], dtype=np.float64)
    out[rows] = values.data
    return Tensor(out, (values,), lambda g: (g[rows],), "scatter_rows")


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def softplus(x: Tensor) -> Tensor:
    a = x.data
    out = np.logaddexp(0.0, a)
    sig = 0.5 * (1.0 + np.tanh(0.5 * a))
    return Tensor(out, (x,), lambda g: (g * sig,), "softplus")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along `axis`; -inf entries map to exact zeros."""
    a = x.data
    finite_max = np.max(np.where(np.isfinite(a), a, -np.inf), axis=axis, keepdims=True)
    finite_max = np.where(np.isfinite(finite_max), finite_max, 0.0)
    e = np.exp(a - finite_max)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor(out, (x,), grad_fn, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    a = x.data
    shifted = a - a.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def grad_fn(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor(out, (x,), grad_fn, "log_softmax")


def signed_sqrt(x: Tensor) -> Tensor:
    a = x.data
    out = np.sign(a) * np.sqrt(np.abs(a))
    # derivative 1 / (2 sqrt|a|); zero at a == 0 where it is undefined
    with np.errstate(divide="ignore"):
        deriv = np.where(a != 0, 0.5 / np.sqrt(np.abs(a)), 0.0)
    return Tensor(out, (x,), lambda g: (g * deriv,), "signed_sqrt")


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    """Divide by the L2 norm along `axis`; rows with norm below 1e-12 pass through unchanged."""
    a = x.data
    n = np.sqrt((a * a).sum(axis=axis, keepdims=True))
    small = n < L2_EPS
    safe = np.where(small, 1.0, n)
    out = np.where(small, a, a / safe)

    def grad_fn(g):
        normalized = (g - out * (g * out).sum(axis=axis, keepdims=True)) / safe
        return (np.where(small, g, normalized),)

    return Tensor(out, (x,), grad_fn, "l2_normalize")


def activations(x: Tensor, kind: ActivationKind, axis: int | None = None) -> Tensor:
    """Dispatch one of the named activations; softmax and l2_normalize need `axis`."""
    match kind:
        case "relu":
            return relu(x)
        case "softplus":
            return softplus(x)
        case "signed_sqrt":
            return signed_sqrt(x)
        case "softmax" | "l2_normalize":
            if axis is None:
                raise ValidationError(f"{kind} needs an axis")
            return softmax(x, axis) if kind == "softmax" else l2_normalize(x, axis)
        case _:
            raise ValidationError(f"Unknown activation: {kind}")


def entmax15_threshold(z: np.ndarray) -> np.ndarray:
    """
    Exact 1.5-entmax threshold along the last axis by sorting.

    Solves sum(max(0, z/2 - tau)^2) = 1 for tau; returns tau with a trailing axis of 1.
    """
    x = z / 2.0
    srt = -np.sort(-x, axis=-1)
    rho = np.arange(1, x.shape[-1] + 1, dtype=np.float64)
    mean = np.cumsum(srt, axis=-1) / rho
    mean_sq = np.cumsum(srt * srt, axis=-1) / rho
    ss = rho * (mean_sq - mean * mean)
    delta = np.clip((1.0 - ss) / rho, 0.0, None)
    tau = mean - np.sqrt(delta)
    support = np.sum(tau <= srt, axis=-1, keepdims=True)
    return np.take_along_axis(tau, support - 1, axis=-1)


def entmax15(logits: Tensor, axis: int = -1) -> Tensor:
    """
    1.5-entmax along `axis`: p = max(0, z/2 - tau)^2, on the simplex and possibly sparse.

    The gradient is defined on the support and is zero elsewhere.
    """
    z = np.moveaxis(logits.data, axis, -1)
    z = z - z.max(axis=-1, keepdims=True)
    tau = entmax15_threshold(z)
    y = np.clip(z / 2.0 - tau, 0.0, None) ** 2
    gppr = np.sqrt(y)
    out = np.moveaxis(y, -1, axis)

    def grad_fn(g):
        g = np.moveaxis(g, axis, -1)
        dx = g * gppr
        q = dx.sum(axis=-1, keepdims=True) / gppr.sum(axis=-1, keepdims=True)
        dx = dx - q * gppr
        return (np.moveaxis(dx, -1, axis),)

    return Tensor(out, (logits,), grad_fn, "entmax15")


def topk_mask(values: np.ndarray, k: int) -> np.ndarray:
    """Boolean mask of the k largest entries per row (last axis); ties go to the lower index."""
    order = np.argsort(-values, axis=-1, kind="stable")
    mask = np.zeros(values.shape, dtype=bool)
    np.put_along_axis(mask, order[..., :k], True, axis=-1)
    return mask


def keep_topk(x: Tensor, k: int) -> Tensor:
    """KeepTopK: entries outside the top k of the last axis become -inf."""
    mask = topk_mask(x.data, min(k, x.shape[-1]))
    out = np.where(mask, x.data, -np.inf)
    return Tensor(out, (x,), lambda g: (np.where(mask, g, 0.0),), "keep_topk")


def normal_cdf(x: Tensor) -> Tensor:
    a = x.data
    pdf = norm.pdf(a)
    return Tensor(norm.cdf(a), (x,), lambda g: (g * pdf,), "normal_cdf")


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map `x @ weight + bias`, weight stored as (in, out)."""
    x = _wrap(x)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"linear: input has {x.shape[-1]} features but weight expects {weight.shape[0]}"
        )
    squeeze = x.ndim == 1
    out = (x.reshape(1, -1) if squeeze else x) @ weight
    if bias is not None:
        out = out + bias
    return out.reshape(-1) if squeeze else out


def _as_batch(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 3:
        return x.reshape((1,) + x.shape), True
    if x.ndim != 4:
        raise ShapeError(f"expected a C×H×W or N×C×H×W image tensor, got shape {x.shape}")
    return x, False


def conv2d(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """
    2-D cross-correlation of a C×H×W (or batched N×C×H×W) input with O×C×kh×kw kernels.

    Raises:
        ShapeError: channel mismatch or a non-positive output size
    """
    x = _wrap(x)
    xb, squeezed = _as_batch(x)
    n, c, h, w = xb.shape
    o, kc, kh, kw = weight.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernels expect {kc}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(
            f"conv2d: output size {ho}×{wo} is not positive "
            f"(input {h}×{w}, kernel {kh}×{kw}, stride {stride}, padding {padding})"
        )
    xp = np.pad(xb.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][
        :, :, :ho, :wo
    ]
    wdata = weight.data
    out = np.tensordot(windows, wdata, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    padded_shape = xp.shape

    def grad_fn(g):
        gw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        gcols = np.tensordot(g, wdata, axes=([1], [0]))  # N×Ho×Wo×C×kh×kw
        gxp = np.zeros(padded_shape, dtype=np.float64)
        for i in range(kh):
            for j in range(kw):
                gxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        gx = gxp[:, :, padding : padding + h, padding : padding + w]
        return gx, gw

    result = Tensor(out, (xb, weight), grad_fn, "conv2d")
    if bias is not None:
        result = result + bias.reshape(1, o, 1, 1)
    return result.reshape(result.shape[1:]) if squeezed else result


def maxpool2d(x: Tensor, window: int, stride: int | None = None) -> Tensor:
    """Max pooling without padding; among equal maxima the first in row-major order wins."""
    stride = stride or window
    x = _wrap(x)
    xb, squeezed = _as_batch(x)
    n, c, h, w = xb.shape
    ho = (h - window) // stride + 1
    wo = (w - window) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"maxpool2d: window {window} does not fit input {h}×{w}")
    windows = sliding_window_view(xb.data, (window, window), axis=(2, 3))[
        :, :, ::stride, ::stride
    ][:, :, :ho, :wo]
    flat = windows.reshape(n, c, ho, wo, window * window)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    ni, ci, oi, oj = np.indices((n, c, ho, wo))
    rows = oi * stride + arg // window
    cols = oj * stride + arg % window
    shape = xb.shape

    def grad_fn(g):
        gx = np.zeros(shape, dtype=np.float64)
        np.add.at(gx, (ni, ci, rows, cols), g)
        return (gx,)

    result = Tensor(out, (xb,), grad_fn, "maxpool2d")
    return result.reshape(result.shape[1:]) if squeezed else result


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer `labels` under row-wise softmax of `logits`."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    logp = log_softmax(logits, axis=-1)
    picked = logp[np.arange(labels.shape[0]), labels]
    return -picked.mean()


__all__ = [
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
    "entmax15_threshold",
    "topk_mask",
    "keep_topk",
    "normal_cdf",
    "linear",
    "conv2d",
    "maxpool2d",
    "cross_entropy",
]
