"""Differentiable numeric primitives shared by all models.

Every operation works on float64 arrays with time on axis -2 and channels on
axis -1; leading batch dimensions are allowed and broadcast through. Forward
passes are pure functions, and each has a hand-written backward companion that
is checked against central finite differences (see `gradcheck`).
"""

from dataclasses import dataclass, field

import numpy as np

from .validation import InvalidShapeError

FD_STEP = 1e-5
GRAD_TOL = 1e-4


@dataclass
class LayerGrads:
    """Parameter gradients keyed by name, plus the gradient w.r.t. the input."""

    params: dict = field(default_factory=dict)
    input_grad: np.ndarray | None = None


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _conv_pads(kernel_size, dilation, padding):
    span = (kernel_size - 1) * dilation
    if padding == "causal":
        return span, 0
    if padding == "same":
        return span - span // 2, span // 2
    raise ValueError(f"unknown padding {padding!r}")


def conv1d(x, kernel, bias=None, dilation=1, padding="causal"):
    """1D convolution along axis -2.

    x: (..., T, Cin), kernel: (K, Cin, Cout), bias: (Cout,) or None.
    Causal padding zero-pads on the left so the output at time t depends only
    on inputs at times <= t; "same" padding centers the taps. Output length
    always equals the input length.
    """
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if dilation < 1:
        raise ValueError("dilation must be >= 1")
    if x.shape[-1] != kernel.shape[1]:
        raise InvalidShapeError(
            f"input has {x.shape[-1]} channels but kernel expects {kernel.shape[1]}"
        )
    ksize = kernel.shape[0]
    t_len = x.shape[-2]
    left, right = _conv_pads(ksize, dilation, padding)
    pad_spec = [(0, 0)] * (x.ndim - 2) + [(left, right), (0, 0)]
    xp = np.pad(x, pad_spec)
    out = np.zeros(x.shape[:-1] + (kernel.shape[2],))
    for k in range(ksize):
        out += xp[..., k * dilation : k * dilation + t_len, :] @ kernel[k]
    if bias is not None:
        out += bias
    return out


def conv1d_backward(x, kernel, dilation, grad_out, padding="causal"):
    """Gradients of `conv1d` w.r.t. kernel, bias and input."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape[:-1] != x.shape[:-1] or grad_out.shape[-1] != kernel.shape[2]:
        raise InvalidShapeError("upstream gradient shape does not match forward output")
    ksize = kernel.shape[0]
    t_len = x.shape[-2]
    left, right = _conv_pads(ksize, dilation, padding)
    pad_spec = [(0, 0)] * (x.ndim - 2) + [(left, right), (0, 0)]
    xp = np.pad(x, pad_spec)

    d_kernel = np.empty_like(kernel)
    d_xp = np.zeros_like(xp)
    flat_g = grad_out.reshape(-1, grad_out.shape[-1])
    for k in range(ksize):
        sl = xp[..., k * dilation : k * dilation + t_len, :]
        d_kernel[k] = sl.reshape(-1, sl.shape[-1]).T @ flat_g
        d_xp[..., k * dilation : k * dilation + t_len, :] += grad_out @ kernel[k].T
    d_bias = flat_g.sum(axis=0)
    d_x = d_xp[..., left : left + t_len, :]
    return LayerGrads({"kernel": d_kernel, "bias": d_bias}, d_x)


def conv1d_causal(x, kernel, bias=None, dilation=1):
    """Dilated causal convolution (left zero-padding, length-preserving)."""
    return conv1d(x, kernel, bias, dilation, padding="causal")


def conv1d_causal_backward(x, kernel, dilation, grad_out):
    return conv1d_backward(x, kernel, dilation, grad_out, padding="causal")


# ---------------------------------------------------------------------------
# dense / activations
# ---------------------------------------------------------------------------

def dense(x, weight, bias=None):
    """Affine map on the last axis: x @ weight + bias."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.shape[-1] != weight.shape[0]:
        raise InvalidShapeError(
            f"input size {x.shape[-1]} does not match weight rows {weight.shape[0]}"
        )
    out = x @ weight
    if bias is not None:
        out += bias
    return out


def dense_backward(x, weight, grad_out):
    x = np.asarray(x, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    flat_x = x.reshape(-1, x.shape[-1])
    flat_g = grad_out.reshape(-1, grad_out.shape[-1])
    d_weight = flat_x.T @ flat_g
    d_bias = flat_g.sum(axis=0)
    d_x = grad_out @ np.asarray(weight).T
    return LayerGrads({"weight": d_weight, "bias": d_bias}, d_x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def activation(x, kind):
    """Elementwise nonlinearity: one of sigmoid, tanh, relu."""
    if kind == "sigmoid":
        return sigmoid(x)
    if kind == "tanh":
        return np.tanh(np.asarray(x, dtype=np.float64))
    if kind == "relu":
        return relu(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(x, kind, grad_out):
    """Gradient of `activation` w.r.t. its input."""
    x = np.asarray(x, dtype=np.float64)
    if kind == "sigmoid":
        s = sigmoid(x)
        return grad_out * s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(x)
        return grad_out * (1.0 - t * t)
    if kind == "relu":
        return grad_out * (x > 0)
    raise ValueError(f"unknown activation {kind!r}")


# ---------------------------------------------------------------------------
# pooling / upsampling
# ---------------------------------------------------------------------------

def maxpool1d(x, pool=2):
    """Non-overlapping max pooling along axis -2; output length floor(T/pool)."""
    x = np.asarray(x, dtype=np.float64)
    t_len = x.shape[-2]
    if t_len < pool:
        raise InvalidShapeError(f"cannot pool length {t_len} with pool size {pool}")
    t_out = t_len // pool
    xr = x[..., : t_out * pool, :].reshape(x.shape[:-2] + (t_out, pool, x.shape[-1]))
    return xr.max(axis=-2)


def maxpool1d_backward(x, pool, grad_out):
    """Route the upstream gradient to the argmax of each window.

    Ties resolve to the first maximal index, so the backward pass is
    deterministic.
    """
    x = np.asarray(x, dtype=np.float64)
    t_len = x.shape[-2]
    t_out = t_len // pool
    xr = x[..., : t_out * pool, :].reshape(x.shape[:-2] + (t_out, pool, x.shape[-1]))
    arg = xr.argmax(axis=-2)
    d_xr = np.zeros_like(xr)
    np.put_along_axis(
        d_xr,
        arg[..., np.newaxis, :],
        np.asarray(grad_out)[..., np.newaxis, :],
        axis=-2,
    )
    d_x = np.zeros_like(x)
    d_x[..., : t_out * pool, :] = d_xr.reshape(x.shape[:-2] + (t_out * pool, x.shape[-1]))
    return d_x


def upsample1d(x, factor=2):
    """Nearest-neighbor repetition along axis -2."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    return np.repeat(np.asarray(x, dtype=np.float64), factor, axis=-2)


def upsample1d_backward(x, factor, grad_out):
    g = np.asarray(grad_out, dtype=np.float64)
    t_in = np.asarray(x).shape[-2]
    gr = g.reshape(g.shape[:-2] + (t_in, factor, g.shape[-1]))
    return gr.sum(axis=-2)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def glorot_uniform(rng, shape, fan_in, fan_out):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

def numeric_gradient(f, x, step=FD_STEP):
    """Central finite differences of scalar f w.r.t. every element of x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def max_relative_error(analytic, numeric, floor=1e-6):
    """Worst-case elementwise relative error with a small absolute floor."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def check_gradients(loss_and_grads, tensors, step=FD_STEP):
    """Compare analytic gradients against central finite differences.

    `loss_and_grads()` must return (scalar loss, {name: gradient}) computed
    from the current contents of `tensors` ({name: ndarray}); the arrays are
    perturbed in place. Returns the worst relative error over all tensors.
    """
    loss, analytic = loss_and_grads()
    del loss
    worst = 0.0
    for name, arr in tensors.items():
        numeric = numeric_gradient(lambda: loss_and_grads()[0], arr, step)
        worst = max(worst, max_relative_error(analytic[name], numeric))
    return worst


def _gradcheck_dense(rng):
    x = rng.standard_normal((3, 5))
    weight = rng.standard_normal((5, 4))
    bias = rng.standard_normal(4)
    g = rng.standard_normal((3, 4))

    def run():
        out = dense(x, weight, bias)
        grads = dense_backward(x, weight, g)
        return float(np.sum(out * g)), {
            "x": grads.input_grad,
            "weight": grads.params["weight"],
            "bias": grads.params["bias"],
        }

    return run, {"x": x, "weight": weight, "bias": bias}


def _gradcheck_conv(rng):
    x = rng.standard_normal((2, 9, 3))
    kernel = rng.standard_normal((2, 3, 4))
    bias = rng.standard_normal(4)
    g = rng.standard_normal((2, 9, 4))

    def run():
        out = conv1d_causal(x, kernel, bias, dilation=2)
        grads = conv1d_causal_backward(x, kernel, 2, g)
        return float(np.sum(out * g)), {
            "x": grads.input_grad,
            "kernel": grads.params["kernel"],
            "bias": grads.params["bias"],
        }

    return run, {"x": x, "kernel": kernel, "bias": bias}


def _gradcheck_gated_conv(rng):
    x = rng.standard_normal((2, 8, 3))
    filt = rng.standard_normal((2, 3, 3))
    gate = rng.standard_normal((2, 3, 3))
    g = rng.standard_normal((2, 8, 3))

    def run():
        f_pre = conv1d_causal(x, filt, None, dilation=1)
        g_pre = conv1d_causal(x, gate, None, dilation=1)
        th, sg = np.tanh(f_pre), sigmoid(g_pre)
        z = th * sg
        dz = g
        d_f = dz * sg * (1.0 - th * th)
        d_g = dz * th * sg * (1.0 - sg)
        gf = conv1d_causal_backward(x, filt, 1, d_f)
        gg = conv1d_causal_backward(x, gate, 1, d_g)
        return float(np.sum(z * g)), {
            "x": gf.input_grad + gg.input_grad,
            "filter": gf.params["kernel"],
            "gate": gg.params["kernel"],
        }

    return run, {"x": x, "filter": filt, "gate": gate}


def _gradcheck_wave_block(rng):
    from . import wavenet

    return wavenet.gradcheck_case(rng)


def _gradcheck_lstm_cell(rng):
    from . import lstm

    return lstm.gradcheck_case(rng)


_GRADCHECK_CASES = {
    "dense": _gradcheck_dense,
    "conv1d_causal": _gradcheck_conv,
    "gated_conv": _gradcheck_gated_conv,
    "wave_block": _gradcheck_wave_block,
    "lstm_cell": _gradcheck_lstm_cell,
}


def gradcheck(layer, seed=0, step=FD_STEP):
    """Finite-difference check of a named layer; returns max relative error.

    Layers: dense, conv1d_causal, gated_conv, wave_block, lstm_cell.
    """
    if layer not in _GRADCHECK_CASES:
        raise ValueError(f"unknown gradcheck layer {layer!r}")
    rng = np.random.default_rng(seed)
    run, tensors = _GRADCHECK_CASES[layer](rng)
    return check_gradients(run, tensors, step)
