"""Forward/backward pairs for the layer set used by the glyph models.

All image tensors are batched ``(N, C, H, W)`` arrays. Unbatched ``(C, H, W)``
inputs are accepted by the forward functions and returned unbatched.
Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes ``(grad_output, cache)`` and returns input and parameter gradients.
Convolutions are cross-correlations (no kernel flip).
"""

from __future__ import annotations

import numpy as np

IN_EPS = 1e-5


class ShapeError(ValueError):
    pass


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected (C, H, W) or (N, C, H, W), got shape {x.shape}")
    return x, False


def _im2col3x3(xp: np.ndarray, h: int, w: int) -> np.ndarray:
    # xp: padded (N, C, h+2, w+2) -> columns (C*9, N*h*w); every slice write is contiguous
    n, c = xp.shape[:2]
    cols = np.empty((c, 3, 3, n, h, w), dtype=xp.dtype)
    xt = xp.transpose(1, 0, 2, 3)
    for dy in range(3):
        for dx in range(3):
            cols[:, dy, dx] = xt[:, :, dy:dy + h, dx:dx + w]
    return cols.reshape(c * 9, n * h * w)


def conv3x3_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    x, squeeze = _as_batch(x)
    n, c, h, w = x.shape
    if weight.shape[1:] != (c, 3, 3):
        raise ShapeError(f"conv3x3 weight {weight.shape} does not match {c} input channels")
    c_out = weight.shape[0]
    if bias.shape != (c_out,):
        raise ShapeError(f"conv3x3 bias {bias.shape} != ({c_out},)")
    cols = _im2col3x3(np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1))), h, w)
    out = (weight.reshape(c_out, -1) @ cols).reshape(c_out, n, h, w)
    out += bias[:, None, None, None]
    out = np.ascontiguousarray(out.transpose(1, 0, 2, 3))
    cache = (x.shape, cols, weight, squeeze)
    return (out[0] if squeeze else out), cache


def conv3x3_backward(dout: np.ndarray, cache):
    x_shape, cols, weight, squeeze = cache
    if squeeze:
        dout = dout[None]
    n, c, h, w = x_shape
    c_out = weight.shape[0]
    dflat = np.ascontiguousarray(dout.transpose(1, 0, 2, 3)).reshape(c_out, -1)
    dweight = (dflat @ cols.T).reshape(weight.shape)
    dbias = dflat.sum(axis=1)
    # col2im: scatter each kernel tap's contribution back onto the padded input
    dcols = (weight.reshape(c_out, -1).T @ dflat).reshape(c, 3, 3, n, h, w)
    dxp = np.zeros((c, n, h + 2, w + 2), dtype=dcols.dtype)
    for dy in range(3):
        for dx in range(3):
            dxp[:, :, dy:dy + h, dx:dx + w] += dcols[:, dy, dx]
    dx = np.ascontiguousarray(dxp[:, :, 1:-1, 1:-1].transpose(1, 0, 2, 3))
    return (dx[0] if squeeze else dx), dweight, dbias


def conv1x1_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    x, squeeze = _as_batch(x)
    if weight.shape[1] != x.shape[1]:
        raise ShapeError(f"conv1x1 weight {weight.shape} does not match {x.shape[1]} input channels")
    out = np.einsum("oc,nchw->nohw", weight, x, optimize=True) + bias[None, :, None, None]
    return (out[0] if squeeze else out), (x, weight, squeeze)


def conv1x1_backward(dout: np.ndarray, cache):
    x, weight, squeeze = cache
    if squeeze:
        dout = dout[None]
    dweight = np.einsum("nohw,nchw->oc", dout, x, optimize=True)
    dbias = dout.sum(axis=(0, 2, 3))
    dx = np.einsum("oc,nohw->nchw", weight, dout, optimize=True)
    return (dx[0] if squeeze else dx), dweight, dbias


def tconv2x2_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Stride-2 transpose convolution: each input cell scatters a scaled 2x2 kernel."""
    x, squeeze = _as_batch(x)
    n, c, h, w = x.shape
    if weight.shape[0] != c or weight.shape[2:] != (2, 2):
        raise ShapeError(f"tconv2x2 weight {weight.shape} does not match {c} input channels")
    c_out = weight.shape[1]
    xf = x.transpose(0, 2, 3, 1).reshape(-1, c)
    y = xf @ weight.reshape(c, -1)  # (N*h*w, c_out*4)
    y = y.reshape(n, h, w, c_out, 2, 2).transpose(0, 3, 1, 4, 2, 5).reshape(n, c_out, 2 * h, 2 * w)
    y = y + bias[None, :, None, None]
    return (y[0] if squeeze else y), (xf, x.shape, weight, squeeze)


def tconv2x2_backward(dout: np.ndarray, cache):
    xf, x_shape, weight, squeeze = cache
    if squeeze:
        dout = dout[None]
    n, c, h, w = x_shape
    c_out = weight.shape[1]
    dbias = dout.sum(axis=(0, 2, 3))
    dy = dout.reshape(n, c_out, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5).reshape(-1, c_out * 4)
    dweight = (xf.T @ dy).reshape(weight.shape)
    dx = (dy @ weight.reshape(c, -1).T).reshape(n, h, w, c).transpose(0, 3, 1, 2)
    dx = np.ascontiguousarray(dx)
    return (dx[0] if squeeze else dx), dweight, dbias


def instance_norm_forward(x: np.ndarray, gain: np.ndarray, shift: np.ndarray, eps: float = IN_EPS):
    """Per-sample, per-channel normalization with population variance, then affine."""
    x, squeeze = _as_batch(x)
    mean = x.mean(axis=(2, 3), keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = gain[None, :, None, None] * xhat + shift[None, :, None, None]
    return (out[0] if squeeze else out), (xhat, inv_std, gain, squeeze)


def instance_norm_backward(dout: np.ndarray, cache):
    xhat, inv_std, gain, squeeze = cache
    if squeeze:
        dout = dout[None]
    dgain = (dout * xhat).sum(axis=(0, 2, 3))
    dshift = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gain[None, :, None, None]
    mean_dxhat = dxhat.mean(axis=(2, 3), keepdims=True)
    mean_dxhat_xhat = (dxhat * xhat).mean(axis=(2, 3), keepdims=True)
    dx = inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat)
    return (dx[0] if squeeze else dx), dgain, dshift


def blurpool2x2_forward(x: np.ndarray):
    """Mean over disjoint 2x2 tiles (box [1,1] x [1,1] / 4 filter, stride 2)."""
    x, squeeze = _as_batch(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"blurpool2x2 needs even spatial dims, got {h}x{w}")
    out = x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return (out[0] if squeeze else out), (x.shape, squeeze)


def blurpool2x2_backward(dout: np.ndarray, cache):
    x_shape, squeeze = cache
    if squeeze:
        dout = dout[None]
    n, c, h, w = x_shape
    dx = np.broadcast_to(dout[:, :, :, None, :, None] * 0.25, (n, c, h // 2, 2, w // 2, 2))
    dx = dx.reshape(x_shape)
    return dx[0] if squeeze else dx


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask: np.ndarray):
    return dout * mask


def _floating(x) -> np.ndarray:
    x = np.asarray(x)
    return x if x.dtype.kind == "f" else x.astype(np.float64)


def sigmoid(x):
    x = _floating(x)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x: np.ndarray):
    y = sigmoid(x)
    return y, y


def sigmoid_backward(dout: np.ndarray, y: np.ndarray):
    return dout * y * (1.0 - y)


def softplus(x):
    # log(1 + exp(x)) without overflow
    x = _floating(x)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def linear_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """``weight`` is (out, in); ``x`` is (in,) or (N, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear weight {weight.shape} does not accept input of width {x.shape[-1]}")
    if bias.shape != (weight.shape[0],):
        raise ShapeError(f"linear bias {bias.shape} != ({weight.shape[0]},)")
    return x @ weight.T + bias, (x, weight)


def linear_backward(dout: np.ndarray, cache):
    x, weight = cache
    if x.ndim == 1:
        return weight.T @ dout, np.outer(dout, x), dout.copy()
    return dout @ weight, dout.T @ x, dout.sum(axis=0)


# Un-cached conveniences, mirroring the primitive names.

def conv3x3(x, weight, bias):
    return conv3x3_forward(x, weight, bias)[0]


def tconv2x2(x, weight, bias):
    return tconv2x2_forward(x, weight, bias)[0]


def instance_norm(x, gain, shift, eps: float = IN_EPS):
    return instance_norm_forward(x, gain, shift, eps)[0]


def blurpool2x2(x):
    return blurpool2x2_forward(x)[0]


def relu(x):
    return np.maximum(x, 0)


def fully_connected(x, weight, bias):
    return linear_forward(_floating(x), weight, bias)[0]
