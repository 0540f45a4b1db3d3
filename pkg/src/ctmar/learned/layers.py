"""Layer forward/backward pairs on (batch, channels, height, width) arrays.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. Arrays keep the dtype they
come in with, so the same code runs float32 training and float64
gradient checks.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _windows(x_pad, k, stride, out_h, out_w):
    win = sliding_window_view(x_pad, (k, k), axis=(2, 3))
    return win[:, :, : stride * out_h : stride, : stride * out_w : stride]


def _scatter(cols, out_pad, k, stride, h, w):
    # cols: (B, h, w, C, k, k) accumulated into out_pad: (B, C, H', W')
    for i in range(k):
        for j in range(k):
            out_pad[:, :, i : i + stride * h : stride, j : j + stride * w : stride] += cols[..., i, j].transpose(0, 3, 1, 2)


def conv_forward(x, w, b, stride=2, pad=2):
    """Cross-correlation with zero padding. ``w`` is (out, in, k, k)."""
    if x.ndim != 4 or x.shape[1] != w.shape[1]:
        raise ValueError(f"conv input {x.shape} does not match weight {w.shape}")
    k = w.shape[2]
    _, _, h, wd = x.shape
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (wd + 2 * pad - k) // stride + 1
    x_pad = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = _windows(x_pad, k, stride, out_h, out_w)
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    out = out + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out), (x.shape, win, w, stride, pad)


def conv_backward(dout, cache):
    x_shape, win, w, stride, pad = cache
    k = w.shape[2]
    db = dout.sum(axis=(0, 2, 3))
    dw = np.tensordot(dout, win, axes=([0, 2, 3], [0, 2, 3]))
    cols = np.tensordot(dout, w, axes=([1], [0]))
    b, c, h, wd = x_shape
    dx_pad = np.zeros((b, c, h + 2 * pad + stride, wd + 2 * pad + stride), dtype=dout.dtype)
    _scatter(cols, dx_pad, k, stride, dout.shape[2], dout.shape[3])
    dx = dx_pad[:, :, pad : pad + h, pad : pad + wd]
    return np.ascontiguousarray(dx), dw, db


def tconv_forward(x, w, b, stride=2, pad=2):
    """Transposed convolution (adjoint of ``conv_forward``), output ``stride`` x larger.

    ``w`` is (in, out, k, k).
    """
    if x.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ValueError(f"transposed conv input {x.shape} does not match weight {w.shape}")
    k = w.shape[2]
    bsz, _, h, wd = x.shape
    out_h, out_w = stride * h, stride * wd
    cols = np.tensordot(x, w, axes=([1], [0]))
    out_pad = np.zeros((bsz, w.shape[1], out_h + 2 * pad + k, out_w + 2 * pad + k), dtype=x.dtype)
    _scatter(cols, out_pad, k, stride, h, wd)
    out = out_pad[:, :, pad : pad + out_h, pad : pad + out_w] + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out), (x, w, stride, pad)


def tconv_backward(dout, cache):
    x, w, stride, pad = cache
    k = w.shape[2]
    _, _, h, wd = x.shape
    db = dout.sum(axis=(0, 2, 3))
    extra = k
    dout_pad = np.pad(dout, ((0, 0), (0, 0), (pad, pad + extra), (pad, pad + extra)))
    win = _windows(dout_pad, k, stride, h, wd)
    dx = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    dw = np.tensordot(x, win, axes=([0, 2, 3], [0, 2, 3]))
    return np.ascontiguousarray(dx), dw, db


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train, momentum=0.9, eps=1e-5):
    """Spatial batch norm. In train mode the running buffers are updated in place."""
    if train:
        n = x.shape[0] * x.shape[2] * x.shape[3]
        if n < 2:
            raise ValueError("batch norm in train mode needs batch*H*W >= 2")
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var * (n / (n - 1))
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(1, -1, 1, 1)) * inv_std.reshape(1, -1, 1, 1)
    out = gamma.reshape(1, -1, 1, 1) * xhat + beta.reshape(1, -1, 1, 1)
    return out.astype(x.dtype, copy=False), (xhat, gamma, inv_std, train)


def batchnorm_backward(dout, cache):
    xhat, gamma, inv_std, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(1, -1, 1, 1)
    if not train:
        return dxhat * inv_std.reshape(1, -1, 1, 1), dgamma, dbeta
    n = dout.shape[0] * dout.shape[2] * dout.shape[3]
    s1 = dxhat.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
    s2 = (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
    dx = (inv_std.reshape(1, -1, 1, 1) / n) * (n * dxhat - s1 - xhat * s2)
    return dx.astype(dout.dtype, copy=False), dgamma, dbeta


def leaky_relu_forward(x, alpha=0.2):
    pos = x > 0
    return np.where(pos, x, alpha * x), (pos, alpha)


def leaky_relu_backward(dout, cache):
    pos, alpha = cache
    return np.where(pos, dout, alpha * dout)


def relu_forward(x):
    pos = x > 0
    return np.where(pos, x, 0).astype(x.dtype, copy=False), pos


def relu_backward(dout, cache):
    return np.where(cache, dout, 0).astype(dout.dtype, copy=False)


def dropout_forward(x, p, train, rng=None):
    """Inverted dropout; identity in eval mode or when p == 0."""
    if not train or p == 0:
        return x, None
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / (1 - p)
    return x * keep, keep


def dropout_backward(dout, cache):
    return dout if cache is None else dout * cache


def sigmoid_forward(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out, out


def sigmoid_backward(dout, cache):
    return dout * cache * (1 - cache)


def concat_forward(xs):
    return np.concatenate(xs, axis=1), [x.shape[1] for x in xs]


def concat_backward(dout, cache):
    return np.split(dout, np.cumsum(cache)[:-1], axis=1)


def avgpool2_forward(x):
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError("2x average pooling needs even height and width")
    return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5)), x.shape


def avgpool2_backward(dout, cache):
    up = np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3)
    return (up * 0.25).astype(dout.dtype, copy=False)


def affine_forward(x, w, b):
    flat = x.reshape(x.shape[0], -1)
    return flat @ w + b, (x.shape, flat, w)


def affine_backward(dout, cache):
    shape, flat, w = cache
    return (dout @ w.T).reshape(shape), flat.T @ dout, dout.sum(axis=0)
