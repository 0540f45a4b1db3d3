"""U-Net style generator and full-sinogram discriminator."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers as L


@dataclass(frozen=True)
class GeneratorSpec:
    """Encoder/decoder with stride-2 5x5 convs and level-wise skip concatenation.

    Down levels: conv -> BN -> leaky ReLU. Up levels: transposed conv -> BN ->
    ReLU, with dropout after the last BN. A final stride-1 linear conv maps
    to one channel. With ``mask_channel`` the mask is fed as a second input
    channel next to the masked sinogram.
    """

    widths: tuple = (16, 32, 64)
    kernel: int = 5
    alpha: float = 0.2
    p_drop: float = 0.5
    mask_channel: bool = True
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 1:
            raise ValueError("generator needs at least one level")

    @property
    def depth(self):
        return len(self.widths)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "widths": tuple(d["widths"])})


@dataclass(frozen=True)
class DiscriminatorSpec:
    widths: tuple = (16, 32, 64)
    kernel: int = 5
    alpha: float = 0.2
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "widths": tuple(d["widths"])})


@dataclass
class Network:
    """Learnable ``params`` plus non-learnable ``buffers`` (BN running stats)."""

    spec: object
    params: dict
    buffers: dict = field(default_factory=dict)
    input_hw: tuple = ()

    def astype(self, dtype):
        return Network(
            self.spec,
            {k: v.astype(dtype) for k, v in self.params.items()},
            {k: v.astype(dtype) for k, v in self.buffers.items()},
            self.input_hw,
        )

    def copy(self):
        return self.astype(next(iter(self.params.values())).dtype)


def _add_bn(params, buffers, name, c, dtype):
    params[f"{name}.gamma"] = np.ones(c, dtype)
    params[f"{name}.beta"] = np.zeros(c, dtype)
    buffers[f"{name}.mean"] = np.zeros(c, dtype)
    buffers[f"{name}.var"] = np.ones(c, dtype)


def _gauss(rng, shape, dtype):
    return (rng.standard_normal(shape) * 0.02).astype(dtype)


def check_input_shape(spec, hw):
    h, w = hw
    f = 2 ** spec.depth
    if h % f or w % f:
        raise ValueError(f"sinogram dims {hw} must be divisible by 2**depth = {f}")


def init_generator(spec, input_hw, rng, dtype=np.float32):
    check_input_shape(spec, input_hw)
    k, ws, d = spec.kernel, spec.widths, spec.depth
    params, buffers = {}, {}
    c_in = 2 if spec.mask_channel else 1
    c = c_in
    for l in range(d):
        params[f"down{l}.w"] = _gauss(rng, (ws[l], c, k, k), dtype)
        params[f"down{l}.b"] = np.zeros(ws[l], dtype)
        _add_bn(params, buffers, f"down{l}.bn", ws[l], dtype)
        c = ws[l]
    for l in range(d):
        out = ws[d - 2 - l] if l < d - 1 else ws[0]
        if l > 0:
            c += ws[d - 1 - l]
        params[f"up{l}.w"] = _gauss(rng, (c, out, k, k), dtype)
        params[f"up{l}.b"] = np.zeros(out, dtype)
        _add_bn(params, buffers, f"up{l}.bn", out, dtype)
        c = out
    c += c_in
    params["final.w"] = _gauss(rng, (1, c, k, k), dtype)
    params["final.b"] = np.zeros(1, dtype)
    return Network(spec, params, buffers, tuple(input_hw))


def init_discriminator(spec, input_hw, rng, dtype=np.float32):
    h, w = input_hw[0] // 2, input_hw[1] // 2
    k = spec.kernel
    params, buffers = {}, {}
    c = 2
    for l, width in enumerate(spec.widths):
        params[f"conv{l}.w"] = _gauss(rng, (width, c, k, k), dtype)
        params[f"conv{l}.b"] = np.zeros(width, dtype)
        _add_bn(params, buffers, f"conv{l}.bn", width, dtype)
        c = width
        h, w = (h - 1) // 2 + 1, (w - 1) // 2 + 1
    params["head.w"] = _gauss(rng, (c * h * w, 1), dtype)
    params["head.b"] = np.zeros(1, dtype)
    return Network(spec, params, buffers, tuple(input_hw))


def _bn(net, name, h, train, caches):
    s = net.spec
    p, b = net.params, net.buffers
    out, cache = L.batchnorm_forward(
        h, p[f"{name}.gamma"], p[f"{name}.beta"], b[f"{name}.mean"], b[f"{name}.var"], train, s.bn_momentum, s.bn_eps
    )
    caches[name] = cache
    return out


def generator_forward(x, mask, net, train=False, rng=None):
    """Complete masked bins: returns ``(G(x), cache)`` with G(x) = x + M * x_D1.

    ``x`` and ``mask`` are (B, 1, H, W); unmasked bins of the result are
    copied from ``x`` unchanged.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ValueError(f"mask shape {mask.shape} does not match input {x.shape}")
    spec, p = net.spec, net.params
    check_input_shape(spec, x.shape[2:])
    d = spec.depth
    c = {}
    inp = np.concatenate([x, mask.astype(x.dtype)], axis=1) if spec.mask_channel else x
    skips = [inp]
    h = inp
    for l in range(d):
        h, c[f"down{l}.conv"] = L.conv_forward(h, p[f"down{l}.w"], p[f"down{l}.b"], 2, spec.kernel // 2)
        h = _bn(net, f"down{l}.bn", h, train, c)
        h, c[f"down{l}.act"] = L.leaky_relu_forward(h, spec.alpha)
        skips.append(h)
    for l in range(d):
        if l > 0:
            h, c[f"up{l}.cat"] = L.concat_forward([h, skips[d - l]])
        h, c[f"up{l}.conv"] = L.tconv_forward(h, p[f"up{l}.w"], p[f"up{l}.b"], 2, spec.kernel // 2)
        h = _bn(net, f"up{l}.bn", h, train, c)
        h, c[f"up{l}.act"] = L.relu_forward(h)
    h, c["drop"] = L.dropout_forward(h, spec.p_drop, train, rng)
    h, c["final.cat"] = L.concat_forward([h, inp])
    x_d1, c["final.conv"] = L.conv_forward(h, p["final.w"], p["final.b"], 1, spec.kernel // 2)
    out = np.where(mask, x + x_d1, x)
    c["mask"] = mask
    c["x_d1"] = x_d1
    return out, c


def generator_backward(dout, cache, net):
    """Parameter gradients of a scalar loss given dL/dG(x)."""
    spec = net.spec
    d = spec.depth
    c = cache
    g = {}
    dh = np.where(c["mask"], dout, 0).astype(dout.dtype)
    dh, g["final.w"], g["final.b"] = L.conv_backward(dh, c["final.conv"])
    dh, _ = L.concat_backward(dh, c["final.cat"])
    dh = L.dropout_backward(dh, c["drop"])
    dskips = {}
    for l in reversed(range(d)):
        dh = L.relu_backward(dh, c[f"up{l}.act"])
        dh, g[f"up{l}.bn.gamma"], g[f"up{l}.bn.beta"] = L.batchnorm_backward(dh, c[f"up{l}.bn"])
        dh, g[f"up{l}.w"], g[f"up{l}.b"] = L.tconv_backward(dh, c[f"up{l}.conv"])
        if l > 0:
            dh, dskips[d - l] = L.concat_backward(dh, c[f"up{l}.cat"])
    for l in reversed(range(d)):
        if l + 1 in dskips and l + 1 != d:
            dh = dh + dskips[l + 1]
        dh = L.leaky_relu_backward(dh, c[f"down{l}.act"])
        dh, g[f"down{l}.bn.gamma"], g[f"down{l}.bn.beta"] = L.batchnorm_backward(dh, c[f"down{l}.bn"])
        dh, g[f"down{l}.w"], g[f"down{l}.b"] = L.conv_backward(dh, c[f"down{l}.conv"])
    return {k: g[k] for k in net.params}


def discriminator_forward(x, candidate, net, train=True):
    """Probability that ``candidate`` is a real completion of ``x``; shape (B, 1)."""
    spec, p = net.spec, net.params
    c = {}
    xp, _ = L.avgpool2_forward(x)
    cp, c["pool"] = L.avgpool2_forward(candidate)
    h, c["cat"] = L.concat_forward([xp, cp])
    for l in range(len(spec.widths)):
        h, c[f"conv{l}.conv"] = L.conv_forward(h, p[f"conv{l}.w"], p[f"conv{l}.b"], 2, spec.kernel // 2)
        h = _bn(net, f"conv{l}.bn", h, train, c)
        h, c[f"conv{l}.act"] = L.leaky_relu_forward(h, spec.alpha)
    logit, c["head"] = L.affine_forward(h, p["head.w"], p["head.b"])
    prob, c["sigmoid"] = L.sigmoid_forward(logit)
    return prob, c


def discriminator_backward(dprob, cache, net):
    """Returns (parameter gradients, gradient w.r.t. the candidate)."""
    spec = net.spec
    c = cache
    g = {}
    dh = L.sigmoid_backward(dprob, c["sigmoid"])
    dh, g["head.w"], g["head.b"] = L.affine_backward(dh, c["head"])
    for l in reversed(range(len(spec.widths))):
        dh = L.leaky_relu_backward(dh, c[f"conv{l}.act"])
        dh, g[f"conv{l}.bn.gamma"], g[f"conv{l}.bn.beta"] = L.batchnorm_backward(dh, c[f"conv{l}.bn"])
        dh, g[f"conv{l}.w"], g[f"conv{l}.b"] = L.conv_backward(dh, c[f"conv{l}.conv"])
    _, dcp = L.concat_backward(dh, c["cat"])
    dcand = L.avgpool2_backward(dcp, c["pool"])
    return {k: g[k] for k in net.params}, dcand
