"""Trainable layers on top of the autodiff kernels.

Each layer owns its parameters as ``Tensor`` leaves (``requires_grad=True``)
and exposes them through ``params()`` as ordered ``(name, tensor)`` pairs;
``state()`` additionally yields non-trainable buffers (batch-norm running
statistics) in declaration order, which is the order checkpoints use.

Initialization follows the usual recipes: uniform Kaiming-style fan-in
scaling for convolution, linear, and LSTM input weights; orthogonal blocks
for LSTM recurrent weights; forget-gate bias 1.  Every layer draws from the
``numpy.random.Generator`` it is given, so construction order fixes the
initial state byte for byte.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = ["Linear", "Conv1d", "Conv2d", "BatchNorm1d", "BiLSTM"]


def _kaiming_uniform(rng, shape, fan_in, dtype):
    bound = float(np.sqrt(1.0 / fan_in))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _orthogonal(rng, n, dtype):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))  # fix the sign ambiguity so q is unique
    return q.astype(dtype)


class Linear:
    """Affine map ``y = x @ W + b`` acting on the trailing axis."""

    def __init__(self, in_features, out_features, rng, dtype=np.float32, bias=True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Tensor(_kaiming_uniform(rng, (in_features, out_features), in_features, dtype),
                             requires_grad=True)
        self.bias = None
        if bias:
            self.bias = Tensor(_kaiming_uniform(rng, (out_features,), in_features, dtype),
                               requires_grad=True)

    def __call__(self, x):
        y = ad.matmul(x, self.weight)
        if self.bias is not None:
            y = ad.add(y, self.bias)
        return y

    def params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def state(self):
        return self.params()


class Conv1d:
    def __init__(self, in_channels, out_channels, kernel, rng, stride=1, padding=0,
                 dtype=np.float32, bias=True):
        fan_in = in_channels * kernel
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(_kaiming_uniform(rng, (out_channels, in_channels, kernel), fan_in, dtype),
                             requires_grad=True)
        self.bias = Tensor(_kaiming_uniform(rng, (out_channels,), fan_in, dtype),
                           requires_grad=True) if bias else None

    def __call__(self, x):
        return ad.conv1d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def state(self):
        return self.params()


class Conv2d:
    def __init__(self, in_channels, out_channels, kernel, rng, stride=(1, 1), padding=(0, 0),
                 dtype=np.float32, bias=True):
        kh, kw = kernel
        fan_in = in_channels * kh * kw
        self.stride = stride
        self.padding = padding
        self.weight = Tensor(_kaiming_uniform(rng, (out_channels, in_channels, kh, kw), fan_in, dtype),
                             requires_grad=True)
        self.bias = Tensor(_kaiming_uniform(rng, (out_channels,), fan_in, dtype),
                           requires_grad=True) if bias else None

    def __call__(self, x):
        return ad.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)

    def params(self):
        out = [("weight", self.weight)]
        if self.bias is not None:
            out.append(("bias", self.bias))
        return out

    def state(self):
        return self.params()


class BatchNorm1d:
    """Per-channel normalization of (B, C, L) activations.

    Train mode normalizes with batch statistics (the graph differentiates
    through them) and updates running buffers; eval mode is a pure affine map
    using the frozen buffers.
    """

    def __init__(self, channels, rng, dtype=np.float32, eps=1e-5, momentum=0.1):
        del rng  # accepted for a uniform layer signature; BN init is deterministic
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.training = True
        self.weight = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def __call__(self, x):
        if x.ndim != 3 or x.shape[1] != self.channels:
            raise ad.ShapeError(f"batch_norm: expected (B,{self.channels},L), got {x.shape}")
        gamma = ad.reshape(self.weight, (1, self.channels, 1))
        beta = ad.reshape(self.bias, (1, self.channels, 1))
        if self.training:
            mean = ad.reduce_mean(x, axis=(0, 2), keepdims=True)
            centered = ad.sub(x, mean)
            var = ad.reduce_mean(ad.mul(centered, centered), axis=(0, 2), keepdims=True)
            inv = ad.power(ad.add(var, self.eps), -0.5)
            xhat = ad.mul(centered, inv)
            n = x.shape[0] * x.shape[2]
            unbias = n / max(n - 1, 1)
            m = self.momentum
            # in place, so checkpoint/state views stay valid across steps
            self.running_mean *= 1 - m
            self.running_mean += (m * mean.data.reshape(-1)).astype(self.running_mean.dtype)
            self.running_var *= 1 - m
            self.running_var += (m * unbias * var.data.reshape(-1)).astype(self.running_var.dtype)
        else:
            scale = (1.0 / np.sqrt(self.running_var + self.eps)).reshape(1, -1, 1)
            shift = (-self.running_mean).reshape(1, -1, 1)
            xhat = ad.mul(ad.add(x, shift.astype(x.dtype)), scale.astype(x.dtype))
        return ad.add(ad.mul(xhat, gamma), beta)

    def params(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def state(self):
        return self.params() + [("running_mean", self.running_mean), ("running_var", self.running_var)]


class BiLSTM:
    """Single-layer bidirectional LSTM over (B, C, L) sequences.

    Output is (B, 2*hidden, L): forward-direction features stacked on
    backward-direction features along the channel axis.  Gate layout follows
    the usual input/forget/cell/output order, with the forget bias at 1.
    """

    def __init__(self, input_size, hidden_size, rng, dtype=np.float32):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.dtype = dtype
        self._dir = []
        for _ in range(2):
            w_ih = _kaiming_uniform(rng, (input_size, 4 * hidden_size), input_size, dtype)
            blocks = [_orthogonal(rng, hidden_size, dtype) for _ in range(4)]
            w_hh = np.concatenate(blocks, axis=1)
            b = np.zeros(4 * hidden_size, dtype=dtype)
            b[hidden_size:2 * hidden_size] = 1.0
            self._dir.append((Tensor(w_ih, requires_grad=True),
                              Tensor(w_hh, requires_grad=True),
                              Tensor(b, requires_grad=True)))

    def _run(self, x, direction):
        w_ih, w_hh, b = self._dir[direction]
        batch, _, length = x.shape
        h = Tensor(np.zeros((batch, self.hidden_size), dtype=x.dtype))
        c = Tensor(np.zeros((batch, self.hidden_size), dtype=x.dtype))
        hs = []
        steps = range(length) if direction == 0 else range(length - 1, -1, -1)
        H = self.hidden_size
        for t in steps:
            xt = x[:, :, t]
            pre = ad.add(ad.add(ad.matmul(xt, w_ih), ad.matmul(h, w_hh)), b)
            i = ad.sigmoid(pre[:, 0:H])
            f = ad.sigmoid(pre[:, H:2 * H])
            g = ad.tanh(pre[:, 2 * H:3 * H])
            o = ad.sigmoid(pre[:, 3 * H:4 * H])
            c = ad.add(ad.mul(f, c), ad.mul(i, g))
            h = ad.mul(o, ad.tanh(c))
            hs.append(h)
        if direction == 1:
            hs.reverse()
        return ad.stack(hs, axis=2)  # (B, H, L)

    def __call__(self, x):
        if x.ndim != 3 or x.shape[1] != self.input_size:
            raise ad.ShapeError(f"bilstm: expected (B,{self.input_size},L), got {x.shape}")
        fwd = self._run(x, 0)
        bwd = self._run(x, 1)
        return ad.concat([fwd, bwd], axis=1)

    def params(self):
        names = ["w_ih", "w_hh", "bias"]
        out = []
        for d, triple in enumerate(self._dir):
            tag = "fwd" if d == 0 else "bwd"
            out.extend((f"{tag}.{nm}", t) for nm, t in zip(names, triple))
        return out

    def state(self):
        return self.params()
