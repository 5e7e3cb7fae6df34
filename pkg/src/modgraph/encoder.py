"""Two-branch feature encoder turning records into graph node features.

The spatial branch normalizes the raw 2-channel I/Q record and applies a
width-3 convolution; the frequency branch collapses the spectrogram's bin
axis with a full-height convolution.  Fusion concatenates the branches,
mixes them with two pointwise convolutions (the first one normalized and
GeLU-activated), runs a bidirectional LSTM along the time axis, and
max-pools feature pairs so each of the ``n`` time steps ends up with a
``node_feat``-dimensional descriptor: the node-feature matrix of the
signal graph.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import BatchNorm1d, BiLSTM, Conv1d, Conv2d

__all__ = ["FeatureEncoder"]


class FeatureEncoder:
    def __init__(self, n_dft, out_channels, node_feat, rng, dtype=np.float32):
        self.n_dft = n_dft
        self.out_channels = out_channels
        self.node_feat = node_feat
        o = out_channels
        self.bn_iq = BatchNorm1d(2, rng, dtype)
        self.conv_iq = Conv1d(2, o, 3, rng, padding=1, dtype=dtype)
        self.conv_spec = Conv2d(1, o, (n_dft, 1), rng, dtype=dtype)
        self.fuse_inner = Conv1d(2 * o, 2 * o, 1, rng, dtype=dtype)
        self.fuse_bn = BatchNorm1d(2 * o, rng, dtype)
        self.fuse_outer = Conv1d(2 * o, 2 * o, 1, rng, dtype=dtype)
        self.lstm = BiLSTM(2 * o, node_feat, rng, dtype)

    # -- two input branches --------------------------------------------------

    def preprocess(self, frames, specs):
        """(B,2,n) records and (B,n_dft,n) spectrograms -> two (B,O,n) maps."""
        if frames.ndim != 3 or frames.shape[1] != 2:
            raise ad.ShapeError(f"encoder: expected (B,2,n) records, got {frames.shape}")
        if specs.ndim != 3 or specs.shape[1] != self.n_dft:
            raise ad.ShapeError(f"encoder: expected (B,{self.n_dft},n) spectrograms, got {specs.shape}")
        if frames.shape[0] != specs.shape[0] or frames.shape[2] != specs.shape[2]:
            raise ad.ShapeError(
                f"encoder: record/spectrogram batch mismatch {frames.shape} vs {specs.shape}")
        x_sd = self.conv_iq(self.bn_iq(frames))
        b, f, n = specs.shape
        x_fd = self.conv_spec(ad.reshape(specs, (b, 1, f, n)))
        x_fd = ad.reshape(x_fd, (b, self.out_channels, n))
        return x_sd, x_fd

    # -- fusion to node features ---------------------------------------------

    def fuse(self, x_sd, x_fd):
        """Two (B,O,n) branch maps -> (B,n,node_feat) node features."""
        z = ad.concat([x_sd, x_fd], axis=1)
        z = ad.gelu(self.fuse_bn(self.fuse_inner(z)))
        z = self.fuse_outer(z)
        seq = self.lstm(z)                  # (B, 2*node_feat, n)
        seq = ad.swapaxes(seq, 1, 2)        # (B, n, 2*node_feat)
        return ad.maxpool1d(seq, 2, 2)      # pool over the feature axis

    def __call__(self, frames, specs):
        return self.fuse(*self.preprocess(frames, specs))

    # -- bookkeeping -----------------------------------------------------------

    def _layers(self):
        return [("bn_iq", self.bn_iq), ("conv_iq", self.conv_iq),
                ("conv_spec", self.conv_spec), ("fuse_inner", self.fuse_inner),
                ("fuse_bn", self.fuse_bn), ("fuse_outer", self.fuse_outer),
                ("lstm", self.lstm)]

    def params(self):
        return [(f"{tag}.{nm}", p) for tag, layer in self._layers() for nm, p in layer.params()]

    def state(self):
        return [(f"{tag}.{nm}", p) for tag, layer in self._layers() for nm, p in layer.state()]

    def train(self):
        self.bn_iq.training = True
        self.fuse_bn.training = True

    def eval(self):
        self.bn_iq.training = False
        self.fuse_bn.training = False
