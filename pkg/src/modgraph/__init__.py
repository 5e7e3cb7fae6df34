"""Automatic modulation recognition with correlation-built signal graphs.

The package synthesizes I/Q frames through an impaired channel, lifts them
into node features with a convolutional/recurrent encoder, builds a banded
correlation graph over the time axis, and classifies with a stacked
GCN / differentiable-pooling / graph-attention network.  Everything runs on
an in-package numpy autodiff engine; the ``modgraph`` CLI covers dataset
synthesis, training, evaluation, ablations, and graph export.
"""

__version__ = "0.1.0"
