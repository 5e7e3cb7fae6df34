"""
Train a small classifier end to end
===================================

Synthesizes a three-class dataset, trains a reduced model for a few epochs,
and prints the evaluation report. Takes around a minute on a laptop CPU.

    python3 demos/train_small.py
"""

import time

import numpy as np

from modgraph import metrics, synth
from modgraph.model import GraphClassifier, ModelConfig
from modgraph.training import TrainConfig, split_dataset, train_model

# ---------------------------------------------------------------------------
# 1. data: three easily separable schemes at two noise levels
# ---------------------------------------------------------------------------

table = synth.default_schemes()
ds = synth.synthesize_dataset(
    [table[n] for n in ("BPSK", "PAM4", "GFSK")],
    snrs_db=(10, 18), frames_per_cell=150,
    channel=synth.channel_preset("rml16-like"), seed=0)
train_idx, val_idx, test_idx = split_dataset(ds, seed=0)
print(f"{ds.n_records} frames: {len(train_idx)} train / "
      f"{len(val_idx)} val / {len(test_idx)} test")

# ---------------------------------------------------------------------------
# 2. a reduced model: fewer features and a shallower stack than the default
# ---------------------------------------------------------------------------

cfg = ModelConfig(n_classes=3, n_nodes=128, node_feat=8, out_channels=8,
                  tau=7, gcn_layers=2, pool_layers=2, coarsen=4, hidden=16,
                  n_dft=64, win_len=32)
net = GraphClassifier(cfg, seed=0)
print(f"model: {net.param_count()} parameters, "
      f"{cfg.n_nodes} -> {cfg.n_nodes // cfg.coarsen} -> "
      f"{cfg.n_nodes // cfg.coarsen ** 2} nodes")
print()

# ---------------------------------------------------------------------------
# 3. train
# ---------------------------------------------------------------------------

start = time.monotonic()
result = train_model(net, ds, train_idx, val_idx,
                     TrainConfig(lr=2e-3, batch_size=64, epochs=14, seed=0),
                     log=print)
print(f"\nbest epoch {result.best_epoch} "
      f"(val loss {result.best_val_loss:.4f}), "
      f"{time.monotonic() - start:.0f}s elapsed")
print()

# ---------------------------------------------------------------------------
# 4. evaluate on the held-out split
# ---------------------------------------------------------------------------

report = metrics.evaluate_model(net, ds, test_idx)
print(report.summary_text())
print("confusion matrix (rows true, columns predicted):")
print(np.array2string(report.confusion))
