"""
How a frame becomes a graph
===========================

Walks one batch of frames through the front half of the network and pokes
at every intermediate object: node features, the banded adjacency, its
distance/KNN alternatives, the soft pooling assignments, and the attention
weights. Nothing here is trained; the point is the plumbing.

    python3 demos/graph_anatomy.py
"""

import numpy as np

from modgraph import autodiff as ad
from modgraph import dsp, graphbuild, synth
from modgraph.model import GraphClassifier, ModelConfig

# ---------------------------------------------------------------------------
# 1. frames in, node features out
# ---------------------------------------------------------------------------

schemes = synth.default_schemes()
channel = synth.channel_preset("rml16-like")
frames = []
for seed, name in enumerate(("BPSK", "QAM16", "WBFM")):
    fr = synth.synthesize_frame(schemes[name], 18, channel, seed)
    frames.append(np.stack([fr.i, fr.q]))
frames = np.stack(frames)
specs = dsp.dstft_batch(frames[:, 0], frames[:, 1], n_dft=128, win_len=32)
print(f"frames {frames.shape}, spectrograms {specs.shape}")

cfg = ModelConfig(n_classes=11)
net = GraphClassifier(cfg, seed=0)
trace = {}
with ad.no_grad():
    net.forward(frames, specs, trace=trace)

nodes = trace["nodes"]
print(f"encoder emits {nodes.shape[1]} nodes with {nodes.shape[2]} features each")
print()

# ---------------------------------------------------------------------------
# 2. the adjacency is a band, not a blob
# ---------------------------------------------------------------------------

a = trace["adjacency"][0][0]          # first frame's input graph
offsets = np.abs(np.subtract.outer(np.arange(cfg.n_nodes), np.arange(cfg.n_nodes)))
print(f"input adjacency {a.shape}, tau = {cfg.tau}")
print(f"  nonzeros inside the band:  {np.count_nonzero(a[(offsets > 0) & (offsets <= cfg.tau)])}")
print(f"  nonzeros outside the band: {np.count_nonzero(a[offsets > cfg.tau])}")
print(f"  symmetric: {np.array_equal(a, a.T)}")

# the alternative constructions on the same node features
x = nodes[0]
dist = graphbuild.adjacency_distance(x, cfg.tau)
knn = graphbuild.adjacency_knn(x, cfg.knn_k)
print(f"  distance variant keeps the band, weights in (0, 1]: "
      f"max {dist.max():.3f}, min nonzero {dist[dist > 0].min():.2e}")
print(f"  knn variant: {np.count_nonzero(knn)} directed-edge slots filled, "
      f"min row degree {int((knn > 0).sum(axis=1).min())}")
print()

# ---------------------------------------------------------------------------
# 3. coarsening: 128 nodes -> 32 -> 8
# ---------------------------------------------------------------------------

sizes = [adj.shape[-1] for adj in trace["adjacency"]]
print("node counts per stage:", " -> ".join(str(s) for s in sizes))
s0 = trace["assign"][0][0]
print(f"first assignment matrix {s0.shape}: every row is a distribution "
      f"(row sums within {np.max(np.abs(s0.sum(axis=1) - 1)):.1e} of 1)")
share = s0.sum(axis=0) / s0.shape[0]
print("cluster occupancy (fraction of nodes):",
      np.array2string(np.sort(share)[::-1][:5], precision=3), "...")

alpha = trace["attention"][0][0]
print(f"attention over the coarse graph {alpha.shape}: rows sum to 1, "
      f"max off-diagonal weight {np.max(alpha - np.diag(np.diag(alpha))):.3f}")
print()

# ---------------------------------------------------------------------------
# 4. export for inspection elsewhere
# ---------------------------------------------------------------------------

import tempfile
from pathlib import Path

out = Path(tempfile.mkdtemp()) / "frame0"
edges_path, nodes_path = graphbuild.export_graph(nodes[0], a, out, threshold=0.05)
n_edges = sum(1 for _ in open(edges_path)) - 1
print(f"wrote {nodes_path.name} and {edges_path.name} ({n_edges} edges kept "
      f"above weight 0.05) under {out.parent}")
