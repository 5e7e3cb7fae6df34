"""The graph classifier: stacked GCNs, soft cluster pooling, attention.

Pipeline per batch: the encoder lifts records to node features, a banded
correlation adjacency is built over the time axis, and ``pool_layers``
blocks each (i) embed nodes with a ``gcn_layers``-deep GCN stack, (ii)
coarsen the graph with a learned soft cluster assignment (row-softmax of a
linear head over a second GCN stack), shrinking the node count by
``coarsen``, and (iii) reweight the coarse nodes with masked graph
attention.  A final GCN layer, a global average over nodes, and a linear
head produce class logits.

Ablation variants: ``no-gat`` drops step (iii), ``no-diffpool`` keeps all
nodes and applies attention on the uncoarsened graph, ``gcn-only`` replaces
(ii)+(iii) with strided mean pooling of both features and adjacency.

Checkpoints are a small binary format (magic ``STFW``): a key=value config
block that rebuilds the architecture, then every state tensor in
declaration order as (rank:i32, dims:i32..., float32 little-endian data).
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from . import graphbuild
from .autodiff import Tensor
from .encoder import FeatureEncoder
from .nn import Linear, _kaiming_uniform

__all__ = [
    "ModelConfig", "GraphClassifier", "gcn_propagate", "GraphAttention",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
    "CKPT_MAGIC", "CKPT_VERSION",
]

CKPT_MAGIC = b"STFW"
CKPT_VERSION = 1

VARIANTS = ("full", "no-gat", "no-diffpool", "gcn-only")
ADJACENCIES = ("correlation", "distance", "knn")


@dataclass
class ModelConfig:
    n_classes: int = 11
    n_nodes: int = 128
    node_feat: int = 16       # per-node feature width out of the encoder
    out_channels: int = 16    # width of each encoder branch
    tau: int = 11             # adjacency band half-width
    gcn_layers: int = 4       # depth of each GCN stack
    pool_layers: int = 2      # number of pool/attention blocks
    coarsen: int = 4          # node-count divisor per block
    hidden: int = 128         # GCN stack width
    leaky_slope: float = 0.2
    n_dft: int = 128
    win_len: int = 32
    adjacency: str = "correlation"
    knn_k: int = 8
    variant: str = "full"
    aux_losses: bool = False
    zero_iq: bool = False
    zero_freq: bool = False

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.adjacency not in ADJACENCIES:
            raise ValueError(f"adjacency must be one of {ADJACENCIES}, got {self.adjacency!r}")
        if min(self.n_classes, self.node_feat, self.out_channels, self.hidden,
               self.gcn_layers, self.pool_layers) < 1:
            raise ValueError("ModelConfig: layer sizes must be positive")
        if not 1 <= self.tau < self.n_nodes:
            raise ValueError(f"ModelConfig: need 1 <= tau < n_nodes, got tau={self.tau}")
        if self.variant != "no-diffpool":
            if self.coarsen < 2:
                raise ValueError("ModelConfig: coarsen must be >= 2")
            if self.n_nodes % self.coarsen ** self.pool_layers:
                raise ValueError(
                    f"ModelConfig: n_nodes={self.n_nodes} not divisible by "
                    f"coarsen^pool_layers={self.coarsen ** self.pool_layers}")
        if self.n_dft < self.win_len or self.win_len < 4:
            raise ValueError("ModelConfig: need n_dft >= win_len >= 4")
        if self.adjacency == "knn" and not 1 <= self.knn_k < self.n_nodes:
            raise ValueError("ModelConfig: need 1 <= knn_k < n_nodes")
        return self


def gcn_propagate(x, a, theta):
    """Symmetrically normalized graph convolution.

    Self-loops are added, degrees recomputed from the augmented adjacency,
    and the propagation is ``D^-1/2 (a+I) D^-1/2 x theta`` (no bias).
    """
    n = a.shape[-1]
    if a.shape[-2] != n or x.shape[-2] != n:
        raise ad.ShapeError(f"gcn: adjacency {a.shape} does not match features {x.shape}")
    ahat = ad.add(a, Tensor(np.eye(n, dtype=a.dtype)))
    dinv = ad.power(ad.reduce_sum(ahat, axis=-1), -0.5)
    left = ad.reshape(dinv, dinv.shape + (1,))
    right = ad.reshape(dinv, dinv.shape[:-1] + (1, n))
    p = ad.mul(ad.mul(ahat, left), right)
    return ad.matmul(ad.matmul(p, x), theta)


class GcnStack:
    """``len(dims)-1`` chained GCN layers; ReLU after each except, when
    ``relu_last`` is false, the final one (embedding head)."""

    def __init__(self, dims, rng, dtype, relu_last):
        self.relu_last = relu_last
        self.thetas = [Tensor(_kaiming_uniform(rng, (dims[k], dims[k + 1]), dims[k], dtype),
                              requires_grad=True)
                       for k in range(len(dims) - 1)]

    def __call__(self, x, a):
        last = len(self.thetas) - 1
        for k, theta in enumerate(self.thetas):
            x = gcn_propagate(x, a, theta)
            if k != last or self.relu_last:
                x = ad.relu(x)
        return x

    def params(self):
        return [(f"theta{k}", t) for k, t in enumerate(self.thetas)]


class GraphAttention:
    """Single-head masked graph attention.

    Scores ``leaky_relu(b1.Wx_i + b2.Wx_j)`` are softmax-normalized over
    each node's neighbourhood (positive adjacency entries plus itself), and
    nodes are replaced by the attention-weighted combination of projected
    neighbours; an isolated node attends only to itself.
    """

    def __init__(self, dim, rng, dtype, slope=0.2):
        self.dim = dim
        self.slope = slope
        self.weight = Tensor(_kaiming_uniform(rng, (dim, dim), dim, dtype), requires_grad=True)
        self.attn = Tensor(_kaiming_uniform(rng, (2 * dim, 1), 2 * dim, dtype), requires_grad=True)

    def __call__(self, x, a):
        hw = ad.matmul(x, self.weight)                       # (B, n, dim)
        e_src = ad.matmul(hw, self.attn[: self.dim, :])      # score part from node i
        e_dst = ad.matmul(hw, self.attn[self.dim:, :])       # score part from node j
        e = ad.leaky_relu(ad.add(e_src, ad.swapaxes(e_dst, -1, -2)), self.slope)
        adata = a.data if isinstance(a, Tensor) else np.asarray(a)
        mask = (adata > 0) | np.eye(adata.shape[-1], dtype=bool)
        alpha = ad.masked_softmax(e, np.broadcast_to(mask, e.shape), axis=-1)
        return ad.matmul(alpha, hw), alpha

    def params(self):
        return [("weight", self.weight), ("attn", self.attn)]


class PoolBlock:
    """One coarsening block: embed stack, soft cluster pooling, attention."""

    def __init__(self, in_dim, hidden, gcn_layers, n_next, rng, dtype, slope, variant):
        self.variant = variant
        self.n_next = n_next
        stack_dims = [in_dim] + [hidden] * gcn_layers
        self.z_stack = GcnStack(stack_dims, rng, dtype, relu_last=False)
        self.s_stack = None
        self.s_head = None
        self.gat = None
        if variant in ("full", "no-gat"):
            self.s_stack = GcnStack(stack_dims, rng, dtype, relu_last=True)
            self.s_head = Linear(hidden, n_next, rng, dtype=dtype)
        if variant in ("full", "no-diffpool"):
            self.gat = GraphAttention(hidden, rng, dtype, slope)

    def __call__(self, x, a, aux=None, trace=None):
        z = self.z_stack(x, a)
        if self.s_stack is not None:
            s = ad.softmax(self.s_head(self.s_stack(x, a)), axis=-1)   # (B, n, n_next)
            st = ad.swapaxes(s, -1, -2)
            x_next = ad.matmul(st, z)
            a_next = ad.matmul(ad.matmul(st, a), s)
            if aux is not None:
                link = ad.reduce_mean(ad.power(ad.sub(a, ad.matmul(s, st)), 2.0))
                ent = ad.reduce_mean(ad.neg(ad.reduce_sum(
                    ad.mul(s, ad.log(ad.add(s, 1e-12))), axis=-1)))
                aux.extend([link, ent])
            if trace is not None:
                trace["assign"] = s.data.copy()
        elif self.variant == "gcn-only":
            b_dims = z.shape[:-2]
            n, h = z.shape[-2], z.shape[-1]
            d = n // self.n_next
            x_next = ad.reduce_mean(ad.reshape(z, b_dims + (self.n_next, d, h)), axis=-2)
            a_next = ad.reduce_mean(
                ad.reshape(a, b_dims + (self.n_next, d, self.n_next, d)), axis=(-3, -1))
        else:  # no-diffpool: keep every node
            x_next, a_next = z, a
        if self.gat is not None:
            x_next, alpha = self.gat(x_next, a_next)
            if trace is not None:
                trace["attention"] = alpha.data.copy()
        return x_next, a_next

    def params(self):
        groups = [("z_stack", self.z_stack)]
        if self.s_stack is not None:
            groups += [("s_stack", self.s_stack), ("s_head", self.s_head)]
        if self.gat is not None:
            groups.append(("gat", self.gat))
        return [(f"{tag}.{nm}", p) for tag, layer in groups for nm, p in layer.params()]


class GraphClassifier:
    """Encoder + adjacency + pool blocks + global-average classification."""

    def __init__(self, config, seed=0, dtype=np.float32):
        config.validate()
        self.config = config
        self.dtype = np.dtype(dtype).type
        rng = np.random.default_rng(seed)
        self.encoder = FeatureEncoder(config.n_dft, config.out_channels,
                                      config.node_feat, rng, dtype)
        self.blocks = []
        n, in_dim = config.n_nodes, config.node_feat
        for _ in range(config.pool_layers):
            n_next = n if config.variant == "no-diffpool" else n // config.coarsen
            self.blocks.append(PoolBlock(in_dim, config.hidden, config.gcn_layers,
                                         n_next, rng, dtype, config.leaky_slope,
                                         config.variant))
            n, in_dim = n_next, config.hidden
        self.final_theta = Tensor(_kaiming_uniform(rng, (config.hidden, config.hidden),
                                                   config.hidden, dtype), requires_grad=True)
        self.head = Linear(config.hidden, config.n_classes, rng, dtype=dtype)

    # -- forward ---------------------------------------------------------------

    def _input_adjacency(self, nodes):
        cfg = self.config
        if cfg.adjacency == "correlation":
            return graphbuild.adjacency_correlation(nodes, cfg.tau)
        builder = graphbuild.adjacency_distance if cfg.adjacency == "distance" \
            else lambda x, _: graphbuild.adjacency_knn(x, cfg.knn_k)
        return Tensor(builder(nodes.data, cfg.tau).astype(nodes.dtype))

    def forward(self, frames, specs, aux=None, trace=None):
        """Class logits for a batch.

        ``frames``: (B,2,n) arrays or Tensor; ``specs``: (B,n_dft,n).
        ``aux`` (a list) collects pooling regularizers when
        ``config.aux_losses`` is set; ``trace`` (a dict) captures
        intermediate arrays for export and inspection.
        """
        cfg = self.config
        if not isinstance(frames, Tensor):
            frames = Tensor(np.asarray(frames, dtype=self.dtype))
        if not isinstance(specs, Tensor):
            specs = Tensor(np.asarray(specs, dtype=self.dtype))
        x_sd, x_fd = self.encoder.preprocess(frames, specs)
        if cfg.zero_iq:
            x_sd = Tensor(np.zeros_like(x_sd.data))
        if cfg.zero_freq:
            x_fd = Tensor(np.zeros_like(x_fd.data))
        nodes = self.encoder.fuse(x_sd, x_fd)
        a = self._input_adjacency(nodes)
        if trace is not None:
            trace["nodes"] = nodes.data.copy()
            trace["adjacency"] = [a.data.copy()]
            trace["features"] = [nodes.data.copy()]
        x = nodes
        aux_list = aux if (aux is not None and cfg.aux_losses) else None
        for block in self.blocks:
            btrace = {} if trace is not None else None
            x, a = block(x, a, aux=aux_list, trace=btrace)
            if trace is not None:
                trace["adjacency"].append(a.data.copy())
                trace["features"].append(x.data.copy())
                for key, val in btrace.items():
                    trace.setdefault(key, []).append(val)
        x = gcn_propagate(x, a, self.final_theta)
        pooled = ad.reduce_mean(x, axis=-2)
        logits = self.head(pooled)
        if trace is not None:
            trace["logits"] = logits.data.copy()
        return logits

    def predict(self, frames, specs):
        with ad.no_grad():
            logits = self.forward(frames, specs)
        return np.argmax(logits.data, axis=-1)

    # -- bookkeeping -------------------------------------------------------------

    def params(self):
        out = [(f"encoder.{nm}", p) for nm, p in self.encoder.params()]
        for k, block in enumerate(self.blocks):
            out += [(f"block{k}.{nm}", p) for nm, p in block.params()]
        out.append(("final.theta", self.final_theta))
        out += [(f"head.{nm}", p) for nm, p in self.head.params()]
        return out

    def state(self):
        """Every state array in declaration order: trainable parameters plus
        batch-norm running statistics, as (name, ndarray) views."""
        out = [(f"encoder.{nm}", p.data if isinstance(p, Tensor) else p)
               for nm, p in self.encoder.state()]
        for k, block in enumerate(self.blocks):
            out += [(f"block{k}.{nm}", p.data) for nm, p in block.params()]
        out.append(("final.theta", self.final_theta.data))
        out += [(f"head.{nm}", p.data) for nm, p in self.head.params()]
        return out

    def param_count(self):
        return sum(p.size for _, p in self.params())

    def train(self):
        self.encoder.train()

    def eval(self):
        self.encoder.eval()


# --------------------------------------------------------------------------
# checkpoint serialization
# --------------------------------------------------------------------------

class CheckpointError(Exception):
    pass


def _config_to_text(cfg):
    return "\n".join(f"{k}={v}" for k, v in asdict(cfg).items())


def _config_from_text(text):
    kinds = {f.name: f.type for f in fields(ModelConfig)}
    values = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, raw = line.partition("=")
        if key not in kinds:
            raise CheckpointError(f"checkpoint config has unknown field {key!r}")
        kind = kinds[key]
        if kind == "bool":
            values[key] = raw == "True"
        elif kind == "int":
            values[key] = int(raw)
        elif kind == "float":
            values[key] = float(raw)
        else:
            values[key] = raw
    return ModelConfig(**values)


def save_checkpoint(model, path):
    cfg_blob = _config_to_text(model.config).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(cfg_blob)))
        f.write(cfg_blob)
        for _, arr in model.state():
            arr = np.ascontiguousarray(arr)
            f.write(struct.pack("<i", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}i", *arr.shape))
            f.write(arr.astype("<f4").tobytes())
    return path


def load_checkpoint(path, dtype=np.float32):
    blob = open(path, "rb").read()
    if blob[:4] != CKPT_MAGIC:
        raise CheckpointError(f"{path}: magic {blob[:4]!r} != {CKPT_MAGIC!r}")
    version, cfg_len = struct.unpack_from("<II", blob, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, reader supports {CKPT_VERSION}")
    off = 12
    cfg = _config_from_text(blob[off:off + cfg_len].decode())
    off += cfg_len
    model = GraphClassifier(cfg, seed=0, dtype=dtype)
    for name, arr in model.state():
        if off + 4 > len(blob):
            raise CheckpointError(f"{path}: truncated before tensor {name}")
        (rank,) = struct.unpack_from("<i", blob, off)
        off += 4
        if rank < 0 or off + 4 * rank > len(blob):
            raise CheckpointError(f"{path}: truncated in the shape of tensor {name}")
        dims = struct.unpack_from(f"<{rank}i", blob, off)
        off += 4 * rank
        if tuple(dims) != arr.shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {dims}, expected {arr.shape}")
        count = int(np.prod(dims)) if dims else 1
        if off + 4 * count > len(blob):
            raise CheckpointError(f"{path}: truncated inside tensor {name}")
        payload = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        off += 4 * count
        arr[...] = payload.reshape(dims).astype(arr.dtype)
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes after the last tensor")
    return model
