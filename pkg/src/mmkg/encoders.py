"""GraphSage (mean aggregation) and GAT message passing, plus the graph scoring heads."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import ParameterSet
from .errors import DegenerateInputError, ShapeError
from .gating import glorot_init
from .kg import KnowledgeGraph
from .tuple_models import score_distmult

ENCODERS = ("graphsage", "gat")
LEAKY_SLOPE = 0.2


def mean_adjacency(g: KnowledgeGraph, self_loops: bool = False) -> sp.csr_matrix:
    """Row-normalized adjacency; isolated nodes keep an all-zero row."""
    key = ("mean_adj", self_loops)
    if key not in g._cache:
        a = g.adjacency(self_loops)
        deg = np.asarray(a.sum(axis=1)).ravel()
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        g._cache[key] = sp.csr_matrix(sp.diags(inv) @ a)
    return g._cache[key]


def graphsage_layer(h, g: KnowledgeGraph | sp.spmatrix, w, self_loops: bool = False) -> ad.Tensor:
    """``ReLU(mean_{j in N_i} h_j @ w)``; nodes with no neighbors get zeros."""
    adj = g if sp.issparse(g) else mean_adjacency(g, self_loops)
    h = ad.as_tensor(h)
    if h.shape[-1] != ad.as_tensor(w).shape[0]:
        raise ShapeError(f"state width {h.shape[-1]} does not match weight {ad.as_tensor(w).shape}")
    return ad.relu(ad.spmm(adj, h @ w))


def gat_attention_weights(z_i, z_neighbors, a, slope: float = LEAKY_SLOPE) -> np.ndarray:
    """Softmax over neighbors of ``LeakyReLU([z_i; z_k] . a)``."""
    z_neighbors = np.atleast_2d(np.asarray(z_neighbors, dtype=np.float64))
    if z_neighbors.size == 0:
        raise DegenerateInputError("attention over an empty neighborhood")
    z_i = np.asarray(z_i, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    d = len(z_i)
    logits = z_i @ a[:d] + z_neighbors @ a[d:]
    logits = np.where(logits > 0, logits, slope * logits)
    e = np.exp(logits - logits.max())
    return e / e.sum()


def _activation(name: str):
    return {"sigmoid": ad.sigmoid, "relu": ad.relu}[name]


def gat_head(h, edges, num_nodes: int, w, a, nonlinearity: str = "sigmoid") -> ad.Tensor:
    """One attention head over ``edges = (targets, sources)``."""
    tgt, src = edges
    z = ad.as_tensor(h) @ w
    width = z.shape[-1]
    a = ad.as_tensor(a)
    s_t = z @ a[:width]
    s_s = z @ a[width:]
    logits = ad.leaky_relu(s_t[tgt] + s_s[src], LEAKY_SLOPE)
    alpha = ad.segment_softmax(logits, tgt, num_nodes)
    msg = alpha.reshape(-1, 1) * z[src]
    return _activation(nonlinearity)(ad.segment_sum(msg, tgt, num_nodes))


def gat_layer(h, g: KnowledgeGraph, heads: list, final: bool, nonlinearity: str = "sigmoid",
              self_loops: bool = False) -> ad.Tensor:
    """Multi-head attention layer; ``heads`` is a list of ``(w, a)`` pairs.

    Head outputs are concatenated on hidden layers and averaged on the final one.
    """
    edges = g.edge_index(self_loops)
    outs = [gat_head(h, edges, g.num_nodes, w, a, nonlinearity) for w, a in heads]
    if len(outs) == 1:
        return outs[0]
    if final:
        total = outs[0]
        for o in outs[1:]:
            total = total + o
        return total * (1.0 / len(outs))
    return ad.concat(outs, axis=-1)


@dataclass
class EncoderStack:
    family: str = "graphsage"
    num_layers: int = 2
    width: int = 100
    heads: int = 2
    dropout: float = 0.5
    self_loops: bool = False
    nonlinearity: str = "sigmoid"

    def __post_init__(self):
        if self.family not in ENCODERS:
            raise ValueError(f"unknown encoder {self.family!r}")
        if self.family == "gat" and self.num_layers > 1 and self.width % self.heads:
            raise ShapeError(f"width {self.width} not divisible by {self.heads} heads")

    def init_params(self, params: ParameterSet, in_dim: int, rng: np.random.Generator) -> None:
        d = in_dim
        for layer in range(self.num_layers):
            final = layer == self.num_layers - 1
            if self.family == "graphsage":
                params.add(f"enc.{layer}.W", glorot_init(rng, (d, self.width)))
            else:
                head_out = self.width if final else self.width // self.heads
                for k in range(self.heads):
                    params.add(f"enc.{layer}.h{k}.W", glorot_init(rng, (d, head_out)))
                    params.add(f"enc.{layer}.h{k}.a", glorot_init(rng, (2 * head_out, 1))[:, 0])
            d = self.width

    def output_width(self, in_dim: int) -> int:
        return in_dim if self.num_layers == 0 else self.width

    def encode(self, params: ParameterSet, g: KnowledgeGraph, inputs, train: bool = False,
               rng: np.random.Generator | None = None) -> ad.Tensor:
        h = ad.as_tensor(inputs)
        if h.shape[0] != g.num_nodes:
            raise ShapeError(f"{h.shape[0]} input rows for {g.num_nodes} nodes")
        adj = mean_adjacency(g, self.self_loops) if self.family == "graphsage" else None
        for layer in range(self.num_layers):
            h = ad.dropout(h, self.dropout, rng, train)
            if self.family == "graphsage":
                h = graphsage_layer(h, adj, params[f"enc.{layer}.W"])
            else:
                heads = [(params[f"enc.{layer}.h{k}.W"], params[f"enc.{layer}.h{k}.a"]) for k in range(self.heads)]
                h = gat_layer(h, g, heads, final=layer == self.num_layers - 1,
                              nonlinearity=self.nonlinearity, self_loops=self.self_loops)
        return h


def encode(stack: EncoderStack, params: ParameterSet, g: KnowledgeGraph, inputs, train=False, rng=None):
    return stack.encode(params, g, inputs, train, rng)


def score_graph_dot(h_i, h_j) -> ad.Tensor:
    h_i, h_j = ad.as_tensor(h_i), ad.as_tensor(h_j)
    if h_i.shape[-1] != h_j.shape[-1]:
        raise ShapeError(f"state widths differ: {h_i.shape} vs {h_j.shape}")
    return (h_i * h_j).sum(axis=-1)


def score_hybrid(h_i, e_r, h_j) -> ad.Tensor:
    """DistMult over encoder states instead of raw embeddings."""
    return score_distmult(h_i, e_r, h_j)
