"""Link-prediction models: embeddings + optional gating + optional encoder + scoring head."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet
from .encoders import EncoderStack, score_graph_dot, score_hybrid
from .errors import ConfigError
from .features import FeatureStore
from .gating import FEATURE_CONFIGS, gate_edges, gate_nodes, init_gate_params, modalities_for, uniform_init
from .kg import KnowledgeGraph
from .tuple_models import score_distmult, score_transe, tucker_project

TUPLE_FAMILIES = ("transe", "distmult", "tucker")
GRAPH_FAMILIES = ("graphsage", "gat")
HYBRID_FAMILIES = ("graphsage+distmult", "gat+distmult")
FAMILIES = TUPLE_FAMILIES + GRAPH_FAMILIES + HYBRID_FAMILIES


@dataclass
class ModelConfig:
    family: str = "graphsage+distmult"
    features: str = "none"
    gate_nodes: bool = True
    gate_edges: bool = True
    gate_per_dim: bool = False
    node_dim: int = 100
    rel_dim: int | None = None
    hidden_dim: int = 100
    num_layers: int = 2
    heads: int = 2
    dropout: float = 0.5
    input_dropout: float = 0.2
    self_loops: bool = False
    nonlinearity: str = "sigmoid"

    def __post_init__(self):
        self.family = self.family.replace("_", "+").lower()
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}")
        if self.features not in FEATURE_CONFIGS:
            raise ConfigError(f"unknown feature config {self.features!r}")
        if self.family in ("transe", "distmult") and self.rel_dim not in (None, self.node_dim):
            raise ConfigError(f"{self.family} needs rel_dim == node_dim")
        if self.family in HYBRID_FAMILIES and self.rel_dim not in (None, self.encoder_width):
            raise ConfigError("hybrid models need rel_dim == encoder output width")

    @property
    def is_tuple(self) -> bool:
        return self.family in TUPLE_FAMILIES

    @property
    def encoder_family(self) -> str | None:
        return None if self.is_tuple else self.family.split("+")[0]

    @property
    def is_hybrid(self) -> bool:
        return self.family in HYBRID_FAMILIES

    @property
    def encoder_width(self) -> int:
        return self.node_dim if self.num_layers == 0 else self.hidden_dim

    @property
    def relation_width(self) -> int | None:
        if self.family in GRAPH_FAMILIES:
            return None
        if self.is_hybrid:
            return self.encoder_width
        return self.rel_dim or self.node_dim

    @property
    def uses_edge_gates(self) -> bool:
        return self.is_hybrid and self.gate_edges and self.features != "none"

    @property
    def uses_node_gates(self) -> bool:
        return self.gate_nodes and self.features != "none"

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


class LinkPredictor:
    """A trainable scorer over a fixed graph and feature store."""

    def __init__(self, config: ModelConfig, graph: KnowledgeGraph, feats: FeatureStore | None = None,
                 seed: int = 0, params: ParameterSet | None = None):
        self.config = config
        self.graph = graph
        self.feats = feats if feats is not None else FeatureStore()
        for mod in modalities_for(config.features):
            if not self.feats.has(mod):
                raise ConfigError(f"feature config {config.features!r} needs {mod} features")
            if len(getattr(self.feats, mod)) != graph.num_nodes:
                raise ConfigError(f"{mod} features have {len(getattr(self.feats, mod))} rows "
                                  f"for {graph.num_nodes} nodes")
        self.encoder = None
        if not config.is_tuple:
            self.encoder = EncoderStack(config.encoder_family, config.num_layers, config.hidden_dim,
                                        config.heads, config.dropout, config.self_loops, config.nonlinearity)
        self.params = params if params is not None else self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng: np.random.Generator) -> ParameterSet:
        c = self.config
        p = ParameterSet()
        n, r = self.graph.num_nodes, self.graph.num_relations
        p.add("node_emb", uniform_init(rng, (n, c.node_dim), c.node_dim))
        rw = c.relation_width
        if rw is not None:
            p.add("rel_emb", uniform_init(rng, (r, rw), rw))
        if c.family == "tucker":
            p.add("core", uniform_init(rng, (c.node_dim, rw, c.node_dim), c.node_dim))
        feat_dims = {m: self.feats.dim(m) for m in ("text", "image")}
        if c.uses_node_gates:
            init_gate_params(p, "node", c.features, c.node_dim, feat_dims, rng, c.gate_per_dim)
        if self.encoder is not None:
            self.encoder.init_params(p, c.node_dim, rng)
        if c.uses_edge_gates:
            init_gate_params(p, "edge", c.features, rw, feat_dims, rng, c.gate_per_dim)
        return p

    # ------------------------------------------------------------------ forward
    def node_inputs(self) -> ad.Tensor:
        v = self.params["node_emb"]
        if not self.config.uses_node_gates:
            return v
        return gate_nodes(v, self.feats, self.config.features, self.params)

    def node_states(self, train: bool = False, rng: np.random.Generator | None = None) -> ad.Tensor:
        """Per-node representations fed to the scoring head (``h_i`` or gated ``v_i``)."""
        v = self.node_inputs()
        if self.encoder is None:
            return v
        return self.encoder.encode(self.params, self.graph, v, train, rng)

    def relation_inputs(self, heads, rels, tails) -> ad.Tensor:
        e = self.params["rel_emb"][rels]
        if self.config.uses_edge_gates:
            e = gate_edges(e, heads, tails, self.feats, self.config.features, self.params)
        return e

    def score(self, states, heads, rels, tails, train: bool = False, rng=None) -> ad.Tensor:
        """Scores for parallel index arrays given precomputed ``states``."""
        c = self.config
        heads, rels, tails = (np.asarray(x, dtype=np.int64) for x in (heads, rels, tails))
        states = ad.as_tensor(states)
        hs, ts = states[heads], states[tails]
        if c.family in GRAPH_FAMILIES:
            return score_graph_dot(hs, ts)
        e = self.relation_inputs(heads, rels, tails)
        if c.family == "transe":
            return score_transe(hs, e, ts)
        if c.family == "distmult":
            return score_distmult(hs, e, ts)
        if c.family == "tucker":
            hs = ad.dropout(hs, c.input_dropout, rng, train)
            proj = tucker_project(self.params["core"], hs, e, c.dropout, rng, train)
            return (proj * ts).sum(axis=-1)
        return score_hybrid(hs, e, ts)

    def score_batch(self, positives: np.ndarray, negatives: np.ndarray, train: bool = False, rng=None):
        """``(pos [B], neg [B, k])`` scores; one encoder pass shared by both."""
        positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
        negatives = np.asarray(negatives, dtype=np.int64)
        b, k = negatives.shape[:2]
        allt = np.concatenate([positives, negatives.reshape(-1, 3)])
        states = self.node_states(train, rng)
        s = self.score(states, allt[:, 0], allt[:, 1], allt[:, 2], train, rng)
        return s[:b], s[b:].reshape(b, k)

    def score_triples(self, triples) -> np.ndarray:
        """Frozen eval-mode scores for an ``(n, 3)`` array."""
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        with ad.no_grad():
            states = self.node_states(False)
            return self.score(states, triples[:, 0], triples[:, 1], triples[:, 2]).value.astype(np.float64)

    # ------------------------------------------------------------------ identity
    def fingerprint(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "num_nodes": self.graph.num_nodes,
            "num_relations": self.graph.num_relations,
            "feature_dims": {m: self.feats.dim(m) for m in ("text", "image")},
            "params": {k: list(t.shape) for k, t in self.params.items()},
        }
