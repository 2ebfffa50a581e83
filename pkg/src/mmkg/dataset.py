"""Assemble a graph and feature store from the ``data`` section of a config."""
from __future__ import annotations

from .errors import ConfigError
from .features import FeatureStore, load_features
from .kg import KnowledgeGraph, load_graph


def load_dataset(data: dict) -> tuple[KnowledgeGraph, FeatureStore]:
    """Keys: ``train``, ``valid``, ``test`` (TSV), optional ``text_features``,
    ``image_features`` (KGF1) and ``missing_features`` (``"error"`` or ``"zero"``)."""
    if "train" not in data:
        raise ConfigError("data.train is required")
    g = load_graph(data["train"], data.get("valid"), data.get("test"))
    missing = data.get("missing_features", "error")
    kw = {}
    for mod in ("text", "image"):
        path = data.get(f"{mod}_features")
        if path:
            kw[mod], kw[f"{mod}_present"] = load_features(path, g.num_nodes, missing)
    return g, FeatureStore(**kw)
