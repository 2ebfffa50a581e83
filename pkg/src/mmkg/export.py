"""Node-state export bundles and cosine top-k retrieval over them."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, DataError, ShapeError
from .kgf import read_matrix, write_matrix

VARIANTS = {"node": ("NODE", "none"), "txt": ("TXT", "text"), "img": ("IMG", "image"), "txtimg": ("TXT+IMG", "both")}


@dataclass
class ExportBundle:
    variant: str
    states: np.ndarray
    labels: list

    @property
    def width(self) -> int:
        return self.states.shape[1]


def _sidecars(path) -> tuple[Path, Path]:
    p = Path(path)
    return p.with_name(p.name + ".symbols.tsv"), p.with_name(p.name + ".meta.json")


def export_node_states(model, variant: str, out) -> ExportBundle:
    """Eval-mode forward pass; writes the state matrix plus symbol and metadata sidecars."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; choose from {sorted(VARIANTS)}")
    tag, features = VARIANTS[variant]
    needed = {"none": (), "text": ("text",), "image": ("image",), "both": ("text", "image")}[features]
    for mod in needed:
        if not model.feats.has(mod):
            raise ConfigError(f"variant {tag} needs {mod} features, none loaded")
    if model.config.features != features:
        raise ConfigError(f"variant {tag} does not match the model's feature config {model.config.features!r}")
    with ad.no_grad():
        states = np.asarray(model.node_states(train=False).value, dtype=np.float32)
    labels = model.graph.nodes.labels
    write_matrix(out, states)
    sym, meta = _sidecars(out)
    sym.write_text("".join(f"{i}\t{lab}\n" for i, lab in enumerate(labels)), encoding="utf-8")
    meta.write_text(json.dumps({"variant": tag, "width": int(states.shape[1]),
                                "num_nodes": int(states.shape[0])}, sort_keys=True), encoding="utf-8")
    return ExportBundle(tag, states, labels)


def load_bundle(path) -> ExportBundle:
    states, idx = read_matrix(path)
    if idx is not None:
        raise DataError(f"{path}: export bundles are dense matrices")
    sym, meta = _sidecars(path)
    labels = [str(i) for i in range(len(states))]
    if sym.exists():
        labels = [line.split("\t", 1)[1] for line in sym.read_text(encoding="utf-8").splitlines() if line]
    variant = json.loads(meta.read_text(encoding="utf-8"))["variant"] if meta.exists() else "NODE"
    if len(labels) != len(states):
        raise DataError(f"{path}: {len(labels)} symbols for {len(states)} rows")
    return ExportBundle(variant, states, labels)


def cosine_similarities(query, matrix) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    m = np.asarray(matrix, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] != m.shape[1]:
        raise ShapeError(f"query width {q.shape} does not match bundle width {m.shape[1]}")
    qn = np.linalg.norm(q)
    if qn == 0:
        raise DataError("query vector has zero norm")
    norms = np.linalg.norm(m, axis=1)
    sims = np.full(len(m), -np.inf)
    ok = norms > 0
    sims[ok] = (m[ok] @ q) / (norms[ok] * qn)
    return sims


def retrieve_topk(query, bundle, k: int) -> list[tuple[int, float]]:
    """``k`` nodes by descending cosine similarity; ties go to the lower id."""
    matrix = bundle.states if isinstance(bundle, ExportBundle) else bundle
    n = len(matrix)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}]")
    sims = cosine_similarities(query, matrix)
    order = np.lexsort((np.arange(n), -sims))[:k]
    return [(int(i), float(sims[i])) for i in order]
