"""Per-node text and image feature matrices."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DegenerateInputError, KGIndexError, ShapeError
from .kgf import read_matrix


def aggregate_mean(items) -> np.ndarray:
    """Arithmetic mean of a non-empty list of equal-length vectors."""
    arr = np.asarray(items, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise DegenerateInputError("cannot average an empty feature set")
    return arr.mean(axis=0)


@dataclass
class FeatureStore:
    """Frozen per-node modality vectors; row i belongs to node i."""

    text: np.ndarray | None = None
    image: np.ndarray | None = None
    text_present: np.ndarray | None = None
    image_present: np.ndarray | None = None

    def __post_init__(self):
        for name in ("text", "image"):
            m = getattr(self, name)
            if m is None:
                continue
            m = np.asarray(m, dtype=np.float32)
            if m.ndim != 2:
                raise ShapeError(f"{name} features must be 2-d")
            if not np.isfinite(m).all():
                raise DataError(f"{name} features contain non-finite values")
            setattr(self, name, m)
            flag = f"{name}_present"
            if getattr(self, flag) is None:
                setattr(self, flag, np.ones(len(m), dtype=bool))
        if self.text is not None and self.image is not None and len(self.text) != len(self.image):
            raise ShapeError("text and image feature row counts differ")

    def has(self, modality: str) -> bool:
        return getattr(self, modality) is not None

    def dim(self, modality: str) -> int:
        m = getattr(self, modality)
        return 0 if m is None else m.shape[1]


def load_features(path, num_nodes: int, missing: str = "error") -> tuple[np.ndarray, np.ndarray]:
    """Load a KGF1 feature file into a ``(num_nodes, dim)`` matrix.

    Indexed files hold one row per raw item (gloss or image) and are averaged
    per node. ``missing="zero"`` fills nodes without rows with zeros instead of
    raising. Returns ``(matrix, present_mask)``.
    """
    m, idx = read_matrix(path)
    if idx is None:
        if len(m) != num_nodes:
            raise KGIndexError(f"{path}: {len(m)} rows for {num_nodes} nodes")
        return m, np.ones(num_nodes, dtype=bool)
    if len(idx) and idx.max() >= num_nodes:
        raise KGIndexError(f"{path}: row references node {int(idx.max())} >= {num_nodes}")
    sums = np.zeros((num_nodes, m.shape[1]), dtype=np.float64)
    np.add.at(sums, idx, m.astype(np.float64))
    counts = np.bincount(idx, minlength=num_nodes)
    present = counts > 0
    if not present.all() and missing != "zero":
        node = int(np.argmin(present))
        raise DegenerateInputError(f"{path}: node {node} has no feature rows")
    out = np.zeros_like(sums)
    out[present] = sums[present] / counts[present, None]
    return out.astype(np.float32), present
