"""Parameter checkpoints in the sectioned KGF1 container."""
from __future__ import annotations

import numpy as np

from .autodiff import ParameterSet
from .errors import ConfigError
from .kgf import read_sections, write_sections


def save_checkpoint(params: ParameterSet, path, meta: dict | None = None) -> None:
    write_sections(path, params.state(), meta)


def load_checkpoint(path) -> ParameterSet:
    """Read parameters back; the metadata dict is attached as ``params.meta``."""
    sections, meta = read_sections(path)
    ps = ParameterSet(np.float32)
    for name, value in sections.items():
        ps.add(name, value)
    ps.meta = meta
    return ps


def save_model(model, path, train_config=None) -> None:
    meta = {"fingerprint": model.fingerprint()}
    if train_config is not None:
        meta["train_config"] = train_config.to_dict()
    save_checkpoint(model.params, path, meta)


def load_model(path, graph=None, feats=None, family: str | None = None):
    """Rebuild a :class:`LinkPredictor` from a checkpoint.

    Without ``graph``/``feats`` the data files named in the stored training
    config are loaded. A checkpoint whose fingerprint disagrees with the
    rebuilt model (family, dimensions, vocabulary sizes) is rejected.
    """
    from .dataset import load_dataset
    from .model import LinkPredictor, ModelConfig
    from .train import TrainConfig

    params = load_checkpoint(path)
    meta = params.meta
    fp = meta.get("fingerprint")
    if fp is None:
        raise ConfigError(f"{path}: checkpoint carries no model fingerprint")
    config = ModelConfig.from_dict(fp["config"])
    if family is not None and config.family != ModelConfig(family=family).family:
        raise ConfigError(f"{path}: checkpoint holds a {config.family} model, expected {family}")
    tc = TrainConfig.from_dict(meta["train_config"]) if "train_config" in meta else None
    if graph is None:
        if tc is None:
            raise ConfigError(f"{path}: no graph given and no training config stored")
        graph, loaded = load_dataset(tc.data)
        feats = feats if feats is not None else loaded
    model = LinkPredictor(config, graph, feats, params=params)
    rebuilt = LinkPredictor(config, graph, feats, seed=0).fingerprint()
    if rebuilt != fp:
        diff = sorted(k for k in fp if fp.get(k) != rebuilt.get(k))
        raise ConfigError(f"{path}: checkpoint does not match the model/data ({', '.join(diff)} differ)")
    model.train_config = tc
    return model
