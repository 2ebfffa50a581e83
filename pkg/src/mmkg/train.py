"""Negative-sampling training with early stopping on validation MRR."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import forward_backward
from .errors import ConfigError, DivergenceError, NumericError
from .evaluate import CandidateCache, evaluate
from .features import FeatureStore
from .kg import KnowledgeGraph, sample_negatives_batch
from .model import LinkPredictor, ModelConfig
from .optim import OptimizerState, optimizer_step

logger = logging.getLogger(__name__)


def _as_scores(x, ndim):
    t = ad.as_tensor(np.asarray(x, dtype=np.float64) if not isinstance(x, ad.Tensor) else x)
    if t.ndim != ndim:
        raise ValueError(f"expected {ndim}-d scores, got shape {t.shape}")
    return t


def ns_loss(pos_scores, neg_scores, label_smoothing: float = 0.0) -> ad.Tensor:
    """Logistic negative-sampling loss, averaged over positives.

    ``pos_scores`` is ``[B]`` and ``neg_scores`` ``[B, k]``. With smoothing
    ``eps`` the targets become ``1 - eps`` (positives) and ``eps`` (negatives).
    """
    pos = _as_scores(pos_scores, 1)
    neg = _as_scores(neg_scores, 2)
    if pos.shape[0] == 0:
        raise ValueError("empty batch")
    if neg.shape[0] != pos.shape[0] or neg.shape[1] < 1:
        raise ValueError("every positive needs at least one negative")
    eps = label_smoothing
    if eps:
        pos_term = -((1 - eps) * ad.log_sigmoid(pos) + eps * ad.log_sigmoid(-pos))
        neg_term = -(eps * ad.log_sigmoid(neg) + (1 - eps) * ad.log_sigmoid(-neg)).sum(axis=1)
    else:
        pos_term = -ad.log_sigmoid(pos)
        neg_term = -ad.log_sigmoid(-neg).sum(axis=1)
    return (pos_term + neg_term).mean()


def margin_loss(pos_scores, neg_scores, margin: float) -> ad.Tensor:
    """Mean over (positive, negative) pairs of ``max(0, margin - pos + neg)``."""
    pos = _as_scores(pos_scores, 1)
    neg = _as_scores(neg_scores, 2)
    if pos.shape[0] == 0:
        raise ValueError("empty batch")
    if neg.shape[0] != pos.shape[0] or neg.shape[1] < 1:
        raise ValueError("every positive needs at least one negative")
    return ad.relu(margin - pos.reshape(-1, 1) + neg).mean()


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    k_neg_train: int = 100
    k_neg_eval: int = 100
    batch_size: int = 10000
    lr: float = 0.001
    weight_decay: float = 0.0
    optimizer: str = "adam"
    max_epochs: int = 100
    patience: int = 20
    loss: str | None = None
    margin: float = 5.0
    label_smoothing: float = 0.1
    train_corruption: str | None = None
    eval_corruption: str = "tail"
    seed: int = 0
    eval_seed: int = 0
    deterministic: bool = True
    data: dict = field(default_factory=dict)
    out_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        if self.k_neg_train < 1:
            raise ConfigError("k_neg_train must be >= 1")
        if self.patience > self.max_epochs:
            raise ConfigError("patience cannot exceed max_epochs")
        if self.loss is None:
            self.loss = "margin" if self.model.family == "transe" else "logistic"
        if self.loss not in ("logistic", "margin"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.train_corruption is None:
            self.train_corruption = "both" if self.model.family in ("transe", "distmult") else "tail"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "TrainConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = cls.from_dict(d)
        base = Path(path).resolve().parent
        cfg.data = {k: (str(base / v) if isinstance(v, str) and k != "missing_features" else v)
                    for k, v in cfg.data.items()}
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d


class EarlyStopping:
    """Tracks the best metric; stops after ``patience`` epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0

    def update(self, epoch: int, metric: float) -> bool:
        if metric > self.best:
            self.best, self.best_epoch = metric, epoch
            return True
        return False

    def should_stop(self, epoch: int) -> bool:
        return epoch - self.best_epoch >= self.patience


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    best_epoch: int = 0
    best_valid_mrr: float | None = None
    stopped_early: bool = False
    checkpoint_path: str | None = None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)

    def write(self, path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")


def train(config: TrainConfig, g: KnowledgeGraph, feats: FeatureStore | None = None,
          log_path=None, checkpoint_path=None, cache: CandidateCache | None = None):
    """Train a model; returns ``(model, log)`` with the best-validation parameters restored."""
    from .checkpoint import save_model

    rng = np.random.default_rng(config.seed)
    model = LinkPredictor(config.model, g, feats, seed=config.seed)
    opt = OptimizerState(config.optimizer, config.lr, config.weight_decay)
    cache = cache if cache is not None else CandidateCache()
    stopper = EarlyStopping(config.patience)
    log = TrainLog(checkpoint_path=str(checkpoint_path) if checkpoint_path else None)
    train_triples = g.triples("train")
    has_valid = len(g.triples("valid")) > 0
    smoothing = config.label_smoothing if config.model.family == "tucker" else 0.0
    best_state = model.params.state()

    def batch_loss(pos, neg):
        def fn(p):
            ps, ns = model.score_batch(pos, neg, train=True, rng=rng)
            if config.loss == "margin":
                return margin_loss(ps, ns, config.margin)
            return ns_loss(ps, ns, smoothing)
        return fn

    for epoch in range(1, config.max_epochs + 1):
        start = time.perf_counter()
        perm = rng.permutation(len(train_triples))
        total = 0.0
        for s in range(0, len(perm), config.batch_size):
            pos = train_triples[perm[s:s + config.batch_size]]
            neg = sample_negatives_batch(g, pos, config.k_neg_train, config.train_corruption, rng)
            try:
                loss = forward_backward(batch_loss(pos, neg), model.params)
            except NumericError as exc:
                model.params.load_state(best_state)
                if checkpoint_path:
                    save_model(model, checkpoint_path, config)
                raise DivergenceError(f"epoch {epoch}: {exc}", model.params, log) from exc
            optimizer_step(opt, model.params)
            total += loss * len(pos)
        epoch_loss = total / max(1, len(train_triples))
        record = {"epoch": epoch, "loss": epoch_loss}
        if has_valid:
            rep = evaluate(model, g, "valid", config.k_neg_eval, config.eval_seed, config.eval_corruption, cache)
            record["valid_mrr"] = rep.mrr
            if stopper.update(epoch, rep.mrr):
                best_state = model.params.state()
        else:
            best_state = model.params.state()
            stopper.best_epoch = epoch
        record["wall_time"] = None if config.deterministic else time.perf_counter() - start
        log.records.append(record)
        logger.info("epoch %d loss %.5f valid_mrr %s", epoch, epoch_loss, record.get("valid_mrr"))
        if has_valid and stopper.should_stop(epoch):
            log.stopped_early = epoch < config.max_epochs
            break
    model.params.load_state(best_state)
    log.best_epoch = stopper.best_epoch
    log.best_valid_mrr = float(stopper.best) if has_valid else None
    if log_path:
        log.write(log_path)
    if checkpoint_path:
        save_model(model, checkpoint_path, config)
    return model, log
