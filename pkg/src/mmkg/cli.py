"""Command-line entry point: ``mmkg {train,eval,export,retrieve,inspect}``.

Failures exit non-zero and print one line to stderr: ``error: <category>: <message>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_model
from .dataset import load_dataset
from .errors import ConfigError, KGError
from .evaluate import CandidateCache, evaluate
from .export import VARIANTS, export_node_states, load_bundle, retrieve_topk
from .kg import SPLITS
from .kgf import read_matrix
from .train import TrainConfig, train


def _cmd_train(args) -> int:
    cfg = TrainConfig.from_json(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.deterministic:
        cfg.deterministic = True
    out_dir = Path(args.out_dir or cfg.out_dir or "runs")
    g, feats = load_dataset(cfg.data)
    mrrs = []
    for run in range(args.runs):
        run_cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": cfg.seed + run})
        run_dir = out_dir if args.runs == 1 else out_dir / f"run{run}"
        run_dir.mkdir(parents=True, exist_ok=True)
        cache = CandidateCache(run_dir / "candidates")
        _, log = train(run_cfg, g, feats, log_path=run_dir / "train_log.jsonl",
                       checkpoint_path=run_dir / "checkpoint.kgf", cache=cache)
        mrrs.append(log.best_valid_mrr)
        print(f"run {run}: best epoch {log.best_epoch}, valid MRR "
              f"{'n/a' if log.best_valid_mrr is None else f'{log.best_valid_mrr:.1f}'}, "
              f"checkpoint {run_dir / 'checkpoint.kgf'}")
    if args.runs > 1 and all(m is not None for m in mrrs):
        print(f"mean valid MRR over {args.runs} runs: {np.mean(mrrs):.1f} (std {np.std(mrrs):.1f})")
    return 0


def _cmd_eval(args) -> int:
    model = load_model(args.checkpoint)
    cache_dir = Path(args.cache_dir) if args.cache_dir else Path(args.checkpoint).resolve().parent / "candidates"
    rep = evaluate(model, model.graph, args.split, args.neg, args.seed, args.corrupt, CandidateCache(cache_dir))
    print(rep.table())
    if args.json:
        Path(args.json).write_text(rep.to_json(), encoding="utf-8")
    return 0


def _cmd_export(args) -> int:
    model = load_model(args.checkpoint)
    bundle = export_node_states(model, args.variant, args.out)
    print(f"wrote {bundle.states.shape[0]} x {bundle.width} {bundle.variant} states to {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    bundle = load_bundle(args.bundle)
    queries, idx = read_matrix(args.query)
    if idx is not None:
        raise ConfigError("query file must be a dense KGF1 matrix")
    for q, query in enumerate(queries):
        for rank, (node, sim) in enumerate(retrieve_topk(query, bundle, args.k), start=1):
            print(f"{q}\t{rank}\t{node}\t{bundle.labels[node]}\t{sim:.6f}")
    return 0


def _cmd_inspect(args) -> int:
    if not args.graph:
        raise ConfigError("nothing to inspect; pass --graph")
    cfg = TrainConfig.from_json(args.config)
    g, feats = load_dataset(cfg.data)
    print(f"nodes\t{g.num_nodes}")
    print(f"relations\t{g.num_relations}")
    for split in SPLITS:
        print(f"{split}\t{len(g.triples(split))}")
    for mod in ("text", "image"):
        if feats.has(mod):
            print(f"{mod}_features\t{feats.dim(mod)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmkg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a JSON config")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--deterministic", action="store_true")
    t.add_argument("--runs", type=int, default=1)
    t.add_argument("--out-dir")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="rank a split against corrupted candidates")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", choices=("valid", "test"), default="test")
    e.add_argument("--neg", choices=("100", "1000", "all"), default="100")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--corrupt", choices=("tail", "head", "both"), default="tail")
    e.add_argument("--cache-dir")
    e.add_argument("--json", help="also write the report as JSON")
    e.set_defaults(func=_cmd_eval)

    x = sub.add_parser("export", help="write node hidden states for downstream use")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--variant", choices=sorted(VARIANTS), required=True)
    x.add_argument("--out", required=True)
    x.set_defaults(func=_cmd_export)

    r = sub.add_parser("retrieve", help="cosine top-k nodes for query vectors")
    r.add_argument("--bundle", required=True)
    r.add_argument("--query", required=True)
    r.add_argument("--k", type=int, default=5)
    r.set_defaults(func=_cmd_retrieve)

    i = sub.add_parser("inspect", help="print graph statistics")
    i.add_argument("--graph", action="store_true")
    i.add_argument("--config", required=True)
    i.set_defaults(func=_cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except KGError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
