"""Multimodal knowledge-graph link prediction with tuple, graph and hybrid models."""
from .autodiff import ParameterSet, Tensor, finite_diff_check, forward_backward, no_grad
from .encoders import EncoderStack, gat_attention_weights, gat_layer, graphsage_layer, score_graph_dot, score_hybrid
from .evaluate import CandidateCache, EvalReport, compute_metrics, evaluate, rank_triple
from .export import ExportBundle, export_node_states, load_bundle, retrieve_topk
from .features import FeatureStore, aggregate_mean, load_features
from .gating import edge_gate, edge_gate_combine, node_gate, node_gate_combine
from .kg import KnowledgeGraph, Triple, load_graph, load_triples, neighborhood, sample_negatives
from .model import LinkPredictor, ModelConfig
from .optim import OptimizerState, optimizer_step
from .train import TrainConfig, margin_loss, ns_loss, train
from .tuple_models import score_distmult, score_transe, score_tucker

__version__ = "0.1.0"
