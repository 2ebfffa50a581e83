import numpy as np
import pytest

from mmkg.features import FeatureStore
from mmkg.kg import KnowledgeGraph
from mmkg.model import LinkPredictor, ModelConfig
from mmkg.train import ns_loss

FIXTURES = __import__("pathlib").Path(__file__).parent / "fixtures"


def random_graph(rng, num_nodes=6, num_relations=2, num_triples=10):
    seen = set()
    while len(seen) < num_triples:
        h, t = rng.choice(num_nodes, size=2, replace=False)
        seen.add((int(h), int(rng.integers(num_relations)), int(t)))
    return KnowledgeGraph.from_arrays(num_nodes, num_relations, sorted(seen))


def tiny_instance(family, features="none", seed=0, num_nodes=6, dim=4, feat_dim=5, layers=2):
    """A small random model plus a deterministic loss closure over fixed negatives."""
    rng = np.random.default_rng(seed)
    g = random_graph(rng, num_nodes)
    feats = FeatureStore(text=rng.normal(size=(num_nodes, feat_dim)), image=rng.normal(size=(num_nodes, feat_dim + 1)))
    cfg = ModelConfig(family=family, features=features, node_dim=dim, hidden_dim=dim, num_layers=layers,
                      heads=2, dropout=0.0, input_dropout=0.0, rel_dim=3 if family == "tucker" else None)
    model = LinkPredictor(cfg, g, feats, seed=seed)
    # move gate output layers off zero so every gate path carries gradient
    for name, t in model.params.items():
        if name.endswith((".w2", ".b2")):
            t.value[...] = rng.normal(scale=0.5, size=t.shape)
    pos = g.triples("train")[:4]
    neg = rng.integers(0, num_nodes, size=(len(pos), 3, 3))
    neg[:, :, 1] = pos[:, None, 1]

    def loss_fn(params):
        model.params = params
        ps, ns = model.score_batch(pos, neg)
        return ns_loss(ps, ns)

    return model, loss_fn


@pytest.fixture(scope="session")
def toy20_dir():
    return FIXTURES / "toy20"
