"""Run GraphSage and GAT layers over a small graph and look at the attention.

Run: python demos/02_encoders.py
"""
import numpy as np

from mmkg.encoders import gat_attention_weights, gat_layer, graphsage_layer, mean_adjacency
from mmkg.kg import KnowledgeGraph

g = KnowledgeGraph.from_arrays(5, 1, [(0, 0, 1), (0, 0, 2), (1, 0, 2), (3, 0, 0)])
print("mean adjacency (row i averages the neighbors of i):")
print(mean_adjacency(g).toarray().round(3))

rng = np.random.default_rng(0)
x = rng.normal(size=(5, 3))
w = rng.normal(size=(3, 2))
# node 4 has no neighbors, so its GraphSage state is relu(0) = 0
print("GraphSage:\n", graphsage_layer(x, g, w).value.round(3) + 0.0)

heads = [(rng.normal(size=(3, 2)), rng.normal(size=4)) for _ in range(2)]
print("GAT hidden layer, heads concatenated:", gat_layer(x, g, heads, final=False).shape)
print("GAT final layer, heads averaged:     ", gat_layer(x, g, heads, final=True).shape)

w0, a0 = heads[0]
alpha = gat_attention_weights(x[0] @ w0, x[[1, 2, 3]] @ w0, a0)
print("attention of node 0 over nodes 1, 2, 3:", alpha.round(3), "sum", alpha.sum())
