"""How the gate blends a node embedding with a projected text feature.

Run: python demos/03_gating.py
"""
import numpy as np

from mmkg.autodiff import ParameterSet
from mmkg.gating import init_gate_params, node_gate

p = ParameterSet(np.float64)
init_gate_params(p, "node", "text", 2, {"text": 2}, np.random.default_rng(0))
p["gate.node.text.proj"].value = np.eye(2)

v = np.array([[0.0, 0.0]])
feat = np.array([[2.0, 4.0]])

# fresh gates sit at s = 0.5, so the output is the midpoint
out, s, _ = node_gate(v, feat, "text", p, return_gate=True)
print("fresh gate s =", s.value.ravel(), "->", out.value)

for bias in (-6.0, 0.0, 6.0):
    p["gate.node.text.b2"].value[...] = bias
    out, s, _ = node_gate(v, feat, "text", p, return_gate=True)
    print(f"b2={bias:+.0f}  s={s.value.item():.3f}  out={out.value.round(3)}")
