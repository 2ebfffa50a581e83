"""Score a few triples with the three tuple models and check how they relate.

Run: python demos/01_scoring.py
"""
import numpy as np

from mmkg.tuple_models import score_distmult, score_transe, score_tucker, superdiagonal_core

rng = np.random.default_rng(0)
h, r, t = (rng.normal(size=(3, 4)) for _ in range(3))

print("TransE   ", np.round(score_transe(h, r, t).value, 4))
print("DistMult ", np.round(score_distmult(h, r, t).value, 4))

# a superdiagonal unit core turns TuckER into DistMult
print("TuckER(I)", np.round(score_tucker(superdiagonal_core(4), h, r, t).value, 4))

# DistMult cannot tell head from tail
print("swapped  ", np.round(score_distmult(t, r, h).value, 4))

# a general core breaks that symmetry
core = rng.normal(size=(4, 4, 4))
print("TuckER   ", np.round(score_tucker(core, h, r, t).value, 4), "vs swapped",
      np.round(score_tucker(core, t, r, h).value, 4))
