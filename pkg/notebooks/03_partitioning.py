# %% [markdown]
# Splitting graphs across clients
#
# IID deals every class round-robin. Non-IID gives client i a dominant class
# (i mod C); the dominant fraction controls the skew, measured by EMD.

# %%
import numpy as np

from fclg import calibrate_dominant_fraction, partition_iid, partition_noniid
from fclg.synthetic import make_graph_set

graphs = make_graph_set((90, 90, 90), seed=0)
iid = partition_iid(graphs, 6, np.random.default_rng(0))
print("iid EMD", round(iid.emd, 4))

# %%
for f in (1 / 3, 0.5, 0.7, 0.9, 1.0):
    p = partition_noniid(graphs, 6, f, np.random.default_rng(0))
    print(f"fraction {f:.2f}  EMD {p.emd:.4f}  client 0 mix {np.round(p.class_histograms[0], 2)}")

# %%
# pick the fraction that hits a target skew
f, p = calibrate_dominant_fraction(graphs, 6, target_emd=0.6, tolerance=0.02)
print(f"target 0.6 -> fraction {f:.3f}, EMD {p.emd:.4f}, sizes {p.sizes}")

# %%
# unreachable targets report what is possible
try:
    calibrate_dominant_fraction(graphs, 6, target_emd=1.9)
except ValueError as exc:
    print(exc)
