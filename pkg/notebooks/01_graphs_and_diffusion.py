# %% [markdown]
# Graphs, batches and the diffused view
#
# Load a TU-format dataset (a synthetic one is written to a temp dir if no
# real data is around), look at its summary, then build the personalized
# PageRank view each graph is contrasted against.

# %%
import os
import tempfile
from pathlib import Path

import numpy as np

from fclg import load_tu_dataset, ppr_diffusion
from fclg.graphs import make_batches
from fclg.synthetic import write_synthetic_tu

data_dir = Path(os.environ.get("FCLG_DATA_DIR", ""))
name = os.environ.get("FCLG_DATASET", "PROTEINS")
if not (data_dir / name).exists() and not (data_dir / f"{name}_A.txt").exists():
    data_dir = Path(tempfile.mkdtemp())
    name = "SYNTH"
    write_synthetic_tu(data_dir, name, per_class=(30, 30), seed=0)

graphs = load_tu_dataset(data_dir, name)
print(name, graphs.stats())

# %%
# one graph, its adjacency and PPR diffusion
g = graphs[0]
A = g.adjacency()
S = ppr_diffusion(g, alpha=0.2).S
print("nodes", g.num_nodes, "edges", g.num_edges)
print("row sums of S (1 for regular graphs, close to it otherwise):", np.round(S.sum(1)[:5], 3))
print("S symmetric:", np.allclose(S, S.T), " min entry:", S.min())

# %%
# small alpha spreads mass, alpha near 1 keeps it on the diagonal
for alpha in (0.05, 0.2, 0.9):
    S = ppr_diffusion(g, alpha).S
    print(f"alpha={alpha:<5} diagonal share {np.trace(S) / S.sum():.3f}")

# %%
# a mini-batch stacks graphs block-diagonally; both views share node order
batch = make_batches(graphs, 8, np.random.default_rng(0), alpha=0.2)[0]
print("batch graphs", batch.graph_ids, "nodes", batch.num_nodes)
print("original operator nnz", batch.operator("original").nnz,
      "diffused operator nnz", batch.operator("diffused").nnz)
