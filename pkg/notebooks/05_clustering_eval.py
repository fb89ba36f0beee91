# %% [markdown]
# Clustering evaluation
#
# K-Means with k = number of classes, then the best one-to-one cluster ->
# class map (Hungarian method) gives accuracy; macro-F1 reuses that map.

# %%
import numpy as np

from fclg import clustering_accuracy, evaluate_embeddings, kmeans
from fclg.evaluation import apply_mapping, contingency, macro_f1, match_clusters

rng = np.random.default_rng(0)
X = np.vstack([rng.normal(0, 1, (40, 2)), rng.normal(4, 1, (40, 2)), rng.normal((0, 6), 1, (40, 2))])
y = np.repeat([2, 0, 1], 40)

res = kmeans(X, 3, restarts=10, seed=0)
print("inertia", round(res.inertia, 2))
print(contingency(res.assignments, y, 3, 3))

# %%
mapping = match_clusters(res.assignments, y, 3, 3)
print("cluster -> class", mapping)
print("accuracy", clustering_accuracy(res.assignments, y, 3, 3))
print("macro F1", round(macro_f1(apply_mapping(res.assignments, mapping), y, 3), 4))

# %%
# the same in one call
scores = evaluate_embeddings(X, y, 3)
print({k: round(v, 4) for k, v in scores.items() if k != "clustering"})
