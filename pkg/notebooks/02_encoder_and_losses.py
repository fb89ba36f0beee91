# %% [markdown]
# GIN encoder and the two contrastive objectives
#
# The encoder maps a batch to per-graph vectors U (sum over nodes of every
# layer's output). Intra-contrast pairs each graph with its diffused view;
# inter-contrast pulls towards the global model and away from the last
# local snapshot.

# %%
import numpy as np

from fclg import encode, init_params, inter_loss_graph, intra_loss
from fclg.graphs import make_batches
from fclg.nn import encode_with_grad
from fclg.synthetic import make_graph_set

rng = np.random.default_rng(0)
graphs = make_graph_set((16, 16), seed=1)
batch = make_batches(graphs, 8, rng, alpha=0.2)[0]
params = init_params(2, graphs.feature_dim, 16, rng)

U = encode(params, batch, "original").U
V = encode(params, batch, "diffused").U
print("U", U.shape, "V", V.shape)

# %%
# dot products are unnormalised and sum pooling makes them large, hence a big tau
loss = intra_loss(U, V, tau=100.0)
print("intra loss", round(loss.value, 4), "grad wrt U", loss.grads["U"].shape)

# %%
# global model and snapshot equal -> positives and negatives coincide -> log 2
print("inter at the symmetric point", inter_loss_graph(U, U, U, 0.5).value, np.log(2))

other = init_params(2, graphs.feature_dim, 16, np.random.default_rng(9))
U_other = encode(other, batch, "original").U
print("inter with a different snapshot", round(inter_loss_graph(U, U, U_other, 0.5).value, 4))

# %%
# chain the loss gradient back through the encoder, check one coordinate numerically
g = encode_with_grad(params, batch, "original", grad_U=loss.grads["U"]) \
    + encode_with_grad(params, batch, "diffused", grad_U=loss.grads["V"])
i, h = 5, 1e-6
f = lambda p: intra_loss(encode(p, batch).U, encode(p, batch, "diffused").U, 100.0).value
up, down = params.flat.copy(), params.flat.copy()
up[i] += h
down[i] -= h
print("analytic", g[i], "numeric", (f(params.with_flat(up)) - f(params.with_flat(down))) / (2 * h))
