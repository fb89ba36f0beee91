"""Reference implementations that share no code path with the package."""
import itertools
import math

import numpy as np


def brute_intra_loss(U, V, tau):
    """Per-pair enumeration of the intra-contrast objective with plain floats."""
    U = [list(map(float, r)) for r in U]
    V = [list(map(float, r)) for r in V]
    B = len(U)
    pool = [("u", i) for i in range(B)] + [("v", i) for i in range(B)]

    def vec(tag, i):
        return U[i] if tag == "u" else V[i]

    def dot(a, b):
        return sum(x * y for x, y in zip(a, b))

    def pair(anchor, positive):
        a = vec(*anchor)
        terms = [dot(a, vec(*z)) / tau for z in pool if z != anchor]
        m = max(terms)
        lse = m + math.log(sum(math.exp(t - m) for t in terms))
        return lse - dot(a, vec(*positive)) / tau

    total = sum(pair(("u", i), ("v", i)) + pair(("v", i), ("u", i)) for i in range(B))
    return total / (2 * B)


def power_series_ppr(adj, alpha, terms=None):
    n = len(adj)
    if terms is None:
        # tail mass (1 - alpha)^terms below 1e-15
        terms = int(math.ceil(math.log(1e-15) / math.log(1 - alpha)))
    a = np.asarray(adj, dtype=float) + np.eye(n)
    deg = a.sum(axis=1)
    t = np.array([[a[i, j] / math.sqrt(deg[i] * deg[j]) for j in range(n)] for i in range(n)])
    s = np.zeros((n, n))
    term = np.eye(n)
    for k in range(terms + 1):
        s += alpha * (1 - alpha) ** k * term
        term = term @ t
    return s


def loop_encoder(layers, graphs_weights, features_per_graph):
    """Node-by-node GIN forward; ``layers`` is a list of (W1, b1, W2, b2)."""
    U = []
    for W, X in zip(graphs_weights, features_per_graph):
        n = len(X)
        h = [np.array(x, dtype=float) for x in X]
        per_layer = []
        for W1, b1, W2, b2 in layers:
            new = []
            for v in range(n):
                agg = h[v].copy()
                for u in range(n):
                    if W[v][u] != 0:
                        agg = agg + W[v][u] * h[u]
                hidden = np.array([max(0.0, sum(agg[i] * W1[i][j] for i in range(len(agg))) + b1[j])
                                   for j in range(len(b1))])
                out = np.array([max(0.0, sum(hidden[i] * W2[i][j] for i in range(len(hidden))) + b2[j])
                                for j in range(len(b2))])
                new.append(out)
            h = new
            per_layer.append(np.array(h))
        H = np.concatenate(per_layer, axis=1)
        U.append(H.sum(axis=0))
    return np.array(U)


def central_differences(f, x, step=1e-5):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + step
        hi = f(x)
        x.flat[i] = orig - step
        lo = f(x)
        x.flat[i] = orig
        g.flat[i] = (hi - lo) / (2 * step)
    return g


def rel_err(analytic, numeric):
    """Max abs deviation relative to the larger gradient magnitude."""
    analytic, numeric = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.abs(analytic).max(initial=0), np.abs(numeric).max(initial=0), 1e-12)
    return float(np.abs(analytic - numeric).max(initial=0) / scale)


def brute_matching_accuracy(cont):
    cont = np.asarray(cont)
    k, c = cont.shape
    best = 0
    if k <= c:
        for perm in itertools.permutations(range(c), k):
            best = max(best, sum(cont[i, perm[i]] for i in range(k)))
    else:
        for perm in itertools.permutations(range(k), c):
            best = max(best, sum(cont[perm[j], j] for j in range(c)))
    return best / cont.sum()
