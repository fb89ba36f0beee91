"""Small labelled random graphs for tests and demos.

Classes differ in edge density and in the mix of discrete node labels, so
a working encoder can separate them without supervision.
"""
from __future__ import annotations

import numpy as np

from .graphs import Graph, GraphSet, canonical_edges, write_tu_dataset


def random_graph_edges(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    iu = np.triu_indices(n, k=1)
    keep = rng.random(len(iu[0])) < p
    return canonical_edges(np.stack([iu[0][keep], iu[1][keep]], axis=1))


def make_graph_set(per_class=(20, 20), num_node_labels: int = 3, nodes=(6, 14),
                   seed: int = 0, name: str = "SYNTH", return_node_labels: bool = False):
    rng = np.random.default_rng(seed)
    num_classes = len(per_class)
    graphs, node_labels = [], []
    gid = 0
    for c, count in enumerate(per_class):
        density = 0.15 + 0.5 * c / max(num_classes - 1, 1)
        mix = np.full(num_node_labels, 1.0)
        mix[c % num_node_labels] += 3.0
        mix /= mix.sum()
        for _ in range(count):
            n = int(rng.integers(nodes[0], nodes[1] + 1))
            lab = rng.choice(num_node_labels, size=n, p=mix)
            x = np.zeros((n, num_node_labels))
            x[np.arange(n), lab] = 1.0
            graphs.append(Graph(gid, n, random_graph_edges(n, density, rng), x, c))
            node_labels.extend(lab.tolist())
            gid += 1
    gs = GraphSet(graphs, num_classes, name)
    return (gs, node_labels) if return_node_labels else gs


def write_synthetic_tu(data_dir, name: str = "SYNTH", **kwargs):
    """Write a synthetic dataset in TU layout; node labels go to ``name_node_labels.txt``."""
    gs, node_labels = make_graph_set(name=name, return_node_labels=True, **kwargs)
    return write_tu_dataset(gs, data_dir, name, node_labels=node_labels)
