"""Personalized-PageRank diffusion used as the augmented graph view."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .graphs import Graph


@dataclass(frozen=True, eq=False)
class DiffusionMatrix:
    S: np.ndarray
    alpha: float


def normalize_adjacency(graph: Graph) -> np.ndarray:
    """Symmetrically normalized adjacency with self-loops, D^-1/2 (A + I) D^-1/2."""
    a = graph.adjacency() + np.eye(graph.num_nodes)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return d[:, None] * a * d[None, :]


def ppr_diffusion(graph: Graph, alpha: float) -> DiffusionMatrix:
    """S = alpha * (I - (1 - alpha) T)^-1 by a dense symmetric solve."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n = graph.num_nodes
    t = normalize_adjacency(graph)
    m = np.eye(n) - (1.0 - alpha) * t
    s = alpha * scipy.linalg.solve(m, np.eye(n), assume_a="pos")
    # exact result is symmetric and non-negative; the solve is only so up to rounding
    s = np.maximum(0.5 * (s + s.T), 0.0)
    return DiffusionMatrix(S=s, alpha=float(alpha))
