"""Graph containers, TU-format ingestion and block-diagonal batching."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp


class DatasetError(Exception):
    """Raised when TU files are missing or malformed."""


@dataclass(frozen=True, eq=False)
class Graph:
    id: int
    num_nodes: int
    edges: np.ndarray  # (m, 2) int, each unordered pair once with u < v
    node_features: np.ndarray  # (num_nodes, F) float64
    label: int

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "edges", edges)
        x = np.asarray(self.node_features, dtype=np.float64)
        object.__setattr__(self, "node_features", x)
        if x.shape[0] != self.num_nodes:
            raise ValueError(f"graph {self.id}: {x.shape[0]} feature rows for {self.num_nodes} nodes")
        if edges.size and (edges.min() < 0 or edges.max() >= self.num_nodes):
            raise ValueError(f"graph {self.id}: edge endpoint out of range")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"graph {self.id}: non-finite node features")

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix."""
        a = np.zeros((self.num_nodes, self.num_nodes))
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a


def canonical_edges(pairs) -> np.ndarray:
    """Sort, orient u < v, drop self-loops and duplicates."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if len(pairs) == 0:
        return pairs
    return np.unique(pairs, axis=0)


class GraphSet:
    """Immutable collection of graphs sharing one feature dimension.

    Diffusion matrices are computed on first request per teleport value and
    cached for the lifetime of the set.
    """

    def __init__(self, graphs: Sequence[Graph], num_classes: int, name: str = ""):
        self.graphs = tuple(graphs)
        self.num_classes = int(num_classes)
        self.name = name
        if not self.graphs:
            self.feature_dim = 0
        else:
            dims = {g.node_features.shape[1] for g in self.graphs}
            if len(dims) != 1:
                raise ValueError(f"graphs disagree on feature dimension: {sorted(dims)}")
            self.feature_dim = dims.pop()
        labels = self.labels
        if len(labels) and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise ValueError("labels outside [0, num_classes)")
        self._diffusion_cache: dict[float, list[np.ndarray]] = {}

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i) -> Graph:
        return self.graphs[i]

    def __iter__(self):
        return iter(self.graphs)

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def stats(self) -> dict:
        nodes = np.array([g.num_nodes for g in self.graphs], dtype=float)
        edges = np.array([g.num_edges for g in self.graphs], dtype=float)
        return {
            "graphs": len(self.graphs),
            "classes": self.num_classes,
            "mean_nodes": float(nodes.mean()) if len(nodes) else 0.0,
            "mean_edges": float(edges.mean()) if len(edges) else 0.0,
            "feature_dim": self.feature_dim,
        }

    def diffusions(self, alpha: float) -> list[np.ndarray]:
        from .augment import ppr_diffusion

        key = float(alpha)
        if key not in self._diffusion_cache:
            self._diffusion_cache[key] = [ppr_diffusion(g, key).S for g in self.graphs]
        return self._diffusion_cache[key]


# ---------------------------------------------------------------------------
# TU format


def _tu_path(data_dir: Path, name: str, suffix: str) -> Path:
    for base in (data_dir / name, data_dir):
        p = base / f"{name}_{suffix}.txt"
        if p.exists():
            return p
    return data_dir / name / f"{name}_{suffix}.txt"


def _read_ints(path: Path, cols: int | None = None) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                vals = [int(float(t)) for t in line.split(",")]
            except ValueError:
                raise DatasetError(f"{path.name}:{lineno}: cannot parse {line!r}") from None
            if cols is not None and len(vals) != cols:
                raise DatasetError(f"{path.name}:{lineno}: expected {cols} values, got {len(vals)}")
            rows.append(vals if cols and cols > 1 else vals[0])
    return np.array(rows, dtype=np.int64)


def _read_floats(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(t) for t in line.split(",")])
            except ValueError:
                raise DatasetError(f"{path.name}:{lineno}: cannot parse {line!r}") from None
    width = {len(r) for r in rows}
    if len(width) > 1:
        raise DatasetError(f"{path.name}: ragged attribute rows")
    return np.array(rows, dtype=np.float64)


def _one_hot(values: np.ndarray) -> np.ndarray:
    uniq, idx = np.unique(values, return_inverse=True)
    out = np.zeros((len(values), len(uniq)))
    out[np.arange(len(values)), idx] = 1.0
    return out


def load_tu_dataset(data_dir, name: str) -> GraphSet:
    """Read a TU benchmark dataset from ``data_dir``.

    Files may sit directly in ``data_dir`` or in ``data_dir/name``. Node
    features: one-hot node labels if present, else node attributes, else
    one-hot degree.
    """
    data_dir = Path(data_dir)
    paths = {s: _tu_path(data_dir, name, s) for s in ("A", "graph_indicator", "graph_labels")}
    for suffix, p in paths.items():
        if not p.exists():
            raise DatasetError(f"missing required file {name}_{suffix}.txt under {data_dir}")

    indicator = _read_ints(paths["graph_indicator"])
    graph_labels = _read_ints(paths["graph_labels"])
    n_graphs = len(graph_labels)
    n_nodes = len(indicator)
    if n_nodes == 0 or n_graphs == 0:
        raise DatasetError(f"{name}: empty dataset")
    bad = np.flatnonzero((indicator < 1) | (indicator > n_graphs))
    if len(bad):
        raise DatasetError(f"{name}_graph_indicator.txt:{bad[0] + 1}: graph id {indicator[bad[0]]} "
                           f"outside [1, {n_graphs}]")
    if np.any(np.diff(indicator) < 0):
        raise DatasetError(f"{name}_graph_indicator.txt: node ids are not grouped by graph")

    edges = _read_ints(paths["A"], cols=2).reshape(-1, 2)
    bad = np.flatnonzero(((edges < 1) | (edges > n_nodes)).any(axis=1))
    if len(bad):
        raise DatasetError(f"{name}_A.txt:{bad[0] + 1}: node id outside [1, {n_nodes}]")
    bad = np.flatnonzero(indicator[edges[:, 0] - 1] != indicator[edges[:, 1] - 1])
    if len(bad):
        u, v = edges[bad[0]]
        raise DatasetError(f"{name}_A.txt:{bad[0] + 1}: edge joins graphs {indicator[u - 1]} and {indicator[v - 1]}")
    edges = edges - 1
    gidx = indicator - 1

    node_label_path = _tu_path(data_dir, name, "node_labels")
    attr_path = _tu_path(data_dir, name, "node_attributes")
    if node_label_path.exists():
        node_labels = _read_ints(node_label_path)
        if len(node_labels) != n_nodes:
            raise DatasetError(f"{name}_node_labels.txt: {len(node_labels)} lines for {n_nodes} nodes")
        features = _one_hot(node_labels)
    elif attr_path.exists():
        features = _read_floats(attr_path)
        if len(features) != n_nodes:
            raise DatasetError(f"{name}_node_attributes.txt: {len(features)} lines for {n_nodes} nodes")
    else:
        features = None

    counts = np.bincount(gidx, minlength=n_graphs)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    edge_graph = gidx[edges[:, 0]] if len(edges) else np.zeros(0, dtype=np.int64)
    order = np.argsort(edge_graph, kind="stable")
    edges, edge_graph = edges[order], edge_graph[order]
    edge_bounds = np.searchsorted(edge_graph, np.arange(n_graphs + 1))

    local_edges = []
    for g in range(n_graphs):
        e = edges[edge_bounds[g]:edge_bounds[g + 1]] - offsets[g]
        local_edges.append(canonical_edges(e))

    if features is None:
        degrees = []
        for g in range(n_graphs):
            deg = np.zeros(counts[g], dtype=np.int64)
            np.add.at(deg, local_edges[g].ravel(), 1)
            degrees.append(deg)
        max_deg = max(int(d.max()) if len(d) else 0 for d in degrees)
        features = np.zeros((n_nodes, max_deg + 1))
        features[np.arange(n_nodes), np.concatenate(degrees)] = 1.0

    uniq_labels, dense_labels = np.unique(graph_labels, return_inverse=True)
    graphs = [
        Graph(
            id=g,
            num_nodes=int(counts[g]),
            edges=local_edges[g],
            node_features=features[offsets[g]:offsets[g + 1]],
            label=int(dense_labels[g]),
        )
        for g in range(n_graphs)
    ]
    return GraphSet(graphs, num_classes=len(uniq_labels), name=name)


def write_tu_dataset(graphs: GraphSet, data_dir, name: str, node_labels: Sequence[int] | None = None) -> Path:
    """Serialize a GraphSet in TU format (1-indexed, both edge directions).

    Node features are written as ``node_attributes`` unless explicit integer
    ``node_labels`` are given.
    """
    out = Path(data_dir) / name
    out.mkdir(parents=True, exist_ok=True)
    offset = 0
    with open(out / f"{name}_A.txt", "w") as fa, open(out / f"{name}_graph_indicator.txt", "w") as fi:
        for gi, g in enumerate(graphs):
            for u, v in g.edges:
                fa.write(f"{u + offset + 1}, {v + offset + 1}\n")
                fa.write(f"{v + offset + 1}, {u + offset + 1}\n")
            fi.write(f"{gi + 1}\n" * g.num_nodes)
            offset += g.num_nodes
    with open(out / f"{name}_graph_labels.txt", "w") as fl:
        fl.writelines(f"{g.label}\n" for g in graphs)
    if node_labels is not None:
        with open(out / f"{name}_node_labels.txt", "w") as fn:
            fn.writelines(f"{int(x)}\n" for x in node_labels)
    else:
        with open(out / f"{name}_node_attributes.txt", "w") as fn:
            for g in graphs:
                for row in g.node_features:
                    fn.write(", ".join(repr(float(x)) for x in row) + "\n")
    return out


# ---------------------------------------------------------------------------
# batching


@dataclass(eq=False)
class GraphBatch:
    graph_ids: np.ndarray
    node_offsets: np.ndarray  # (B,) starting row of each graph
    membership: np.ndarray  # (N_total,) graph index within the batch
    features: np.ndarray  # (N_total, F)
    neighbors: list  # per-graph (m, 2) canonical edge arrays
    diffusions: list | None = None  # per-graph dense (n, n) weights
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def batch_size(self) -> int:
        return len(self.node_offsets)

    @property
    def num_nodes(self) -> int:
        return len(self.membership)

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(np.append(self.node_offsets, self.num_nodes))

    def operator(self, view: str) -> sp.csr_matrix:
        """Block-diagonal neighbour-weight matrix for ``view``.

        The original view is the binary adjacency; the diffused view uses the
        cached diffusion weights.
        """
        if view not in self._ops:
            if view == "original":
                n = self.num_nodes
                parts = [e + o for e, o in zip(self.neighbors, self.node_offsets) if len(e)]
                e = np.concatenate(parts) if parts else np.zeros((0, 2), dtype=np.int64)
                rows = np.concatenate([e[:, 0], e[:, 1]])
                cols = np.concatenate([e[:, 1], e[:, 0]])
                op = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
            elif view == "diffused":
                if self.diffusions is None:
                    raise ValueError("batch was built without diffusion matrices")
                op = sp.block_diag(self.diffusions, format="csr")
            else:
                raise ValueError(f"unknown view {view!r}")
            op.sort_indices()
            self._ops[view] = op
        return self._ops[view]

    def pooling(self) -> sp.csr_matrix:
        """(B, N_total) 0/1 matrix summing node rows into their graph."""
        if "pool" not in self._ops:
            n = self.num_nodes
            self._ops["pool"] = sp.csr_matrix((np.ones(n), (self.membership, np.arange(n))),
                                              shape=(self.batch_size, n))
        return self._ops["pool"]


def batch_graphs(graphs: Sequence[Graph], diffusions: Sequence[np.ndarray] | None = None) -> GraphBatch:
    if len(graphs) == 0:
        raise ValueError("cannot batch zero graphs")
    sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    return GraphBatch(
        graph_ids=np.array([g.id for g in graphs], dtype=np.int64),
        node_offsets=offsets,
        membership=np.repeat(np.arange(len(graphs)), sizes),
        features=np.concatenate([g.node_features for g in graphs], axis=0),
        neighbors=[g.edges for g in graphs],
        diffusions=list(diffusions) if diffusions is not None else None,
    )


def make_batches(graphs: GraphSet, batch_size: int, rng: np.random.Generator | None = None,
                 indices: Sequence[int] | None = None, alpha: float | None = None) -> list[GraphBatch]:
    """Shuffle ``indices`` (default: all graphs) and cut into batches.

    The last batch keeps the remainder. With ``alpha`` set, each batch also
    carries the diffused view.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    idx = np.arange(len(graphs)) if indices is None else np.asarray(indices, dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("no graphs to batch")
    if rng is not None:
        idx = idx[rng.permutation(len(idx))]
    diff = graphs.diffusions(alpha) if alpha is not None else None
    batches = []
    for start in range(0, len(idx), batch_size):
        chunk = idx[start:start + batch_size]
        batches.append(batch_graphs([graphs[i] for i in chunk],
                                    [diff[i] for i in chunk] if diff is not None else None))
    return batches
