"""Client sharding by class label and the EMD skew measure."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graphs import GraphSet


class PartitionError(ValueError):
    pass


@dataclass(eq=False)
class Partition:
    client_shards: list  # K arrays of graph ids
    server_shard: np.ndarray | None
    class_histograms: np.ndarray  # (K, C) rows sum to 1 (all-zero for empty shards)
    population: np.ndarray  # (C,)
    emd: float
    dominant_fraction: float | None = None

    @property
    def num_clients(self) -> int:
        return len(self.client_shards)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.client_shards], dtype=np.int64)


def _histograms(shards, labels, num_classes):
    hist = np.zeros((len(shards), num_classes))
    for i, shard in enumerate(shards):
        if len(shard):
            hist[i] = np.bincount(labels[shard], minlength=num_classes) / len(shard)
    return hist


def emd_from_shards(shards, labels, num_classes: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Size-weighted mean L1 distance between client and population class mixes."""
    labels = np.asarray(labels)
    sizes = np.array([len(s) for s in shards], dtype=float)
    total = sizes.sum()
    hist = _histograms(shards, labels, num_classes)
    if total == 0:
        return 0.0, hist, np.zeros(num_classes)
    pop = np.bincount(labels[np.concatenate([np.asarray(s, dtype=np.int64) for s in shards])],
                      minlength=num_classes) / total
    dist = np.abs(hist - pop).sum(axis=1)
    return float(np.dot(sizes / total, dist)), hist, pop


def make_partition(shards, labels, num_classes: int, server_shard=None, dominant_fraction=None) -> Partition:
    shards = [np.sort(np.asarray(s, dtype=np.int64)) for s in shards]
    emd, hist, pop = emd_from_shards(shards, labels, num_classes)
    server = None if server_shard is None else np.asarray(server_shard, dtype=np.int64)
    return Partition(shards, server, hist, pop, emd, dominant_fraction)


def compute_emd(partition: Partition, labels) -> float:
    return emd_from_shards(partition.client_shards, labels, len(partition.population))[0]


def split_server_shard(graphs: GraphSet, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Carve a class-stratified server shard; returns (server ids, remaining ids)."""
    if not 0.0 < fraction < 1.0:
        raise PartitionError("server fraction must lie in (0, 1)")
    labels = graphs.labels
    server, rest = [], []
    for c in range(graphs.num_classes):
        ids = np.flatnonzero(labels == c)
        ids = ids[rng.permutation(len(ids))]
        take = int(round(fraction * len(ids)))
        server.append(ids[:take])
        rest.append(ids[take:])
    return np.sort(np.concatenate(server)), np.sort(np.concatenate(rest))


def _pool_ids(graphs: GraphSet, ids, server_fraction, rng):
    server = None
    if ids is None:
        ids = np.arange(len(graphs))
        if server_fraction:
            server, ids = split_server_shard(graphs, server_fraction, rng)
    return np.asarray(ids, dtype=np.int64), server


def partition_iid(graphs: GraphSet, num_clients: int, rng: np.random.Generator,
                  server_fraction: float | None = None, ids=None) -> Partition:
    """Deal each shuffled class round-robin across clients."""
    if num_clients < 1:
        raise PartitionError("need at least one client")
    ids, server = _pool_ids(graphs, ids, server_fraction, rng)
    if num_clients > len(ids):
        raise PartitionError(f"{num_clients} clients but only {len(ids)} graphs")
    labels = graphs.labels
    shards = [[] for _ in range(num_clients)]
    slot = 0
    for c in range(graphs.num_classes):
        members = ids[labels[ids] == c]
        members = members[rng.permutation(len(members))]
        for gid in members:
            shards[slot].append(gid)
            slot = (slot + 1) % num_clients
    return make_partition(shards, labels, graphs.num_classes, server)


def _even_split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def partition_noniid(graphs: GraphSet, num_clients: int, dominant_fraction: float, rng: np.random.Generator,
                     server_fraction: float | None = None, ids=None) -> Partition:
    """Rotate a dominant class across clients.

    Client ``i`` is dominated by class ``i mod C``: ``dominant_fraction`` of
    its quota comes from that class and the rest is spread evenly over the
    other classes. When a class pool runs dry the draw spills to the next
    class index (mod C).
    """
    if num_clients < 1:
        raise PartitionError("need at least one client")
    if not 0.0 < dominant_fraction <= 1.0:
        raise PartitionError("dominant_fraction must lie in (0, 1]")
    ids, server = _pool_ids(graphs, ids, server_fraction, rng)
    if num_clients > len(ids):
        raise PartitionError(f"{num_clients} clients but only {len(ids)} graphs")
    labels = graphs.labels
    C = graphs.num_classes
    pools = []
    for c in range(C):
        members = ids[labels[ids] == c]
        pools.append(list(members[rng.permutation(len(members))]))

    quotas = _even_split(len(ids), num_clients)
    wants = np.zeros((num_clients, C), dtype=np.int64)
    for i, q in enumerate(quotas):
        dom = i % C
        n_dom = q if C == 1 else int(round(dominant_fraction * q))
        wants[i, dom] = n_dom
        others = [(dom + j) % C for j in range(1, C)]
        for c, n in zip(others, _even_split(q - n_dom, max(C - 1, 1))):
            wants[i, c] += n

    # dominant draws first so every client gets its headline class before
    # minority requests drain the pools
    shards = [[] for _ in range(num_clients)]
    order = [(i, i % C) for i in range(num_clients)]
    order += [(i, c) for i in range(num_clients) for c in range(C) if c != i % C]
    for i, c in order:
        need = int(wants[i, c])
        for step in range(C):
            if need == 0:
                break
            pool = pools[(c + step) % C]
            take = min(need, len(pool))
            shards[i].extend(pool[:take])
            del pool[:take]
            need -= take
        if need:
            raise PartitionError("quota exceeds available graphs")
    return make_partition(shards, labels, C, server, dominant_fraction)


def calibrate_dominant_fraction(graphs: GraphSet, num_clients: int, target_emd: float, tolerance: float = 0.02,
                                seed: int = 0, server_fraction: float | None = None,
                                max_iter: int = 50) -> tuple[float, Partition]:
    """Bisect the dominant fraction until the partition EMD is within ``tolerance``.

    Every trial partition uses a fresh generator seeded with ``seed`` so EMD is
    a deterministic function of the fraction. The search runs on the
    increasing branch of EMD, from 1/C (balanced clients) up to 1 (pure
    clients).
    """
    if not 0.0 <= target_emd <= 2.0:
        raise PartitionError("target EMD must lie in [0, 2]")

    def trial(f):
        return partition_noniid(graphs, num_clients, f, np.random.default_rng(seed), server_fraction)

    # below 1/C the "dominant" class is under-represented; only the rising branch is meaningful
    grid = np.linspace(1.0 / max(graphs.num_classes, 1), 1.0, 121)
    trials = [(f, trial(f)) for f in grid]
    emds = np.array([p.emd for _, p in trials])
    lo_i, hi_i = int(np.argmin(emds)), int(np.argmax(emds))
    if target_emd < emds[lo_i] - tolerance or target_emd > emds[hi_i] + tolerance:
        raise PartitionError(f"target EMD {target_emd} unreachable; achievable range "
                             f"[{emds[lo_i]:.4f}, {emds[hi_i]:.4f}]")
    best = min(trials, key=lambda t: abs(t[1].emd - target_emd))
    lo, hi = sorted((grid[lo_i], grid[hi_i]))
    for _ in range(max_iter):
        if abs(best[1].emd - target_emd) <= tolerance:
            break
        mid = 0.5 * (lo + hi)
        p = trial(mid)
        if abs(p.emd - target_emd) < abs(best[1].emd - target_emd):
            best = (mid, p)
        if p.emd < target_emd:
            lo = mid
        else:
            hi = mid
    return float(best[0]), best[1]


# ---------------------------------------------------------------------------
# manifest: "client <i>: id id ..." lines, optional "server: ..." line


def write_manifest(partition: Partition, path) -> None:
    lines = []
    if partition.server_shard is not None:
        lines.append("server: " + " ".join(map(str, partition.server_shard)))
    for i, shard in enumerate(partition.client_shards):
        lines.append(f"client {i}: " + " ".join(map(str, shard)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path, labels, num_classes: int) -> Partition:
    server, shards = None, {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        head, _, body = line.partition(":")
        ids = np.array([int(t) for t in body.split()], dtype=np.int64)
        if head.strip() == "server":
            server = ids
        else:
            shards[int(head.split()[1])] = ids
    return make_partition([shards[i] for i in sorted(shards)], labels, num_classes, server)
