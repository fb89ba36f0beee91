"""Round-based federated contrastive training and its baselines."""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import losses
from .evaluation import evaluate_embeddings
from .graphs import GraphSet, batch_graphs, make_batches
from .nn import AdamWState, EncoderParams, adamw_step, backward, encode, init_params, load_params, save_params, sgd_step
from .partition import Partition

VARIANTS = ("fclg", "fclg_h", "intra_fedavg", "intra_fedprox", "intra_kl", "intra_mse",
            "intra_central", "vanilla_ensemble")
INTRA_ONLY = ("intra_fedavg", "intra_central", "vanilla_ensemble")
# ReLU can zero a node's whole representation; clamp norms instead of failing
COSINE_EPS = 1e-8

# tags separating the independent random streams derived from one seed
_INIT, _SAMPLE, _CLIENT, _SERVER, _EVAL = 11, 23, 37, 41, 53

# published hyper-parameters per benchmark dataset
PRESETS = {
    "PROTEINS": dict(lr=1e-3, num_layers=2, hidden=128, batch_size=128, tau=1e2, tau_prime=0.5, alpha=0.05,
                     local_epochs=20, rounds=20),
    "ENZYMES": dict(lr=1e-5, num_layers=4, hidden=256, batch_size=128, tau=1.0, tau_prime=1.0, alpha=0.1,
                    local_epochs=10, rounds=20),
    "DHFR": dict(lr=1e-4, num_layers=5, hidden=256, batch_size=128, tau=1.0, tau_prime=1.0, alpha=0.2,
                 local_epochs=40, rounds=20),
    "NCI1": dict(lr=1e-4, num_layers=5, hidden=32, batch_size=64, tau=1e-2, tau_prime=0.5, alpha=0.2,
                 local_epochs=5, rounds=20),
}
# EMD of the non-IID splits reported alongside each dataset
TARGET_EMD = {"PROTEINS": 0.5774, "ENZYMES": 1.2667, "DHFR": 0.5694, "NCI1": 0.5995}


class TrainingError(RuntimeError):
    pass


@dataclass
class FLConfig:
    variant: str = "fclg"
    rounds: int = 20
    local_epochs: int = 20
    clients: int = 6
    gamma: float = 1.0
    tau: float = 1e2
    tau_prime: float = 0.5
    alpha: float = 0.05
    lr: float = 1e-3
    weight_decay: float = 0.01
    batch_size: int = 128
    num_layers: int = 2
    hidden: int = 128
    kd_temperature: float = 1.0
    mu: float = 0.01
    server_fraction: float | None = None
    server_epochs: int | None = None
    optimizer: str = "adamw"
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {', '.join(VARIANTS)}")
        for name in ("rounds", "server_epochs"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("local_epochs", "clients", "batch_size", "num_layers", "hidden", "restarts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        for name in ("tau", "tau_prime", "kd_temperature"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lr", "weight_decay", "mu"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.optimizer not in ("adamw", "sgd"):
            raise ValueError("optimizer must be 'adamw' or 'sgd'")
        if self.server_fraction is not None and not 0.0 < self.server_fraction < 1.0:
            raise ValueError("server_fraction must lie in (0, 1)")

    @classmethod
    def for_dataset(cls, name: str, **overrides) -> "FLConfig":
        return cls(**{**PRESETS[name.upper()], **overrides})

    def replace(self, **changes) -> "FLConfig":
        return FLConfig(**{**asdict(self), **changes})


@dataclass
class ClientState:
    client_id: int
    shard: np.ndarray
    params: np.ndarray | None = None
    snapshot: np.ndarray | None = None
    rng: np.random.Generator | None = None


@dataclass
class RoundMetrics:
    round: int
    intra_loss: float
    inter_loss: float
    accuracy: float
    macro_f1: float
    wall_time: float
    participants: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class FederatedResult:
    metrics: list
    params: EncoderParams
    initial_params: EncoderParams | None = None
    history: list = field(default_factory=list, repr=False)  # global flat params after each round


def stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng([seed, *tags])


# ---------------------------------------------------------------------------
# loss dispatch


def variant_dispatch(variant: str, U_t, V_t, H_t=None, U_s=None, U_prev=None, H_s=None, H_prev=None,
                     params=None, global_flat=None, config: FLConfig | None = None) -> losses.LossValue:
    """Total loss for one batch under ``variant``.

    The returned value carries ``parts`` with the intra term and the
    model-level (inter / distillation / proximal) term separately.
    """
    config = config or FLConfig(variant=variant)
    intra = losses.intra_loss(U_t, V_t, config.tau)
    if variant in INTRA_ONLY:
        aux = None
    elif variant == "fclg":
        aux = losses.inter_loss_graph(U_t, U_s, U_prev, config.tau_prime, eps=COSINE_EPS)
    elif variant == "fclg_h":
        aux = losses.inter_loss_node(H_t, H_s, H_prev, config.tau_prime, eps=COSINE_EPS)
    elif variant == "intra_fedprox":
        aux = losses.fedprox_term(params, global_flat, config.mu)
    elif variant == "intra_kl":
        aux = losses.kd_kl(U_t, U_s, config.kd_temperature)
    elif variant == "intra_mse":
        aux = losses.kd_mse(U_t, U_s)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    total = losses.total_loss(intra, aux)
    total.parts = {"intra": intra.value, "inter": aux.value if aux is not None else 0.0}
    return total


# ---------------------------------------------------------------------------
# local training


def _needs(variant):
    global_ref = variant in ("fclg", "fclg_h", "intra_kl", "intra_mse")
    prev_ref = variant in ("fclg", "fclg_h")
    return global_ref, prev_ref


def batch_objective(current: EncoderParams, batch, config: FLConfig, variant: str,
                    global_params: EncoderParams | None = None,
                    snapshot: EncoderParams | None = None,
                    need_grad: bool = True) -> tuple[losses.LossValue, np.ndarray | None]:
    """Loss of one batch and its gradient wrt the flat parameters of ``current``.

    ``global_params`` and ``snapshot`` are frozen references; they are only
    encoded when the variant needs them. ``need_grad=False`` skips the
    backward pass and returns ``None`` for the gradient.
    """
    need_global, need_prev = _needs(variant)
    node_level = variant == "fclg_h"
    out_u = encode(current, batch, "original", keep_cache=need_grad)
    out_v = encode(current, batch, "diffused", keep_cache=need_grad)
    ref_s = encode(global_params, batch, "original") if need_global else None
    ref_p = None
    if need_prev:
        # during the first local epoch the snapshot is the global model itself
        ref_p = ref_s if snapshot is global_params else encode(snapshot, batch, "original")
    loss = variant_dispatch(
        variant, out_u.U, out_v.U, out_u.H,
        U_s=None if ref_s is None else ref_s.U,
        U_prev=None if ref_p is None else ref_p.U,
        H_s=ref_s.H if ref_s is not None and node_level else None,
        H_prev=ref_p.H if ref_p is not None and node_level else None,
        params=current.flat, global_flat=None if global_params is None else global_params.flat, config=config)
    if not need_grad:
        return loss, None
    grad = backward(current, out_u, loss.grads.get("U"), loss.grads.get("H"))
    grad += backward(current, out_v, loss.grads.get("V"))
    if "params" in loss.grads:
        grad += loss.grads["params"]
    return loss, grad


def train_epochs(params: EncoderParams, graphs: GraphSet, ids, epochs: int, rng: np.random.Generator,
                 config: FLConfig, variant: str, global_params: EncoderParams | None = None,
                 tag: str = "", trace=None) -> tuple[EncoderParams, list, list]:
    """Run ``epochs`` passes of mini-batch training starting from ``params``.

    The optimizer state starts fresh. The previous-epoch snapshot starts as
    ``global_params`` (or the starting params) and is refreshed at each
    epoch boundary. Returns the trained params and per-batch intra / inter
    loss values.
    """
    global_params = global_params if global_params is not None else params
    current = params.copy()
    snapshot = global_params  # never mutated; replaced at each epoch boundary
    state = AdamWState.zeros(current.flat.size, lr=config.lr, weight_decay=config.weight_decay)
    intra_vals, inter_vals = [], []
    for epoch in range(epochs):
        if trace is not None:
            trace.append((epoch, snapshot.flat.copy(), current.flat.copy()))
        for bi, batch in enumerate(make_batches(graphs, config.batch_size, rng, indices=ids, alpha=config.alpha)):
            where = f"{tag}, epoch {epoch}, batch {bi}"
            try:
                loss, grad = batch_objective(current, batch, config, variant, global_params, snapshot)
            except ValueError as exc:
                raise TrainingError(f"{exc} ({where})") from exc
            if not np.isfinite(loss.value):
                raise TrainingError(f"non-finite loss {loss.value} ({where})")
            try:
                if config.optimizer == "adamw":
                    flat, state = adamw_step(current.flat, grad, state)
                else:
                    flat = sgd_step(current.flat, grad, config.lr)
            except FloatingPointError as exc:
                raise TrainingError(f"{exc} ({where})") from None
            current = current.with_flat(flat)
            intra_vals.append(loss.parts["intra"])
            inter_vals.append(loss.parts["inter"])
        snapshot = current.copy()
    return current, intra_vals, inter_vals


def local_train(client: ClientState, global_params: EncoderParams, graphs: GraphSet, config: FLConfig,
                round_index: int = 0, variant: str | None = None, trace=None):
    """Client update: E local epochs from the received global model."""
    if len(client.shard) == 0:
        raise ValueError(f"client {client.client_id} has an empty shard")
    rng = client.rng if client.rng is not None else stream(config.seed, _CLIENT, client.client_id, round_index)
    variant = variant or config.variant
    if variant == "vanilla_ensemble":
        variant = "intra_fedavg"
    params, intra, inter = train_epochs(global_params, graphs, client.shard, config.local_epochs, rng, config,
                                        variant, global_params=global_params,
                                        tag=f"round {round_index}, client {client.client_id}", trace=trace)
    client.params = params.flat
    client.snapshot = params.flat.copy()
    return params, intra, inter


def fedavg_aggregate(client_params) -> np.ndarray:
    """Shard-size weighted mean of flat parameter vectors, in list order."""
    client_params = list(client_params)
    if not client_params:
        raise ValueError("no client parameters to aggregate")
    sizes = np.array([float(n) for _, n in client_params])
    if np.any(sizes <= 0):
        raise ValueError("shard sizes must be positive")
    weights = sizes / sizes.sum()
    # offsets from the first vector: identical inputs come back bit-for-bit
    base = np.asarray(client_params[0][0], dtype=np.float64)
    delta = np.zeros_like(base)
    for w, (vec, _) in zip(weights, client_params):
        if len(vec) != len(base):
            raise ValueError("client parameter vectors differ in length")
        delta += w * (np.asarray(vec, dtype=np.float64) - base)
    return base + delta


def embed(params: EncoderParams, graphs: GraphSet, ids=None, chunk: int = 256) -> np.ndarray:
    """Graph-level embeddings under the original view, in ``ids`` order."""
    ids = np.arange(len(graphs)) if ids is None else np.asarray(ids)
    parts = []
    for start in range(0, len(ids), chunk):
        batch = batch_graphs([graphs[i] for i in ids[start:start + chunk]])
        parts.append(encode(params, batch, "original").U)
    return np.concatenate(parts) if parts else np.zeros((0, params.out_dim))


def _evaluate(params, graphs, config):
    U = embed(params, graphs)
    # same clustering seed every round so metrics depend on the parameters only
    seed = int(np.random.SeedSequence([config.seed, _EVAL]).generate_state(1)[0])
    return evaluate_embeddings(U, graphs.labels, graphs.num_classes, restarts=config.restarts, seed=seed)


def _initial(config, graphs):
    return init_params(config.num_layers, graphs.feature_dim, config.hidden, stream(config.seed, _INIT))


# ---------------------------------------------------------------------------
# checkpoints


def _resume(checkpoint_dir: Path | None, rounds: int):
    if checkpoint_dir is None:
        return 0, None, []
    files = sorted(checkpoint_dir.glob("round_*.params"))
    metrics_path = checkpoint_dir / "metrics.jsonl"
    if not files or not metrics_path.exists():
        return 0, None, []
    done = min(int(files[-1].stem.split("_")[1]), rounds)
    records = [json.loads(l) for l in metrics_path.read_text().splitlines() if l.strip()][:done]
    if len(records) < done:
        done = len(records)
    if done == 0:
        return 0, None, []
    params = load_params(checkpoint_dir / f"round_{done:04d}.params")
    return done, params, [RoundMetrics(**r) for r in records]


def _checkpoint(checkpoint_dir: Path | None, round_number: int, params, metric: RoundMetrics):
    if checkpoint_dir is None:
        return
    save_params(checkpoint_dir / f"round_{round_number:04d}.params", params)
    with open(checkpoint_dir / "metrics.jsonl", "a") as fh:
        fh.write(json.dumps(metric.to_dict()) + "\n")


# ---------------------------------------------------------------------------
# drivers


def sample_clients(config: FLConfig, round_index: int) -> np.ndarray:
    m = math.ceil(config.gamma * config.clients)
    if m >= config.clients:
        return np.arange(config.clients)
    picked = stream(config.seed, _SAMPLE, round_index).choice(config.clients, size=m, replace=False)
    return np.sort(picked)


def run_federated(config: FLConfig, partition: Partition, graphs: GraphSet, workers: int = 1,
                  checkpoint_dir=None, keep_history: bool = False, evaluate: bool = True,
                  log=None) -> FederatedResult:
    """Broadcast / local-train / aggregate / evaluate for ``config.rounds`` rounds.

    ``workers > 1`` trains the sampled clients on a thread pool; results do
    not depend on it. With ``checkpoint_dir`` the global model and metrics
    are written after every round and an interrupted run resumes from the
    last complete round.
    """
    if partition.num_clients != config.clients:
        raise ValueError(f"partition has {partition.num_clients} clients, config expects {config.clients}")
    if config.variant == "vanilla_ensemble" and (partition.server_shard is None or len(partition.server_shard) == 0):
        raise ValueError("vanilla_ensemble needs a non-empty server shard")
    graphs.diffusions(config.alpha)  # fill the cache before any threads start
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)

    initial = _initial(config, graphs)
    start, resumed, metrics = _resume(ckpt, config.rounds)
    global_params = resumed if resumed is not None else initial
    history = []
    server_epochs = config.local_epochs if config.server_epochs is None else config.server_epochs

    for j in range(start, config.rounds):
        t0 = time.perf_counter()
        chosen = sample_clients(config, j)
        states = [ClientState(int(i), partition.client_shards[i]) for i in chosen]

        def work(state):
            return local_train(state, global_params, graphs, config, j)

        if workers > 1 and len(states) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(work, states))
        else:
            outcomes = [work(s) for s in states]

        agg = fedavg_aggregate([(p.flat, len(s.shard)) for s, (p, _, _) in zip(states, outcomes)])
        global_params = global_params.with_flat(agg)
        intra = [v for _, a, _ in outcomes for v in a]
        inter = [v for _, _, b in outcomes for v in b]

        if config.variant == "vanilla_ensemble" and server_epochs > 0:
            global_params, s_intra, _ = train_epochs(
                global_params, graphs, partition.server_shard, server_epochs, stream(config.seed, _SERVER, j),
                config, "intra_fedavg", tag=f"round {j}, server")
            intra.extend(s_intra)

        if evaluate:
            scores = _evaluate(global_params, graphs, config)
            acc, f1 = scores["accuracy"], scores["macro_f1"]
        else:
            acc = f1 = float("nan")
        metric = RoundMetrics(j + 1, float(np.mean(intra)) if intra else 0.0,
                              float(np.mean(inter)) if inter else 0.0, acc, f1,
                              time.perf_counter() - t0, [int(i) for i in chosen])
        metrics.append(metric)
        if keep_history:
            history.append(global_params.flat.copy())
        _checkpoint(ckpt, j + 1, global_params, metric)
        if log is not None:
            log(metric)
    return FederatedResult(metrics, global_params, initial, history)


def run_intra_central(config: FLConfig, graphs: GraphSet, keep_history: bool = False,
                      evaluate: bool = True, log=None) -> FederatedResult:
    """Single model on the pooled data with the intra loss only.

    Trains ``rounds * local_epochs`` epochs in blocks of ``local_epochs``,
    evaluating after each block. Each block restarts the optimizer and
    draws its shuffles from the same stream a lone client would use, so a
    one-client federated run reproduces this trajectory exactly.
    """
    graphs.diffusions(config.alpha)
    params = _initial(config, graphs)
    initial = params
    ids = np.arange(len(graphs))
    metrics, history = [], []
    for j in range(config.rounds):
        t0 = time.perf_counter()
        params, intra, _ = train_epochs(params, graphs, ids, config.local_epochs, stream(config.seed, _CLIENT, 0, j),
                                        config, "intra_fedavg", tag=f"block {j}")
        if evaluate:
            scores = _evaluate(params, graphs, config)
            acc, f1 = scores["accuracy"], scores["macro_f1"]
        else:
            acc = f1 = float("nan")
        metric = RoundMetrics(j + 1, float(np.mean(intra)), 0.0, acc, f1, time.perf_counter() - t0, [0])
        metrics.append(metric)
        if keep_history:
            history.append(params.flat.copy())
        if log is not None:
            log(metric)
    return FederatedResult(metrics, params, initial, history)


def run_vanilla_ensemble(config: FLConfig, partition: Partition, graphs: GraphSet, **kwargs) -> FederatedResult:
    """Intra-only clients, FedAvg, then a server pass on its own shard each round."""
    return run_federated(config.replace(variant="vanilla_ensemble"), partition, graphs, **kwargs)


def run(config: FLConfig, partition: Partition | None, graphs: GraphSet, **kwargs) -> FederatedResult:
    if config.variant == "intra_central":
        kwargs.pop("workers", None)
        kwargs.pop("checkpoint_dir", None)
        return run_intra_central(config, graphs, **kwargs)
    return run_federated(config, partition, graphs, **kwargs)


def config_fields() -> list[str]:
    return [f.name for f in fields(FLConfig)]
