"""Acceptance criteria, one test per criterion.

Each test records PASS / FAIL / BLOCKED in ``conftest.ACCEPTANCE``; the
terminal summary prints one line per criterion. Criteria that need the TU
benchmark files are BLOCKED (skipped) when they are absent from
``FCLG_DATA_DIR``.
"""
import contextlib
import math
import time

import numpy as np
import pytest

import conftest
from fclg.augment import ppr_diffusion
from fclg.evaluation import clustering_accuracy
from fclg.federated import (TARGET_EMD, VARIANTS, FLConfig, batch_objective, run_federated, run_intra_central)
from fclg.graphs import Graph, batch_graphs
from fclg.losses import intra_loss, inter_loss_graph, kd_logistic
from fclg.nn import init_params
from fclg.partition import calibrate_dominant_fraction, partition_iid
from fclg.synthetic import make_graph_set, random_graph_edges
from oracles import brute_intra_loss, brute_matching_accuracy, central_differences, power_series_ppr, rel_err

pytestmark = pytest.mark.acceptance

BENCHMARK_STATS = {  # graphs, classes, mean nodes
    "PROTEINS": (1113, 2, 39.06),
    "ENZYMES": (600, 6, 32.63),
    "DHFR": (467, 2, 42.43),
    "NCI1": (4110, 2, 29.87),
}


@contextlib.contextmanager
def criterion(number, title):
    box = {"detail": ""}
    try:
        yield box
    except pytest.skip.Exception as exc:
        conftest.ACCEPTANCE[number] = (title, "BLOCKED", str(exc.msg))
        raise
    except BaseException as exc:
        conftest.ACCEPTANCE[number] = (title, "FAIL", f"{type(exc).__name__}: {str(exc).splitlines()[0][:160]}")
        raise
    conftest.ACCEPTANCE[number] = (title, box.get("status", "PASS"), box["detail"])


def require(*names):
    missing = [n for n in names if not conftest.have_dataset(n)]
    if missing:
        pytest.skip(f"dataset(s) {', '.join(missing)} not found under {conftest.DATA_DIR}")


def tiny_batch(rng):
    graphs = []
    for i in range(3):
        n = int(rng.integers(1, 7))
        graphs.append(Graph(i, n, random_graph_edges(n, 0.5, rng), rng.uniform(0.1, 1.0, size=(n, 3)), 0))
    return batch_graphs(graphs, [ppr_diffusion(g, 0.2).S for g in graphs])


def test_criterion_01_gradients():
    with criterion(1, "gradient correctness") as box:
        rng = np.random.default_rng(2024)
        start = time.perf_counter()
        worst = 0.0
        for trial in range(20):
            L = 1 + trial % 2
            batch = tiny_batch(rng)
            ref = init_params(L, 3, 4, rng)
            current = ref.with_flat(ref.flat + rng.normal(scale=0.2, size=ref.flat.size))
            snap = ref.with_flat(ref.flat + rng.normal(scale=0.2, size=ref.flat.size))
            for variant in VARIANTS:
                cfg = FLConfig(variant=variant, tau=float(rng.uniform(0.5, 2)), tau_prime=0.5, mu=0.1,
                               kd_temperature=1.5)
                _, grad = batch_objective(current, batch, cfg, variant, ref, snap)

                def loss(f):
                    return batch_objective(current.with_flat(f), batch, cfg, variant, ref, snap, need_grad=False)[0].value

                num = central_differences(loss, current.flat, step=1e-5)
                worst = max(worst, rel_err(grad, num))
        elapsed = time.perf_counter() - start
        box["detail"] = f"max rel err {worst:.2e} over 20 configs x {len(VARIANTS)} variants in {elapsed:.1f}s"
        assert worst < 1e-4
        assert elapsed < 10


def test_criterion_02_loss_oracles():
    with criterion(2, "loss oracles") as box:
        rng = np.random.default_rng(7)
        worst = 0.0
        for B in range(1, 5):
            for _ in range(25):
                U, V = rng.normal(size=(B, 3)), rng.normal(size=(B, 3))
                tau = float(rng.uniform(0.2, 3))
                worst = max(worst, abs(intra_loss(U, V, tau).value - brute_intra_loss(U, V, tau)))
        eye = np.eye(2)
        ortho = intra_loss(eye, eye, 1.0).value
        X = rng.normal(size=(4, 3))
        sym = inter_loss_graph(X, X, X, 0.7).value
        ident = 0.0
        for _ in range(100):
            t, s, p = (rng.normal(size=(3, 4)) for _ in range(3))
            tp = float(rng.uniform(0.1, 2))
            cos = lambda a, b: np.sum(a * b, 1) / np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1)
            ident = max(ident, abs(inter_loss_graph(t, s, p, tp).value
                                   - float(np.mean(kd_logistic(cos(t, p) / tp, cos(t, s) / tp)))))
        box["detail"] = (f"brute-force gap {worst:.1e}; orthonormal {ortho:.5f}; symmetric |l - log 2| "
                         f"{abs(sym - math.log(2)):.1e}; logistic identity gap {ident:.1e}")
        assert worst < 1e-10
        assert abs(ortho - 0.55144) <= 1e-4
        assert abs(sym - math.log(2)) <= 1e-12
        assert ident <= 1e-12


def test_criterion_03_diffusion():
    with criterion(3, "diffusion oracle") as box:
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(50):
            n = int(rng.integers(1, 31))
            edges = random_graph_edges(n, float(rng.uniform(0.05, 0.5)), rng)
            g = Graph(0, n, edges, np.ones((n, 1)), 0)
            # a 200-term series is only exact to 1e-8 when (1 - alpha)^200 is negligible, i.e. alpha >= ~0.09
            alpha = float(rng.uniform(0.1, 0.9))
            worst = max(worst, np.abs(ppr_diffusion(g, alpha).S - power_series_ppr(g.adjacency(), alpha, 200)).max())
        box["detail"] = f"max abs deviation {worst:.1e} on 50 graphs (n <= 30, alpha in [0.1, 0.9])"
        assert worst < 1e-8


def test_criterion_04_dataset_fidelity(tu):
    with criterion(4, "dataset fidelity") as box:
        require(*BENCHMARK_STATS)
        rows = []
        for name, (n, c, mean_nodes) in BENCHMARK_STATS.items():
            s = tu(name).stats()
            rows.append(f"{name} {s['graphs']}/{s['classes']}/{s['mean_nodes']:.2f}")
            assert s["graphs"] == n and s["classes"] == c
            assert abs(s["mean_nodes"] - mean_nodes) <= 0.01
        box["detail"] = "; ".join(rows)


def test_criterion_05_partition_fidelity(tu):
    with criterion(5, "partition fidelity") as box:
        require(*TARGET_EMD)
        rows = []
        for name, target in TARGET_EMD.items():
            gs = tu(name)
            iid = partition_iid(gs, 6, np.random.default_rng(0)).emd
            _, part = calibrate_dominant_fraction(gs, 6, target, tolerance=0.02, seed=0)
            rows.append(f"{name} iid {iid:.4f} non-iid {part.emd:.4f}")
            assert iid <= 0.05
            assert abs(part.emd - target) <= 0.02
        box["detail"] = "; ".join(rows)


def test_criterion_06_federated_identity():
    with criterion(6, "federated identity") as box:
        gs = make_graph_set((15, 15), seed=11)
        cfg = FLConfig(variant="intra_fedavg", clients=1, gamma=1.0, rounds=4, local_epochs=2, hidden=8,
                       num_layers=2, batch_size=8, tau=1.0, alpha=0.2, lr=5e-3, restarts=2, seed=5)
        fed = run_federated(cfg, partition_iid(gs, 1, np.random.default_rng(0)), gs, keep_history=True)
        cen = run_intra_central(cfg.replace(variant="intra_central"), gs, keep_history=True)
        same = [a.tobytes() == b.tobytes() for a, b in zip(fed.history, cen.history)]
        box["detail"] = f"{sum(same)}/{len(same)} rounds bitwise equal (synthetic 30-graph set)"
        assert len(same) == 4 and all(same)


def scheduling_check(gs, cfg, part):
    a = run_federated(cfg, part, gs, workers=1, keep_history=True, evaluate=False)
    b = run_federated(cfg, part, gs, workers=cfg.clients, keep_history=True, evaluate=False)
    return [x.tobytes() == y.tobytes() for x, y in zip(a.history, b.history)]


def test_criterion_07_scheduling_determinism(tu):
    title = "scheduling determinism"
    with criterion(7, title) as box:
        if conftest.have_dataset("PROTEINS"):
            gs = tu("PROTEINS")
            cfg = FLConfig.for_dataset("PROTEINS", rounds=3, local_epochs=1, seed=0)
            _, part = calibrate_dominant_fraction(gs, 6, TARGET_EMD["PROTEINS"], seed=0)
            same = scheduling_check(gs, cfg, part)
            box["detail"] = f"PROTEINS 6 clients: {sum(same)}/3 rounds bitwise equal"
            assert len(same) == 3 and all(same)
        else:
            # the named dataset is missing: run the identical check on a synthetic 6-client split
            gs = make_graph_set((30, 30), seed=4)
            cfg = FLConfig(variant="fclg", clients=6, rounds=3, local_epochs=2, hidden=16, num_layers=2,
                           batch_size=16, tau=1.0, alpha=0.05, restarts=1, seed=0)
            _, part = calibrate_dominant_fraction(gs, 6, 0.5, seed=0)
            same = scheduling_check(gs, cfg, part)
            assert len(same) == 3 and all(same)
            box["status"] = "BLOCKED"
            box["detail"] = ("PROTEINS missing; the same check on a synthetic 6-client split passed "
                             f"({sum(same)}/3 rounds bitwise equal)")


def test_criterion_08_evaluation_oracles():
    with criterion(8, "evaluation oracles") as box:
        rng = np.random.default_rng(8)
        mismatches = 0
        for _ in range(100):
            C = int(rng.integers(1, 7))
            cont = rng.integers(0, 12, size=(C, C))
            cont[0, 0] += 1
            a = np.repeat(np.repeat(np.arange(C), C), cont.ravel())
            y = np.repeat(np.tile(np.arange(C), C), cont.ravel())
            if clustering_accuracy(a, y, C, C) != pytest.approx(brute_matching_accuracy(cont), abs=1e-15):
                mismatches += 1
        hand = clustering_accuracy([0] * 6 + [1] * 6, [0] * 5 + [1] + [0] * 2 + [1] * 4, 2, 2)
        box["detail"] = f"{mismatches} mismatches on 100 matrices (C <= 6); [[5,1],[2,4]] -> {hand}"
        assert mismatches == 0
        assert hand == 0.75


def final_accuracies(gs, name, variant, seeds=range(10), **overrides):
    out = []
    for seed in seeds:
        cfg = FLConfig.for_dataset(name, variant=variant, clients=6, seed=seed, **overrides)
        _, part = calibrate_dominant_fraction(gs, 6, TARGET_EMD[name], seed=seed)
        out.append(run_federated(cfg, part, gs).metrics[-1].accuracy)
    return np.array(out)


@pytest.mark.slow
def test_criterion_09_end_to_end(tu):
    with criterion(9, "desk-scale end-to-end") as box:
        require("PROTEINS")
        acc = 100 * final_accuracies(tu("PROTEINS"), "PROTEINS", "fclg")
        box["detail"] = f"PROTEINS FCLG {acc.mean():.2f} +/- {(acc.max() - acc.min()) / 2:.2f} over 10 seeds"
        assert 64 <= acc.mean() <= 75


@pytest.mark.slow
def test_criterion_10_ordering(tu):
    with criterion(10, "ordering property") as box:
        require("DHFR")
        gs = tu("DHFR")
        means = {v: 100 * final_accuracies(gs, "DHFR", v).mean()
                 for v in ("fclg", "intra_kl", "intra_mse", "intra_fedavg")}
        box["detail"] = ", ".join(f"{k} {v:.2f}" for k, v in means.items())
        assert means["fclg"] >= means["intra_kl"] + 2
        assert means["fclg"] >= means["intra_mse"] + 2
        assert means["intra_fedavg"] < means["fclg"]


@pytest.mark.slow
def test_criterion_11_local_epoch_shape(tu):
    with criterion(11, "local-epoch sweep shape") as box:
        require("PROTEINS")
        gs = tu("PROTEINS")
        one = 100 * final_accuracies(gs, "PROTEINS", "fclg", local_epochs=1).mean()
        twenty = 100 * final_accuracies(gs, "PROTEINS", "fclg", local_epochs=20).mean()
        box["detail"] = f"E=1 {one:.2f}, E=20 {twenty:.2f}"
        assert twenty > one
