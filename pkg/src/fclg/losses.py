"""Training objectives with analytic gradients.

Every loss returns a :class:`LossValue` whose ``grads`` dict is keyed by the
role of the trainable input (``"U"``, ``"V"``, ``"H"`` or ``"params"``).
Frozen inputs (global-model and previous-epoch representations) never get
a gradient entry.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax


@dataclass
class LossValue:
    value: float
    grads: dict = field(default_factory=dict)
    parts: dict = field(default_factory=dict)

    def __add__(self, other: "LossValue") -> "LossValue":
        grads = {k: v.copy() for k, v in self.grads.items()}
        for k, g in other.grads.items():
            grads[k] = grads[k] + g if k in grads else g.copy()
        return LossValue(self.value + other.value, grads)

    @property
    def grad_U(self):
        return self.grads.get("U")


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return np.exp(-_softplus(-x))


def kd_logistic(a, b):
    """log(1 + exp(a - b)), computed stably."""
    return _softplus(np.asarray(a, dtype=np.float64) - b)


# ---------------------------------------------------------------------------
# intra-contrast (raw dot products)


def intra_pair_loss(u, v, pool, tau: float, self_index: int | None = None) -> float:
    """Contrast of ``u`` against its positive ``v`` over every other pool row.

    ``self_index`` marks the row of ``pool`` that is ``u`` itself; if omitted
    the first row equal to ``u`` is excluded.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    u = np.asarray(u, dtype=np.float64)
    pool = np.atleast_2d(np.asarray(pool, dtype=np.float64))
    if len(pool) < 2:
        raise ValueError("pool must contain at least two vectors")
    if self_index is None:
        hits = np.flatnonzero(np.all(pool == u, axis=1))
        if len(hits) == 0:
            raise ValueError("u is not in the pool")
        self_index = int(hits[0])
    logits = np.delete(pool, self_index, axis=0) @ u / tau
    return float(logsumexp(logits) - np.dot(u, v) / tau)


def intra_loss(U, V, tau: float) -> LossValue:
    """Mean of both directed pair losses over the B positive pairs."""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.shape != V.shape or U.ndim != 2:
        raise ValueError(f"U and V must be equal-shape matrices, got {U.shape} and {V.shape}")
    if tau <= 0:
        raise ValueError("tau must be positive")
    B = len(U)
    if B < 1:
        raise ValueError("need at least one pair")
    Z = np.concatenate([U, V])
    n = 2 * B
    S = Z @ Z.T / tau
    np.fill_diagonal(S, -np.inf)
    pos = (np.arange(n) + B) % n
    lse = logsumexp(S, axis=1)
    value = float(np.mean(lse - S[np.arange(n), pos]))

    P = softmax(S, axis=1)  # diagonal is exactly 0
    P[np.arange(n), pos] -= 1.0
    P /= n
    dZ = (P + P.T) @ Z / tau
    return LossValue(value, {"U": dZ[:B], "V": dZ[B:]})


# ---------------------------------------------------------------------------
# inter-contrast (cosine similarity against frozen references)


def _cosine_with_grad(x, y, eps=0.0):
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    if eps <= 0 and (np.any(nx == 0) or np.any(ny == 0)):
        raise ValueError("zero-norm row: cosine similarity undefined (dead embedding)")
    cx, cy = np.maximum(nx, eps), np.maximum(ny, eps)
    cos = np.sum(x * y, axis=1) / (cx * cy)
    # the clamped norm is constant below eps, so only rows above it get the radial term
    radial = np.where(nx > eps, cos / np.where(nx > 0, nx * cx, 1.0), 0.0)
    dcos_dx = y / (cx * cy)[:, None] - radial[:, None] * x
    return cos, dcos_dx


def _inter(X_t, X_s, X_prev, tau_prime: float, key: str, eps: float) -> LossValue:
    X_t = np.atleast_2d(np.asarray(X_t, dtype=np.float64))
    X_s = np.atleast_2d(np.asarray(X_s, dtype=np.float64))
    X_prev = np.atleast_2d(np.asarray(X_prev, dtype=np.float64))
    if not X_t.shape == X_s.shape == X_prev.shape:
        raise ValueError("inter-contrast inputs must share one shape")
    if tau_prime <= 0:
        raise ValueError("tau_prime must be positive")
    cos_s, dcos_s = _cosine_with_grad(X_t, X_s, eps)
    cos_p, dcos_p = _cosine_with_grad(X_t, X_prev, eps)
    a = cos_p / tau_prime
    b = cos_s / tau_prime
    per_row = kd_logistic(a, b)
    w = _sigmoid(a - b) / (tau_prime * len(X_t))
    grad = w[:, None] * (dcos_p - dcos_s)
    return LossValue(float(per_row.mean()), {key: grad})


def inter_loss_graph(U_t, U_s, U_prev, tau_prime: float, eps: float = 0.0) -> LossValue:
    """Per-graph model contrast: pull towards the global-model embedding,
    push from the previous-epoch embedding.

    With ``eps`` > 0 row norms are clamped from below instead of raising on
    an all-zero row.
    """
    return _inter(U_t, U_s, U_prev, tau_prime, "U", eps)


def inter_loss_node(H_t, H_s, H_prev, tau_prime: float, eps: float = 0.0) -> LossValue:
    return _inter(H_t, H_s, H_prev, tau_prime, "H", eps)


# ---------------------------------------------------------------------------
# distillation baselines and regularizers


def kd_kl(U_t, U_s, temperature: float = 1.0) -> LossValue:
    """KL(softmax(U_s/T) || softmax(U_t/T)) per row, averaged over rows."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    U_t = np.atleast_2d(np.asarray(U_t, dtype=np.float64))
    U_s = np.atleast_2d(np.asarray(U_s, dtype=np.float64))
    if U_t.shape != U_s.shape:
        raise ValueError("kd_kl inputs must share one shape")
    log_p = log_softmax(U_s / temperature, axis=1)
    log_q = log_softmax(U_t / temperature, axis=1)
    p = np.exp(log_p)
    kl = np.sum(p * (log_p - log_q), axis=1)
    B = len(U_t)
    grad = (np.exp(log_q) - p) / (temperature * B)
    return LossValue(float(max(kl.mean(), 0.0)), {"U": grad})


def kd_mse(U_t, U_s) -> LossValue:
    U_t = np.atleast_2d(np.asarray(U_t, dtype=np.float64))
    U_s = np.atleast_2d(np.asarray(U_s, dtype=np.float64))
    if U_t.shape != U_s.shape:
        raise ValueError("kd_mse inputs must share one shape")
    diff = U_t - U_s
    B = len(U_t)
    return LossValue(float(np.sum(diff * diff) / B), {"U": 2.0 * diff / B})


def fedprox_term(params_flat, global_flat, mu: float) -> LossValue:
    if mu < 0:
        raise ValueError("mu must be non-negative")
    diff = np.asarray(params_flat, dtype=np.float64) - np.asarray(global_flat, dtype=np.float64)
    return LossValue(float(0.5 * mu * np.dot(diff, diff)), {"params": mu * diff})


def total_loss(intra: LossValue, inter: LossValue | None = None) -> LossValue:
    if inter is None:
        return LossValue(intra.value, {k: v.copy() for k, v in intra.grads.items()})
    return intra + inter
