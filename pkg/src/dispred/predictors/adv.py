"""Wasserstein-guided adversarial baseline.

A backbone (in -> 200 -> 20 -> 1) is trained with logistic loss while
critics on its 20-d features estimate the Wasserstein distance between a
reference ancestry group (the largest) and every other group. Critics are
kept approximately 1-Lipschitz with a gradient penalty on interpolated
features; the backbone additionally minimises ``lam_w`` times the average
critic estimate.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError, DomainError, NumericError
from ..nncore import (
    AdamState,
    Dense,
    Stack,
    adam_step,
    as_matrix,
    bce_with_logits,
    bce_with_logits_grad,
    make_rng,
)
from .nn import check_binary_target, load_stacks, save_stacks


def build_backbone(input_dim, rng) -> Stack:
    return Stack(
        {
            "fc1": Dense.init(input_dim, 200, rng, relu=True),
            "fc2": Dense.init(200, 20, rng, relu=True),
            "fc3": Dense.init(20, 1, rng),
        }
    )


def build_critic(rng, feat_dim=20) -> Stack:
    return Stack({"fc1": Dense.init(feat_dim, 10, rng, relu=True), "fc2": Dense.init(10, 1, rng)})


def gradient_penalty(critic: Stack, h_hat):
    """``mean((||d critic / d h|| - 1)^2)`` and its gradient w.r.t. critic params.

    The ReLU mask is piecewise constant, so the input-gradient is linear in
    each weight matrix and the second-order terms are exact.
    """
    l1, l2 = critic.layers["fc1"], critic.layers["fc2"]
    pre = h_hat @ l1.W.T + l1.b
    M = (pre > 0).astype(np.float64)
    w2 = l2.W[0]
    g = (M * w2) @ l1.W  # m x feat
    norms = np.sqrt(np.sum(g * g, axis=1))
    m = len(h_hat)
    penalty = float(np.mean((norms - 1.0) ** 2))
    safe = np.where(norms > 0, norms, 1.0)
    Q = (2.0 * (norms - 1.0) / (m * safe))[:, None] * g
    grads = {
        "fc1.W": (M * w2).T @ Q,
        "fc1.b": np.zeros_like(l1.b),
        "fc2.W": np.sum(M * (Q @ l1.W.T), axis=0)[None, :],
        "fc2.b": np.zeros_like(l2.b),
    }
    return penalty, grads


def critic_gap(critic: Stack, h_ref, h_other):
    """``mean f(h_ref) - mean f(h_other)`` with gradients for params and inputs."""
    f_ref, c_ref = critic.forward(h_ref)
    f_oth, c_oth = critic.forward(h_other)
    gap = float(f_ref.mean() - f_oth.mean())
    g_ref, dh_ref = critic.backward(c_ref, np.full_like(f_ref, 1.0 / len(f_ref)))
    g_oth, dh_oth = critic.backward(c_oth, np.full_like(f_oth, -1.0 / len(f_oth)))
    grads = {k: g_ref[k] + g_oth[k] for k in g_ref}
    return gap, grads, dh_ref, dh_oth


@dataclass
class AdvModel:
    backbone: Stack
    critics: dict  # domain -> Stack
    reference: str

    def features(self, X):
        h, _ = Stack({k: self.backbone.layers[k] for k in ("fc1", "fc2")}).forward(as_matrix(X))
        return h

    def predict(self, X) -> np.ndarray:
        return self.backbone.forward(as_matrix(X))[0][:, 0]

    def distance(self, X, domains) -> float:
        """Average critic estimate of reference-vs-other feature distance."""
        h = self.features(X)
        domains = np.asarray(domains, dtype=object)
        vals = []
        for d, critic in self.critics.items():
            ref, oth = h[domains == self.reference], h[domains == d]
            if len(ref) and len(oth):
                vals.append(critic.forward(ref)[0].mean() - critic.forward(oth)[0].mean())
        return float(np.mean(vals)) if vals else 0.0


def fit_adv(
    X,
    y,
    domains,
    epochs=100,
    lr=5e-3,
    batch_size=64,
    lam_w=0.1,
    critic_steps=5,
    gp_weight=10.0,
    seed=0,
) -> AdvModel:
    X = as_matrix(X)
    y = check_binary_target(y)
    domains = np.asarray(domains, dtype=object)
    if len(domains) != len(y) or X.shape[0] != len(y):
        raise DataError("X, y and domains must be aligned")
    names, counts = np.unique(domains.astype(str), return_counts=True)
    if len(names) < 2:
        raise DomainError("adversarial training needs at least two ancestry groups")
    reference = str(names[np.argmax(counts)])
    others = [str(n) for n in names if n != reference]
    domains = domains.astype(str)

    backbone = build_backbone(X.shape[1], make_rng(seed, "adv.init"))
    critic_rng = make_rng(seed, "adv.critic")
    critics = {d: build_critic(critic_rng) for d in others}
    shuffle_rng = make_rng(seed, "adv.shuffle")
    interp_rng = make_rng(seed, "adv.interp")
    b_params = backbone.params()
    b_state = AdamState(lr=lr)
    c_states = {d: AdamState(lr=lr) for d in others}
    trunk = Stack({k: backbone.layers[k] for k in ("fc1", "fc2")})
    head = backbone.layers["fc3"]

    for epoch in range(1, epochs + 1):
        perm = shuffle_rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = perm[start : start + batch_size]
            h, trunk_cache = trunk.forward(X[idx])
            dom = domains[idx]
            pairs = [(d, dom == reference, dom == d) for d in others]
            pairs = [(d, r, o) for d, r, o in pairs if r.any() and o.any()]

            for _ in range(critic_steps):
                for d, r, o in pairs:
                    critic = critics[d]
                    h_ref, h_oth = h[r], h[o]
                    _, g_gap, _, _ = critic_gap(critic, h_ref, h_oth)
                    m = min(len(h_ref), len(h_oth))
                    eps = interp_rng.random((m, 1))
                    _, g_gp = gradient_penalty(critic, eps * h_ref[:m] + (1 - eps) * h_oth[:m])
                    # critic ascends the gap: minimise -gap + gp_weight * penalty
                    grads = {k: -g_gap[k] + gp_weight * g_gp[k] for k in g_gap}
                    adam_step(critic.params(), grads, c_states[d])

            logits, head_cache = head.forward(h)
            loss = bce_with_logits(logits[:, 0], y[idx])
            dW, db, dh = head.backward(head_cache, bce_with_logits_grad(logits[:, 0], y[idx])[:, None])
            grads = {"fc3.W": dW, "fc3.b": db}
            if lam_w > 0 and pairs:
                scale = lam_w / len(pairs)
                dh = dh.copy()
                for d, r, o in pairs:
                    _, _, dh_ref, dh_oth = critic_gap(critics[d], h[r], h[o])
                    dh[r] += scale * dh_ref
                    dh[o] += scale * dh_oth
            trunk.backward(trunk_cache, dh, grads)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite adversarial loss at epoch {epoch}")
            adam_step(b_params, grads, b_state)
    return AdvModel(backbone, critics, reference)


def save_adv(model: AdvModel, path) -> None:
    stacks = {"backbone": model.backbone, **{f"critic:{d}": c for d, c in model.critics.items()}}
    save_stacks(path, "adv", stacks, {"reference": model.reference})


def load_adv(path) -> AdvModel:
    kind, stacks, meta = load_stacks(path)
    if kind != "adv":
        raise DataError(f"{path}: expected an adv model, found {kind}")
    critics = {k.split(":", 1)[1]: v for k, v in stacks.items() if k.startswith("critic:")}
    return AdvModel(stacks["backbone"], critics, meta["reference"])
