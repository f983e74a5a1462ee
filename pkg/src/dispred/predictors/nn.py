"""Supervised MLP baseline: in -> 200 -> 100 -> 20 -> 20 -> 1 (logit)."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, NumericError
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


def build_nn(input_dim: int, rng, dropout: float = 0.5) -> Stack:
    return Stack(
        {
            "fc1": Dense.init(input_dim, 200, rng, relu=True),
            "fc2": Dense.init(200, 100, rng, relu=True),
            "fc3": Dense.init(100, 20, rng, relu=True, dropout=dropout),
            "fc4": Dense.init(20, 20, rng, relu=True, dropout=dropout),
            "fc6": Dense.init(20, 1, rng),
        }
    )


def nn_loss(net: Stack, X, y, train=False, rng=None):
    logits, caches = net.forward(X, train=train, rng=rng)
    loss = bce_with_logits(logits[:, 0], y)
    grads, _ = net.backward(caches, bce_with_logits_grad(logits[:, 0], y)[:, None])
    return loss, grads


@dataclass
class NNModel:
    net: Stack

    def predict(self, X) -> np.ndarray:
        """Raw logits in eval mode (dropout off)."""
        return self.net.forward(as_matrix(X))[0][:, 0]


def check_binary_target(y):
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise DataError("target must be 0/1")
    return y


def fit_nn(X, y, epochs=200, lr=5e-3, batch_size=64, seed=0, dropout=0.5) -> NNModel:
    X = as_matrix(X)
    y = check_binary_target(y)
    if not np.all(np.isfinite(X)):
        raise DataError("NN input has missing or non-finite values")
    net = build_nn(X.shape[1], make_rng(seed, "nn.init"), dropout)
    shuffle_rng = make_rng(seed, "nn.shuffle")
    drop_rng = make_rng(seed, "nn.dropout")
    params = net.params()
    state = AdamState(lr=lr)
    for epoch in range(1, epochs + 1):
        perm = shuffle_rng.permutation(len(y))
        for start in range(0, len(y), batch_size):
            idx = perm[start : start + batch_size]
            loss, grads = nn_loss(net, X[idx], y[idx], train=True, rng=drop_rng)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite NN loss at epoch {epoch}")
            adam_step(params, grads, state)
    return NNModel(net)


# --- persistence shared with the adversarial model ---------------------------


def save_stacks(path, kind: str, stacks: dict[str, Stack], meta: dict | None = None) -> None:
    arrays = {}
    layout = {}
    for prefix, stack in stacks.items():
        layout[prefix] = [[name, layer.relu, layer.dropout] for name, layer in stack.layers.items()]
        for name, layer in stack.layers.items():
            arrays[f"{prefix}/{name}.W"] = layer.W
            arrays[f"{prefix}/{name}.b"] = layer.b
    header = json.dumps({"kind": kind, "layout": layout, "meta": meta or {}})
    path = os.fspath(path)
    tmp = path + ".tmp.npz"
    np.savez(tmp, __header__=np.array(header), **arrays)
    os.replace(tmp, path)


def load_stacks(path):
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["__header__"]))
            stacks = {}
            for prefix, layers in header["layout"].items():
                stacks[prefix] = Stack(
                    {
                        name: Dense(z[f"{prefix}/{name}.W"].copy(), z[f"{prefix}/{name}.b"].copy(), relu, dropout)
                        for name, relu, dropout in layers
                    }
                )
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{path}: unreadable model file ({exc})") from None
    return header["kind"], stacks, header["meta"]


def save_nn(model: NNModel, path) -> None:
    save_stacks(path, "nn", {"net": model.net})


def load_nn(path) -> NNModel:
    kind, stacks, _ = load_stacks(path)
    if kind != "nn":
        raise DataError(f"{path}: expected an nn model, found {kind}")
    return NNModel(stacks["net"])
