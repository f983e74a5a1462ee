"""Disentangling autoencoder: encoder with two latent heads, shared decoder.

Encoder: x -> 400 -> 200 (ReLU) -> {z_d, z_a} (linear heads).
Decoder: [z_d, z_a] -> 200 -> 400 -> x_hat (ReLU everywhere).

Training minimises ``mse(x, x_hat) + w_d * SC(z_d; y) + w_a * SC(z_a; a)``
where the latent-loss weights follow a linear ramp over epochs.
"""
from __future__ import annotations

import io
import logging
import os
import struct
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .contrastive import duplicate_batch, sc_loss
from .errors import (
    CheckpointError,
    CheckpointVersionError,
    ConfigError,
    DataError,
    DimensionError,
    NumericError,
    ParameterError,
)
from .nncore import AdamState, Dense, Stack, adam_step, as_matrix, make_rng, mse, mse_grad

log = logging.getLogger(__name__)

HIDDEN = (400, 200)
LAYER_NAMES = ("fc1", "fc2", "fc31", "fc32", "fc4", "fc5", "fc6")


class DisentangledModel:
    def __init__(self, layers: dict[str, Dense], input_dim: int, z_d_dim: int, z_a_dim: int):
        self.input_dim = input_dim
        self.z_d_dim = z_d_dim
        self.z_a_dim = z_a_dim
        self.trunk = Stack({k: layers[k] for k in ("fc1", "fc2")})
        self.head_d = layers["fc31"]
        self.head_a = layers["fc32"]
        self.decoder = Stack({k: layers[k] for k in ("fc4", "fc5", "fc6")})

    @property
    def layers(self) -> dict[str, Dense]:
        return {**self.trunk.layers, "fc31": self.head_d, "fc32": self.head_a, **self.decoder.layers}

    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in self.layers.items():
            out[f"{name}.W"] = layer.W
            out[f"{name}.b"] = layer.b
        return out

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params().values()))

    def copy(self) -> "DisentangledModel":
        layers = {k: Dense(l.W.copy(), l.b.copy(), l.relu) for k, l in self.layers.items()}
        return DisentangledModel(layers, self.input_dim, self.z_d_dim, self.z_a_dim)


def build(input_dim: int, z_d_dim: int, z_a_dim: int, rng: np.random.Generator) -> DisentangledModel:
    if min(input_dim, z_d_dim, z_a_dim) < 1:
        raise ParameterError(f"dims must be >= 1, got ({input_dim}, {z_d_dim}, {z_a_dim})")
    h1, h2 = HIDDEN
    layers = {
        "fc1": Dense.init(input_dim, h1, rng, relu=True),
        "fc2": Dense.init(h1, h2, rng, relu=True),
        "fc31": Dense.init(h2, z_d_dim, rng),
        "fc32": Dense.init(h2, z_a_dim, rng),
        "fc4": Dense.init(z_d_dim + z_a_dim, h2, rng, relu=True),
        "fc5": Dense.init(h2, h1, rng, relu=True),
        "fc6": Dense.init(h1, input_dim, rng, relu=True),
    }
    return DisentangledModel(layers, input_dim, z_d_dim, z_a_dim)


def _check_input(model, x):
    x = as_matrix(x)
    if x.shape[1] != model.input_dim:
        raise DimensionError(f"input has {x.shape[1]} columns, model expects {model.input_dim}")
    return x


def encode(model: DisentangledModel, x) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(z_a, z_d)``."""
    x = _check_input(model, x)
    h, _ = model.trunk.forward(x)
    z_d, _ = model.head_d.forward(h)
    z_a, _ = model.head_a.forward(h)
    return z_a, z_d


def reconstruct(model: DisentangledModel, x) -> np.ndarray:
    z_a, z_d = encode(model, x)
    x_hat, _ = model.decoder.forward(np.hstack([z_d, z_a]))
    return x_hat


def ramp_weight(epoch: int, n1: int, n2: int, alpha: float) -> float:
    """Latent-loss weight at a 1-based ``epoch``: 0 up to n1, linear to alpha at n2."""
    if n2 <= n1:
        raise ParameterError(f"ramp needs n1 < n2, got n1={n1}, n2={n2}")
    if epoch <= n1:
        return 0.0
    if epoch >= n2:
        return float(alpha)
    return float(alpha) * (epoch - n1) / (n2 - n1)


def objective(model: DisentangledModel, x, y, a, w_d: float, w_a: float, tau: float):
    """Full training objective on one minibatch.

    Returns ``(total, grads, parts)`` where ``parts`` holds the unweighted
    reconstruction and the two contrastive terms (0 when a weight is 0).
    """
    x = _check_input(model, x)
    n = x.shape[0]
    h, trunk_cache = model.trunk.forward(x)
    z_d, cache_d = model.head_d.forward(h)
    z_a, cache_a = model.head_a.forward(h)
    z = np.hstack([z_d, z_a])
    x_hat, dec_cache = model.decoder.forward(z)

    recon = mse(x, x_hat)
    grads, dz = model.decoder.backward(dec_cache, mse_grad(x, x_hat))
    dz_d = dz[:, : model.z_d_dim].copy()
    dz_a = dz[:, model.z_d_dim :].copy()

    sc_d = sc_a = 0.0
    if w_d > 0:
        sc_d, g = sc_loss(duplicate_batch(z_d, y), tau)
        dz_d += w_d * (g[:n] + g[n:])
    if w_a > 0:
        sc_a, g = sc_loss(duplicate_batch(z_a, a), tau)
        dz_a += w_a * (g[:n] + g[n:])

    dW, db, dh_d = model.head_d.backward(cache_d, dz_d)
    grads["fc31.W"], grads["fc31.b"] = dW, db
    dW, db, dh_a = model.head_a.backward(cache_a, dz_a)
    grads["fc32.W"], grads["fc32.b"] = dW, db
    model.trunk.backward(trunk_cache, dh_d + dh_a, grads)

    total = recon + w_d * sc_d + w_a * sc_a
    return total, grads, {"recon": recon, "sc_d": sc_d, "sc_a": sc_a}


@dataclass
class TrainConfig:
    """Autoencoder training settings. Defaults are the ADSP values."""

    z_d_dim: int = 40
    z_a_dim: int = 40
    tau: float = 0.03
    alpha_d: float = 1e-4
    alpha_a: float = 1e-4
    epochs: int = 500
    n1: int = 100
    n2: int = 250
    batch_size: int = 256
    lr: float = 5e-3
    seed: int = 0
    eval_every: int = 0

    @classmethod
    def adsp(cls, **kw):
        return cls(**kw)

    @classmethod
    def ukb(cls, **kw):
        base = dict(z_d_dim=40, z_a_dim=30, tau=0.05, epochs=100, n1=10, n2=70)
        base.update(kw)
        return cls(**base)

    @classmethod
    def desk(cls, **kw):
        """Short schedule for the 3000 x 500 simulator cohorts (about a minute on one core).

        Full-strength latent weights from early on and a wide batch: at this
        scale the default schedule leaves the phenotype latent full of
        ancestry signal, and lr 5e-3 stalls the reconstruction.
        """
        base = dict(epochs=60, n1=0, n2=10, alpha_d=1.0, alpha_a=1.0, batch_size=512, lr=1e-3)
        base.update(kw)
        return cls(**base)

    @classmethod
    def from_dict(cls, d: dict, base: "TrainConfig | None" = None) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown training keys: {sorted(unknown)}")
        start = asdict(base) if base is not None else {}
        start.update(d)
        return cls(**start)

    def validate(self):
        if not 0 <= self.n1 < self.n2 <= self.epochs:
            raise ParameterError(f"need 0 <= n1 < n2 <= epochs, got {self.n1}, {self.n2}, {self.epochs}")
        if not self.tau > 0:
            raise ParameterError("tau must be positive")
        if self.alpha_d < 0 or self.alpha_a < 0:
            raise ParameterError("latent-loss weights must be non-negative")
        if self.batch_size < 2:
            raise ParameterError("batch_size must be >= 2")
        if min(self.z_d_dim, self.z_a_dim) < 1:
            raise ParameterError("latent dims must be >= 1")


@dataclass
class EpochRecord:
    epoch: int
    recon_loss: float
    sc_d_loss: float
    sc_a_loss: float
    weight_d: float
    weight_a: float
    val_auc: float | None = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_tsv(self) -> str:
        cols = list(EpochRecord.__dataclass_fields__)
        lines = ["\t".join(cols)]
        for r in self.records:
            row = asdict(r)
            lines.append("\t".join("NA" if row[c] is None else repr(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


def _codes(labels) -> np.ndarray:
    labels = np.asarray(labels)
    _, inv = np.unique(labels, return_inverse=True)
    return inv.ravel()


def train_dae_arrays(X, y, a, config: TrainConfig, val=None):
    """Train on plain arrays. ``val`` is an optional ``(X_val, y_val)`` pair."""
    config.validate()
    X = as_matrix(X)
    if not np.all(np.isfinite(X)):
        raise DataError("training matrix has missing or non-finite values; impute first")
    if y is None or a is None:
        raise DataError("training needs both phenotype and ancestry labels")
    y = np.asarray(y)
    a = np.asarray(a)
    if len(y) != X.shape[0] or len(a) != X.shape[0]:
        raise DataError("labels are not aligned with genotype rows")
    if any(v is None for v in a) or (a.dtype.kind == "f" and np.isnan(a).any()):
        raise DataError("ancestry label missing for some rows")
    if y.dtype.kind == "f" and np.isnan(y).any():
        raise DataError("phenotype label missing for some rows")
    y_codes = _codes(y)
    a_codes = _codes(a)

    model = build(X.shape[1], config.z_d_dim, config.z_a_dim, make_rng(config.seed, "dae.init"))
    # start the terminal ReLU at the column means; with a zero bias, rows of
    # fc6 that are negative on every (non-negative) fc5 activation never recover
    model.decoder.layers["fc6"].b[:] = X.mean(axis=0)
    shuffle_rng = make_rng(config.seed, "dae.shuffle")
    params = model.params()
    state = AdamState(lr=config.lr)
    history = TrainHistory()
    n = X.shape[0]

    for epoch in range(1, config.epochs + 1):
        w_d = ramp_weight(epoch, config.n1, config.n2, config.alpha_d)
        w_a = ramp_weight(epoch, config.n1, config.n2, config.alpha_a)
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        n_seen = 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            if len(idx) < 2:
                continue
            total, grads, parts = objective(model, X[idx], y_codes[idx], a_codes[idx], w_d, w_a, config.tau)
            if not np.isfinite(total):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            adam_step(params, grads, state)
            sums += len(idx) * np.array([parts["recon"], parts["sc_d"], parts["sc_a"]])
            n_seen += len(idx)
        recon, sc_d, sc_a = sums / max(n_seen, 1)
        rec = EpochRecord(epoch, float(recon), float(sc_d), float(sc_a), w_d, w_a)
        if val is not None and config.eval_every and (epoch % config.eval_every == 0 or epoch == config.epochs):
            rec.val_auc = validation_auc(model, X, y, *val)
        history.records.append(rec)
        log.debug("epoch %d recon=%.5f sc_d=%.3f sc_a=%.3f", epoch, recon, sc_d, sc_a)
    return model, history


def validation_auc(model, X_train, y_train, X_val, y_val) -> float | None:
    """AUC of a temporary least-squares head on z_d, scored on validation rows."""
    from .evalkit import auc
    from .predictors.linear import fit_linear_head

    _, zd_train = encode(model, X_train)
    head = fit_linear_head(zd_train, y_train)
    _, zd_val = encode(model, X_val)
    y_val = np.asarray(y_val)
    if len(np.unique(y_val)) < 2:
        return None
    return auc(head.predict(zd_val), y_val)


def train_dae(train, val, config: TrainConfig):
    """Train on a LabeledCohort; ``val`` may be None."""
    if train.ancestry is None:
        raise DataError("training cohort has no ancestry labels")
    val_arrays = None
    if val is not None:
        val_arrays = (val.genotypes.dosages, val.y)
    return train_dae_arrays(train.genotypes.dosages, train.y, train.ancestry, config, val=val_arrays)


# --- checkpoint I/O -------------------------------------------------------

MAGIC = b"DISPRDAE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIII")  # magic, version, input_dim, z_d, z_a, n_tensors


def _tensor_items(model):
    for name, layer in model.layers.items():
        yield f"{name}.W", layer.W
        yield f"{name}.b", layer.b.reshape(1, -1)


def dumps(model: DisentangledModel) -> bytes:
    buf = io.BytesIO()
    items = list(_tensor_items(model))
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, model.input_dim, model.z_d_dim, model.z_a_dim, len(items)))
    for name, arr in items:
        raw = name.encode()
        buf.write(struct.pack("<H", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<II", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = buf.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def loads(data: bytes) -> DisentangledModel:
    if len(data) < _HEADER.size + 4:
        raise CheckpointError("checkpoint truncated (no header)")
    magic, version, input_dim, z_d, z_a, n_tensors = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError("not a disentangler checkpoint (bad magic)")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    pos = _HEADER.size
    arrays = {}
    try:
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", body, pos)
            pos += 2
            name = body[pos : pos + name_len].decode()
            pos += name_len
            rows, cols = struct.unpack_from("<II", body, pos)
            pos += 8
            nbytes = rows * cols * 8
            if pos + nbytes > len(body):
                raise CheckpointError(f"checkpoint truncated inside tensor {name}")
            arrays[name] = np.frombuffer(body, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).astype(np.float64)
            pos += nbytes
    except struct.error as exc:
        raise CheckpointError(f"checkpoint truncated: {exc}") from None
    if pos != len(body) or zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint corrupt or truncated (checksum mismatch)")

    ref = build(input_dim, z_d, z_a, make_rng(0, "shape-template"))
    layers = {}
    for name, layer in ref.layers.items():
        W = arrays.get(f"{name}.W")
        b = arrays.get(f"{name}.b")
        if W is None or b is None:
            raise CheckpointError(f"checkpoint lacks layer {name}")
        if W.shape != layer.W.shape or b.shape != (1, layer.n_out):
            raise CheckpointError(f"layer {name} has shape {W.shape}, expected {layer.W.shape}")
        layers[name] = Dense(W, b.ravel().copy(), relu=layer.relu)
    return DisentangledModel(layers, input_dim, z_d, z_a)


def save(model: DisentangledModel, path) -> None:
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps(model))
    os.replace(tmp, path)


def load(path) -> DisentangledModel:
    with open(path, "rb") as fh:
        return loads(fh.read())
