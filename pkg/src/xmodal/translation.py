"""Two-tower translation of pre-trained embeddings into a shared 128-d space.

Each modality gets a 2-layer MLP (in_dim -> 256 -> 128, ReLU hidden, linear
output).  Training is self-supervised: same-clip audio/image pairs are
positives, every mismatched pair inside the batch is a negative, and the
margin loss over cosine distance D is

    L = (1/B) * sum_i D(a_i, v_i)^2
      + (1/(B*(B-1))) * sum_{i != j} max(0, m - D(a_i, v_j))^2

optimized jointly for both towers with Adam and early stopping on a held-out
validation slice of the pair list.  All math runs in float64; checkpoints
round to f32 (see ``save_model``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, UnsupportedFormatError, ValidationError
from .store import PairedDataset

HIDDEN_DIM = 256
OUTPUT_DIM = 128

COSINE_EPS = 1e-12

CHECKPOINT_MAGIC = b"XMTM"
CHECKPOINT_VERSION = 1


@dataclass
class TowerParams:
    """Weights of one modality tower: out = relu(x @ W1 + b1) @ W2 + b2."""

    W1: np.ndarray  # (in_dim, 256)
    b1: np.ndarray  # (256,)
    W2: np.ndarray  # (256, 128)
    b2: np.ndarray  # (128,)

    @property
    def in_dim(self) -> int:
        return self.W1.shape[0]

    def copy(self) -> "TowerParams":
        return TowerParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]


@dataclass
class TranslationModel:
    audio_tower: TowerParams
    image_tower: TowerParams

    @property
    def audio_in_dim(self) -> int:
        return self.audio_tower.in_dim

    @property
    def image_in_dim(self) -> int:
        return self.image_tower.in_dim

    def tower_for(self, modality: str) -> TowerParams:
        if modality == "audio":
            return self.audio_tower
        if modality == "image":
            return self.image_tower
        raise ValidationError(f"unknown modality {modality!r}")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4096
    margin: float = 1.0
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    patience_epochs: int = 5
    max_epochs: int = 200
    val_fraction: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (in-batch negatives)")
        if not (0.0 < self.margin <= 2.0):
            raise ConfigError("margin must lie in (0, 2], the cosine distance range")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.patience_epochs < 1 or self.max_epochs < 1:
            raise ConfigError("patience_epochs and max_epochs must be >= 1")
        if not (0.0 <= self.val_fraction < 1.0):
            raise ConfigError("val_fraction must lie in [0, 1)")


@dataclass
class TrainHistory:
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: int = 0
    stop_reason: str = ""  # "early_stopped" | "max_epochs"

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for i, (tr, va) in enumerate(zip(self.train_losses, self.val_losses), start=1):
                fh.write(f"{i},{tr!r},{va!r}\n")


def tower_forward(tower: TowerParams, x: np.ndarray) -> np.ndarray:
    """Forward one vector or a batch of rows through a tower."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != tower.in_dim:
        raise ValidationError(
            f"input dim {x.shape[1]} does not match tower dim {tower.in_dim}"
        )
    hidden = np.maximum(x @ tower.W1 + tower.b1, 0.0)
    out = hidden @ tower.W2 + tower.b2
    return out[0] if single else out


def translate(model: TranslationModel, modality: str, x: np.ndarray) -> np.ndarray:
    """Deterministically project pre-trained embeddings through one tower."""
    return tower_forward(model.tower_for(modality), x)


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """D = 1 - u.v / max(|u||v|, eps), in [0, 2]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    denom = max(float(np.linalg.norm(u) * np.linalg.norm(v)), COSINE_EPS)
    return 1.0 - float(u @ v) / denom


def contrastive_batch_loss(
    A: np.ndarray, V: np.ndarray, margin: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Margin contrastive loss over all B^2 cosine distances of a batch.

    Returns ``(loss, dA, dV)`` where the gradients are the exact analytic
    derivatives of the loss (including the eps guard on zero norms).
    """
    A = np.asarray(A, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if A.ndim != 2 or V.ndim != 2 or A.shape != V.shape:
        raise ConfigError(f"batch shapes must match, got {A.shape} and {V.shape}")
    B = A.shape[0]
    if B < 2:
        raise ConfigError("contrastive loss needs a batch of at least 2 pairs")

    na = np.linalg.norm(A, axis=1)  # (B,)
    nv = np.linalg.norm(V, axis=1)
    prod = na[:, None] * nv[None, :]
    denom = np.maximum(prod, COSINE_EPS)
    sim = (A @ V.T) / denom
    dist = 1.0 - sim

    diag = np.arange(B)
    pos = dist[diag, diag]
    hinge = np.maximum(margin - dist, 0.0)
    hinge[diag, diag] = 0.0
    loss = float(np.sum(pos**2) / B + np.sum(hinge**2) / (B * (B - 1)))

    # dL/dsim: the positive term differentiates to -(2/B) D_ii on the diagonal,
    # each active hinge to +2/(B(B-1)) (m - D_ij) off it.
    grad_sim = (2.0 / (B * (B - 1))) * hinge
    grad_sim[diag, diag] = -(2.0 / B) * pos

    # sim_ij = (a_i . v_j) / max(|a_i||v_j|, eps); below the eps floor the
    # denominator is constant so the norm-direction term vanishes.
    guarded = (prod > COSINE_EPS).astype(np.float64)
    coeff = grad_sim * sim * guarded
    na_sq = np.where(na > 0.0, na * na, 1.0)
    nv_sq = np.where(nv > 0.0, nv * nv, 1.0)
    dA = (grad_sim / denom) @ V - A * (coeff.sum(axis=1) / na_sq)[:, None]
    dV = (grad_sim / denom).T @ A - V * (coeff.sum(axis=0) / nv_sq)[:, None]
    return loss, dA, dV


def _batch_loss_only(A: np.ndarray, V: np.ndarray, margin: float) -> float:
    loss, _, _ = contrastive_batch_loss(A, V, margin)
    return loss


def _tower_backward(
    tower: TowerParams, x: np.ndarray, grad_out: np.ndarray
) -> list[np.ndarray]:
    """Gradients [dW1, db1, dW2, db2] for a batch forward pass."""
    z = x @ tower.W1 + tower.b1
    hidden = np.maximum(z, 0.0)
    dW2 = hidden.T @ grad_out
    db2 = grad_out.sum(axis=0)
    dhidden = grad_out @ tower.W2.T
    dz = dhidden * (z > 0.0)
    dW1 = x.T @ dz
    db1 = dz.sum(axis=0)
    return [dW1, db1, dW2, db2]


def init_tower(in_dim: int, rng: np.random.Generator) -> TowerParams:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""

    def glorot(fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=(fan_in, fan_out))

    return TowerParams(
        W1=glorot(in_dim, HIDDEN_DIM),
        b1=np.zeros(HIDDEN_DIM),
        W2=glorot(HIDDEN_DIM, OUTPUT_DIM),
        b2=np.zeros(OUTPUT_DIM),
    )


class EarlyStopper:
    """Stop after ``patience`` consecutive epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record one epoch's validation value; True means stop now."""
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


class _Adam:
    def __init__(self, shapes: list[tuple[int, ...]], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        c = self.cfg
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = c.adam_beta1 * self.m[i] + (1 - c.adam_beta1) * g
            self.v[i] = c.adam_beta2 * self.v[i] + (1 - c.adam_beta2) * g * g
            m_hat = self.m[i] / (1 - c.adam_beta1**self.t)
            v_hat = self.v[i] / (1 - c.adam_beta2**self.t)
            p -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_eps)


def train_translation(
    pairs: PairedDataset, cfg: TrainConfig
) -> tuple[TranslationModel, TrainHistory]:
    """Train both towers jointly on clip-level positive pairs; labels unused.

    The last ``val_fraction`` of the seeded shuffle of the pair list is held
    out; early stopping watches its loss and the best-validation parameters
    are returned.  If the held-out slice is smaller than 2 pairs (too small
    for in-batch negatives) the epoch train loss drives stopping instead.
    """
    if len(pairs) == 0:
        raise ConfigError("cannot train on an empty pair list")
    X_audio, X_image = pairs.matrices()
    X_audio = X_audio.astype(np.float64)
    X_image = X_image.astype(np.float64)
    n = X_audio.shape[0]

    rng = np.random.default_rng(cfg.rng_seed)
    model = TranslationModel(
        audio_tower=init_tower(X_audio.shape[1], rng),
        image_tower=init_tower(X_image.shape[1], rng),
    )
    params = model.audio_tower.params() + model.image_tower.params()
    adam = _Adam([p.shape for p in params], cfg)

    order = rng.permutation(n)
    n_val = int(round(cfg.val_fraction * n))
    if n_val < 2:
        n_val = 0
    val_idx = order[n - n_val :] if n_val else np.empty(0, dtype=np.intp)
    train_idx = order[: n - n_val]
    if len(train_idx) < 2:
        raise ConfigError(f"{n} pairs leave fewer than 2 for training")

    best_params = [p.copy() for p in params]
    stopper = EarlyStopper(cfg.patience_epochs)
    history = TrainHistory()
    stop_reason = "max_epochs"

    for epoch in range(1, cfg.max_epochs + 1):
        perm = rng.permutation(len(train_idx))
        epoch_loss = 0.0
        epoch_rows = 0
        for start in range(0, len(perm), cfg.batch_size):
            batch = train_idx[perm[start : start + cfg.batch_size]]
            if len(batch) < 2:  # a trailing singleton cannot form negatives
                continue
            xa, xv = X_audio[batch], X_image[batch]
            za = xa @ model.audio_tower.W1 + model.audio_tower.b1
            ha = np.maximum(za, 0.0)
            out_a = ha @ model.audio_tower.W2 + model.audio_tower.b2
            zv = xv @ model.image_tower.W1 + model.image_tower.b1
            hv = np.maximum(zv, 0.0)
            out_v = hv @ model.image_tower.W2 + model.image_tower.b2

            loss, dA, dV = contrastive_batch_loss(out_a, out_v, cfg.margin)
            if not np.isfinite(loss):
                raise DivergenceError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            grads = _tower_backward(model.audio_tower, xa, dA) + _tower_backward(
                model.image_tower, xv, dV
            )
            adam.step(params, grads)
            epoch_loss += loss * len(batch)
            epoch_rows += len(batch)

        train_loss = epoch_loss / max(epoch_rows, 1)
        val_loss = (
            _eval_loss(model, X_audio, X_image, val_idx, cfg)
            if n_val
            else train_loss
        )
        history.train_losses.append(train_loss)
        history.val_losses.append(val_loss)
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")

        improved_to_best = val_loss < stopper.best
        should_stop = stopper.update(epoch, val_loss)
        if improved_to_best:
            best_params = [p.copy() for p in params]
        if should_stop:
            stop_reason = "early_stopped"
            history.stop_epoch = epoch
            break
        history.stop_epoch = epoch

    history.stop_reason = stop_reason
    history.best_epoch = stopper.best_epoch
    for p, best in zip(params, best_params):
        p[...] = best
    return model, history


def _eval_loss(
    model: TranslationModel,
    X_audio: np.ndarray,
    X_image: np.ndarray,
    idx: np.ndarray,
    cfg: TrainConfig,
) -> float:
    """Deterministic loss over fixed-order batches of the given rows."""
    total = 0.0
    rows = 0
    for start in range(0, len(idx), cfg.batch_size):
        batch = idx[start : start + cfg.batch_size]
        if len(batch) < 2:
            continue
        out_a = tower_forward(model.audio_tower, X_audio[batch])
        out_v = tower_forward(model.image_tower, X_image[batch])
        total += _batch_loss_only(out_a, out_v, cfg.margin) * len(batch)
        rows += len(batch)
    return total / max(rows, 1)


def save_model(model: TranslationModel, path: str | Path) -> None:
    """Checkpoint: magic XMTM, version u16, per tower in_dim u32 + f32 arrays."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        for tower in (model.audio_tower, model.image_tower):
            fh.write(struct.pack("<I", tower.in_dim))
            for arr in tower.params():
                fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path: str | Path) -> TranslationModel:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise UnsupportedFormatError(f"{path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {version}")
    offset = 6
    towers = []
    for _ in range(2):
        if offset + 4 > len(raw):
            raise UnsupportedFormatError(f"{path}: truncated checkpoint")
        (in_dim,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        arrays = []
        for shape in ((in_dim, HIDDEN_DIM), (HIDDEN_DIM,), (HIDDEN_DIM, OUTPUT_DIM), (OUTPUT_DIM,)):
            size = 4 * int(np.prod(shape))
            if offset + size > len(raw):
                raise UnsupportedFormatError(f"{path}: truncated checkpoint")
            arr = np.frombuffer(raw, dtype="<f4", count=int(np.prod(shape)), offset=offset)
            arrays.append(arr.reshape(shape).astype(np.float64))
            offset += size
        towers.append(TowerParams(*arrays))
    if offset != len(raw):
        raise UnsupportedFormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return TranslationModel(audio_tower=towers[0], image_tower=towers[1])
