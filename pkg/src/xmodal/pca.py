"""Per-(modality, embedding-model) PCA to 128 dimensions.

The non-translated baseline projector.  Components carry a deterministic
sign convention (largest-magnitude entry positive) so runs reproduce across
math backends; rank-deficient inputs are completed with orthonormal rows of
zero explained variance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, UnsupportedFormatError, ValidationError

DEFAULT_COMPONENTS = 128

CHECKPOINT_MAGIC = b"XMPC"
CHECKPOINT_VERSION = 1


@dataclass
class PcaModel:
    mean: np.ndarray  # (in_dim,)
    components: np.ndarray  # (k, in_dim), orthonormal rows, variance-sorted
    explained_variance: np.ndarray  # (k,), non-increasing, non-negative

    @property
    def in_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[0]


def fit_pca(X: np.ndarray, k: int = DEFAULT_COMPONENTS) -> PcaModel:
    """Top-k principal axes of the mean-centered rows of X (via SVD)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ConfigError(f"expected a 2-D matrix, got shape {X.shape}")
    n, in_dim = X.shape
    if n < 2:
        raise ConfigError(f"PCA needs at least 2 rows, got {n}")
    if in_dim < k:
        raise ConfigError(f"cannot extract {k} components from {in_dim}-dim data")
    if not np.isfinite(X).all():
        raise ValidationError("PCA input contains non-finite values")

    mean = X.mean(axis=0)
    _, svals, vt = np.linalg.svd(X - mean, full_matrices=False)
    variance = svals**2 / (n - 1)
    rows = min(k, vt.shape[0])
    components = vt[:rows].copy()
    explained = variance[:rows].copy()
    if rows < k:  # fewer rows than components: complete orthonormally
        components = np.vstack([components, _orthonormal_completion(components, k - rows)])
        explained = np.concatenate([explained, np.zeros(k - rows)])
    return PcaModel(
        mean=mean,
        components=_fix_signs(components),
        explained_variance=explained,
    )


def _fix_signs(components: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    out = components.copy()
    for row in out:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return out


def _orthonormal_completion(rows: np.ndarray, extra: int) -> np.ndarray:
    """Deterministic Gram-Schmidt against canonical basis vectors."""
    d = rows.shape[1]
    basis = list(rows)
    out = []
    for j in range(d):
        if len(out) == extra:
            break
        e = np.zeros(d)
        e[j] = 1.0
        for b in basis:
            e -= (e @ b) * b
        norm = np.linalg.norm(e)
        if norm > 1e-8:
            e /= norm
            basis.append(e)
            out.append(e)
    if len(out) < extra:
        raise ConfigError("could not complete an orthonormal basis")
    return np.array(out)


def project(model: PcaModel, x: np.ndarray) -> np.ndarray:
    """components @ (x - mean) for one vector or a batch of rows."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != model.in_dim:
        raise ValidationError(
            f"input dim {x.shape[1]} does not match model dim {model.in_dim}"
        )
    out = (x - model.mean) @ model.components.T
    return out[0] if single else out


def save_model(model: PcaModel, path: str | Path) -> None:
    """Checkpoint: magic XMPC, version u16, in_dim u32, k u32, f32 arrays."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<HII", CHECKPOINT_VERSION, model.in_dim, model.k))
        for arr in (model.mean, model.components, model.explained_variance):
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_model(path: str | Path) -> PcaModel:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise UnsupportedFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, in_dim, k = struct.unpack_from("<HII", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {version}")
    offset = 14
    expected = offset + 4 * (in_dim + k * in_dim + k)
    if len(raw) != expected:
        raise UnsupportedFormatError(
            f"{path}: file is {len(raw)} bytes, header promises {expected}"
        )
    mean = np.frombuffer(raw, dtype="<f4", count=in_dim, offset=offset).astype(np.float64)
    offset += 4 * in_dim
    components = (
        np.frombuffer(raw, dtype="<f4", count=k * in_dim, offset=offset)
        .reshape(k, in_dim)
        .astype(np.float64)
    )
    offset += 4 * k * in_dim
    explained = np.frombuffer(raw, dtype="<f4", count=k, offset=offset).astype(np.float64)
    return PcaModel(mean=mean, components=components, explained_variance=explained)
