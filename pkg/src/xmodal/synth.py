"""Synthetic paired-embedding oracle with a matching toy ontology.

Every class owns a fixed unit latent; each clip perturbs it and maps the
result through fixed full-rank linear maps into "audio" (YamNet-like dims)
and "image" (ResNet-like dims) embeddings plus per-entry Gaussian noise.
Ground truth is therefore known: same-class rows cluster, and a 2-layer
translation is learnable but not trivial.

Alongside the main pair of embedding models, the generator emits a second
pair living in one shared space (equal dims, partially-aligned maps,
more noise) which serves as the non-translated retrieval baseline, and a
toy ontology: an excluded root over three family nodes over the class
leaves, with a non-excluded hub keeping families connected when the root
is excluded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .forest import INSTRUMENT_CLASSES
from .ontology import Ontology, OntologyNode, save_ontology
from .store import EmbeddingStore, PairedDataset, SampleMeta, pair_by_clip, write_store

ROOT_ID = "music"
HUB_ID = "instrument_hub"
FAMILY_COUNT = 3


@dataclass(frozen=True)
class SynthConfig:
    n_classes: int = 18
    latent_dim: int = 32
    audio_dim: int = 1024
    image_dim: int = 2048
    # per-class sample counts per subset (desk-scale defaults: ~2k
    # translation pairs, ~500 cross-modal pairs, 1800/360 classification)
    translation_per_class: int = 112
    crossmodal_per_class: int = 28
    class_train_per_class: int = 100
    class_test_per_class: int = 20
    latent_noise: float = 0.1
    audio_noise: float = 0.05
    image_noise: float = 0.05
    # shared-space pair used as the no-translation retrieval baseline;
    # alignment/noise tuned so direct retrieval lands between the random
    # floor and a freshly trained translation
    baseline_dim: int = 512
    baseline_alignment: float = 0.7
    baseline_noise: float = 0.5
    class_imbalance: tuple[float, ...] | None = None
    audio_tag: str = "synth-audio"
    image_tag: str = "synth-image"
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ConfigError("need at least 2 classes")
        if min(self.audio_dim, self.image_dim, self.baseline_dim) < self.latent_dim:
            raise ConfigError("embedding dims must be >= latent_dim")
        for name in ("latent_noise", "audio_noise", "image_noise", "baseline_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in (
            "translation_per_class",
            "crossmodal_per_class",
            "class_train_per_class",
            "class_test_per_class",
        ):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (0.0 <= self.baseline_alignment <= 1.0):
            raise ConfigError("baseline_alignment must lie in [0, 1]")
        if self.class_imbalance is not None and len(self.class_imbalance) != self.n_classes:
            raise ConfigError("class_imbalance needs one multiplier per class")

    def class_names(self) -> tuple[str, ...]:
        if self.n_classes <= len(INSTRUMENT_CLASSES):
            return INSTRUMENT_CLASSES[: self.n_classes]
        return tuple(f"class_{i:02d}" for i in range(self.n_classes))


@dataclass
class SynthData:
    translation_pairs: PairedDataset
    crossmodal_pairs: PairedDataset
    crossmodal_baseline_pairs: PairedDataset
    class_audio: EmbeddingStore  # split=train/test rows
    class_image: EmbeddingStore
    ontology: Ontology
    config: SynthConfig = field(repr=False, default=None)  # type: ignore[assignment]

    def combined_audio(self) -> EmbeddingStore:
        """Translation (train) + cross-modal (test) rows for the audio model."""
        return _concat(self.translation_pairs.audio_store, self.crossmodal_pairs.audio_store)

    def combined_image(self) -> EmbeddingStore:
        return _concat(self.translation_pairs.image_store, self.crossmodal_pairs.image_store)


def _concat(a: EmbeddingStore, b: EmbeddingStore) -> EmbeddingStore:
    return EmbeddingStore(list(a.metas) + list(b.metas), np.vstack([a.matrix, b.matrix]))


def build_toy_ontology(class_names: tuple[str, ...]) -> Ontology:
    """Root (excluded top label) -> 3 families -> leaves, plus a hub.

    The hub also parents every family so that excluding the root leaves
    cross-family paths intact: sibling leaves sit 2 hops apart, leaves in
    different families 4.
    """
    members: dict[str, list[str]] = {}
    for i, name in enumerate(class_names):
        members.setdefault(f"family_{i % FAMILY_COUNT}", []).append(name)
    families = sorted(members)
    nodes = [
        OntologyNode(ROOT_ID, "Music", tuple(families) + (HUB_ID,)),
        OntologyNode(HUB_ID, "Instruments", tuple(families)),
    ]
    for fam in families:
        nodes.append(OntologyNode(fam, fam.replace("_", " "), tuple(members[fam])))
    for name in class_names:
        nodes.append(OntologyNode(name, name, ()))
    return Ontology(nodes)


def _per_class_counts(base: int, cfg: SynthConfig) -> list[int]:
    if cfg.class_imbalance is None:
        return [base] * cfg.n_classes
    return [max(0, int(round(base * m))) for m in cfg.class_imbalance]


def generate(cfg: SynthConfig = SynthConfig()) -> SynthData:
    """Deterministically generate every subset plus the toy ontology.

    Same seed, same bytes: all randomness flows through one generator in a
    fixed draw order (class latents, maps, then subsets class by class).
    """
    rng = np.random.default_rng(cfg.rng_seed)
    names = cfg.class_names()

    latents = rng.normal(size=(cfg.n_classes, cfg.latent_dim))
    latents /= np.linalg.norm(latents, axis=1, keepdims=True)

    scale = 1.0 / np.sqrt(cfg.latent_dim)
    # each modality gets its own latent-direction gain profile, so the two
    # raw covariance structures differ the way unrelated backbones do (and
    # per-modality PCA axes do not align by accident)
    audio_gain = rng.uniform(0.5, 2.0, size=(cfg.latent_dim, 1))
    image_gain = rng.uniform(0.5, 2.0, size=(cfg.latent_dim, 1))
    audio_map = audio_gain * rng.normal(size=(cfg.latent_dim, cfg.audio_dim)) * scale
    image_map = image_gain * rng.normal(size=(cfg.latent_dim, cfg.image_dim)) * scale
    base_shared = rng.normal(size=(cfg.latent_dim, cfg.baseline_dim)) * scale
    base_indep = rng.normal(size=(cfg.latent_dim, cfg.baseline_dim)) * scale
    alpha = cfg.baseline_alignment
    base_audio_map = base_shared
    base_image_map = alpha * base_shared + np.sqrt(1.0 - alpha**2) * base_indep

    def make_subset(subset: str, base_count: int, split: str, with_baseline: bool):
        metas_a, metas_v, rows_a, rows_v = [], [], [], []
        metas_ba, metas_bv, rows_ba, rows_bv = [], [], [], []
        for c, count in enumerate(_per_class_counts(base_count, cfg)):
            if count == 0:
                continue
            z = latents[c] + cfg.latent_noise * rng.normal(size=(count, cfg.latent_dim))
            audio = z @ audio_map + cfg.audio_noise * rng.normal(size=(count, cfg.audio_dim))
            image = z @ image_map + cfg.image_noise * rng.normal(size=(count, cfg.image_dim))
            if with_baseline:
                b_audio = z @ base_audio_map + cfg.baseline_noise * rng.normal(
                    size=(count, cfg.baseline_dim)
                )
                b_image = z @ base_image_map + cfg.baseline_noise * rng.normal(
                    size=(count, cfg.baseline_dim)
                )
            for i in range(count):
                clip = f"{subset}-{c:02d}-{i:04d}"
                labels = (names[c],)
                metas_a.append(
                    SampleMeta(f"{clip}-a", clip, "audio", labels, split, cfg.audio_tag)
                )
                metas_v.append(
                    SampleMeta(f"{clip}-i", clip, "image", labels, split, cfg.image_tag)
                )
                if with_baseline:
                    metas_ba.append(
                        SampleMeta(
                            f"{clip}-ba", clip, "audio", labels, split,
                            f"{cfg.audio_tag}-shared",
                        )
                    )
                    metas_bv.append(
                        SampleMeta(
                            f"{clip}-bi", clip, "image", labels, split,
                            f"{cfg.image_tag}-shared",
                        )
                    )
            rows_a.append(audio)
            rows_v.append(image)
            if with_baseline:
                rows_ba.append(b_audio)
                rows_bv.append(b_image)
        store_a = EmbeddingStore(metas_a, np.vstack(rows_a).astype(np.float32))
        store_v = EmbeddingStore(metas_v, np.vstack(rows_v).astype(np.float32))
        if not with_baseline:
            return store_a, store_v, None, None
        store_ba = EmbeddingStore(metas_ba, np.vstack(rows_ba).astype(np.float32))
        store_bv = EmbeddingStore(metas_bv, np.vstack(rows_bv).astype(np.float32))
        return store_a, store_v, store_ba, store_bv

    tr_a, tr_v, _, _ = make_subset("translation", cfg.translation_per_class, "train", False)
    cm_a, cm_v, cm_ba, cm_bv = make_subset(
        "crossmodal", cfg.crossmodal_per_class, "test", True
    )
    cls_tr_a, cls_tr_v, _, _ = make_subset(
        "clstrain", cfg.class_train_per_class, "train", False
    )
    cls_te_a, cls_te_v, _, _ = make_subset("clstest", cfg.class_test_per_class, "test", False)

    return SynthData(
        translation_pairs=pair_by_clip(tr_a, tr_v),
        crossmodal_pairs=pair_by_clip(cm_a, cm_v),
        crossmodal_baseline_pairs=pair_by_clip(cm_ba, cm_bv),
        class_audio=_concat(cls_tr_a, cls_te_a),
        class_image=_concat(cls_tr_v, cls_te_v),
        ontology=build_toy_ontology(names),
        config=cfg,
    )


def class_histogram(store: EmbeddingStore, ontology: Ontology) -> list[tuple[str, int]]:
    """Sample count per ontology leaf class, sorted by class name."""
    leaf_ids = set(ontology.leaf_ids())
    counts = {leaf: 0 for leaf in leaf_ids}
    for meta in store.metas:
        for label in meta.labels:
            if label in leaf_ids:
                counts[label] += 1
    return sorted(((ontology.nodes[leaf].name, n) for leaf, n in counts.items()))


def histogram_to_csv(hist: list[tuple[str, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("class,count\n")
        for name, count in hist:
            fh.write(f"{name},{count}\n")


def write_synth_dirs(data: SynthData, out_dir: str | Path) -> None:
    """Standard store directories + ontology.json under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    layout = {
        "translation/audio": data.translation_pairs.audio_store,
        "translation/image": data.translation_pairs.image_store,
        "crossmodal/audio": data.crossmodal_pairs.audio_store,
        "crossmodal/image": data.crossmodal_pairs.image_store,
        "crossmodal-baseline/audio": data.crossmodal_baseline_pairs.audio_store,
        "crossmodal-baseline/image": data.crossmodal_baseline_pairs.image_store,
        "classification/audio": data.class_audio,
        "classification/image": data.class_image,
        "combined/audio": data.combined_audio(),
        "combined/image": data.combined_image(),
    }
    for rel, store in layout.items():
        write_store(list(store.metas), store.matrix, out / rel)
    save_ontology(data.ontology, out / "ontology.json")
