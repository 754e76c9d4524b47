"""The four studies: embedding-combination ranking, target-modality mix-in
curves, inter-cluster distance matrices, and per-class classification
reports.  Every entry point returns plain dataclasses plus a CSV emitter so
plots regenerate without code changes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, ValidationError
from .forest import ClassificationReport, ForestConfig, RandomForest, evaluate, fit_forest
from .ontology import Ontology, RelevanceConfig
from .pca import PcaModel, project
from .retrieval import DEFAULT_K, cross_modal_eval, random_ranking_eval
from .store import EmbeddingStore, pair_by_clip
from .translation import TrainConfig, TranslationModel, train_translation, translate

Projector = Callable[[EmbeddingStore], np.ndarray]


def make_translation_projector(model: TranslationModel) -> Projector:
    def run(store: EmbeddingStore) -> np.ndarray:
        return translate(model, store.modality(), store.matrix)

    return run


def make_pca_projector(models: dict[str, PcaModel]) -> Projector:
    def run(store: EmbeddingStore) -> np.ndarray:
        return project(models[store.modality()], store.matrix)

    return run


def derive_classes(stores: list[EmbeddingStore]) -> tuple[str, ...]:
    """Alphabetical label universe across stores (the canonical ordering)."""
    labels: set[str] = set()
    for store in stores:
        for meta in store.metas:
            labels.update(meta.labels)
    return tuple(sorted(labels))


def class_indices(store: EmbeddingStore, classes: tuple[str, ...]) -> np.ndarray:
    """Single-label rows mapped to class indices."""
    lookup = {name: i for i, name in enumerate(classes)}
    out = np.empty(len(store), dtype=np.int64)
    for i, meta in enumerate(store.metas):
        if len(meta.labels) != 1:
            raise ValidationError(
                f"classification rows must be single-label, {meta.sample_id!r} has "
                f"{len(meta.labels)}"
            )
        label = meta.labels[0]
        if label not in lookup:
            raise ValidationError(f"label {label!r} not among the {len(classes)} classes")
        out[i] = lookup[label]
    return out


def projected_store(store: EmbeddingStore, projector: Projector, tag_suffix: str) -> EmbeddingStore:
    """Same manifest, features replaced by the projector's output (f32)."""
    feats = np.asarray(projector(store), dtype=np.float32)
    metas = [
        replace(m, embedding_model=f"{m.embedding_model}+{tag_suffix}")
        for m in store.metas
    ]
    return EmbeddingStore(metas, feats)


# ---------------------------------------------------------------------------
# combination study
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CombinationRow:
    audio_model: str
    image_model: str
    kind: str  # "translated" | "no_translation" | "random"
    ndcg_audio_to_image: float
    ndcg_image_to_audio: float

    @property
    def mean_ndcg(self) -> float:
        return 0.5 * (self.ndcg_audio_to_image + self.ndcg_image_to_audio)


@dataclass
class CombinationStudy:
    rows: list[CombinationRow]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("audio_model,image_model,kind,ndcg_a2i,ndcg_i2a\n")
            for r in self.rows:
                fh.write(
                    f"{r.audio_model},{r.image_model},{r.kind},"
                    f"{r.ndcg_audio_to_image!r},{r.ndcg_image_to_audio!r}\n"
                )


def run_combination_study(
    audio_stores: list[EmbeddingStore],
    image_stores: list[EmbeddingStore],
    ontology: Ontology,
    relevance_cfg: RelevanceConfig,
    train_cfg: TrainConfig = TrainConfig(),
    k: int = DEFAULT_K,
    baseline_pair: tuple[EmbeddingStore, EmbeddingStore] | None = None,
    random_seed: int = 0,
) -> CombinationStudy:
    """Train one translation per (audio, image) model pair and rank by NDCG.

    Input stores carry the translation subset as split=train and the
    cross-modal subset as split=test.  The table ends with a no-translation
    row (direct retrieval on ``baseline_pair``, when given) and a seeded
    random-ranking row.
    """
    if not audio_stores or not image_stores:
        raise ConfigError("need at least one store per modality")
    rows: list[CombinationRow] = []
    for a_store in audio_stores:
        a_tag = a_store.metas[0].embedding_model
        for v_store in image_stores:
            v_tag = v_store.metas[0].embedding_model
            pairs = pair_by_clip(a_store.filter_split("train"), v_store.filter_split("train"))
            model, _ = train_translation(pairs, train_cfg)
            projector = make_translation_projector(model)
            eval_a = projected_store(a_store.filter_split("test"), projector, "translated")
            eval_v = projected_store(v_store.filter_split("test"), projector, "translated")
            a2i, i2a = cross_modal_eval(eval_a, eval_v, ontology, relevance_cfg, k)
            rows.append(
                CombinationRow(a_tag, v_tag, "translated", a2i.mean_ndcg, i2a.mean_ndcg)
            )
    rows.sort(key=lambda r: -r.mean_ndcg)

    if baseline_pair is not None:
        base_a, base_v = baseline_pair
        a2i, i2a = cross_modal_eval(
            base_a.filter_split("test"), base_v.filter_split("test"),
            ontology, relevance_cfg, k,
        )
        rows.append(
            CombinationRow(
                base_a.metas[0].embedding_model,
                base_v.metas[0].embedding_model,
                "no_translation",
                a2i.mean_ndcg,
                i2a.mean_ndcg,
            )
        )

    src = audio_stores[0].filter_split("test")
    dst = image_stores[0].filter_split("test")
    rand_a2i = random_ranking_eval(
        src, dst, "audio->image", ontology, relevance_cfg, k, seed=random_seed
    )
    rand_i2a = random_ranking_eval(
        dst, src, "image->audio", ontology, relevance_cfg, k, seed=random_seed + 1
    )
    rows.append(
        CombinationRow("-", "-", "random", rand_a2i.mean_ndcg, rand_i2a.mean_ndcg)
    )
    return CombinationStudy(rows)


# ---------------------------------------------------------------------------
# mix-in curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixCurveConfig:
    source_modality: str
    target_modality: str
    mix_in_grid: tuple[int, ...] | None = None  # default: 8 even steps 0..N
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    forest: ForestConfig = ForestConfig()

    def __post_init__(self):
        if {self.source_modality, self.target_modality} != {"audio", "image"}:
            raise ConfigError("source/target must be audio and image, one each")
        if self.mix_in_grid is not None:
            grid = tuple(self.mix_in_grid)
            if not grid or grid[0] != 0 or list(grid) != sorted(grid):
                raise ConfigError("mix_in_grid must start at 0 and be sorted ascending")
        if not self.seeds:
            raise ConfigError("need at least one seed")


@dataclass(frozen=True)
class MixCurvePoint:
    n_mixed: int
    mmt_f1: float
    mmp_f1: float
    sm_source_f1: float
    sm_target_f1: float


@dataclass
class MixCurve:
    points: list[MixCurvePoint]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("n_mixed,mmt_f1,mmp_f1,sm_source_f1,sm_target_f1\n")
            for p in self.points:
                fh.write(
                    f"{p.n_mixed},{p.mmt_f1!r},{p.mmp_f1!r},"
                    f"{p.sm_source_f1!r},{p.sm_target_f1!r}\n"
                )


def default_grid(n_target: int, n_classes: int, steps: int = 8) -> tuple[int, ...]:
    """Even steps from 0 to the full target set, snapped to class multiples."""
    raw = np.linspace(0, n_target, steps)
    snapped = sorted({int(round(v / n_classes)) * n_classes for v in raw})
    return tuple(min(v, n_target) for v in snapped)


def _balanced_sample(
    rows_by_class: list[np.ndarray], n: int, rng: np.random.Generator
) -> np.ndarray:
    """n row indices, n//C (+1 for the first n%C classes) drawn per class."""
    n_classes = len(rows_by_class)
    take = [n // n_classes + (1 if c < n % n_classes else 0) for c in range(n_classes)]
    picked = []
    for c, rows in enumerate(rows_by_class):
        if take[c] > len(rows):
            raise ConfigError(
                f"mix-in of {n} needs {take[c]} samples of class {c}, "
                f"only {len(rows)} available"
            )
        if take[c]:
            picked.append(rng.choice(rows, size=take[c], replace=False))
    return np.sort(np.concatenate(picked)) if picked else np.empty(0, dtype=np.int64)


def _fit_eval_f1(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_test: np.ndarray,
    y_test: np.ndarray,
    cfg: ForestConfig,
    n_classes: int,
) -> float:
    forest = fit_forest(X_train, y_train, cfg, n_classes=n_classes)
    return evaluate(forest, X_test, y_test).macro_f1


def run_mix_curve(
    class_stores: dict[str, EmbeddingStore],
    translation_model: TranslationModel,
    pca_models: dict[str, PcaModel],
    cfg: MixCurveConfig,
    classes: tuple[str, ...] | None = None,
) -> MixCurve:
    """Macro-F1 curves versus the number of mixed-in target-modality samples.

    For every grid point n and every seed, the multi-modal classifiers train
    on all source-modality training embeddings plus n class-balanced
    target-modality training embeddings (sampled without replacement) and
    are tested on the target-modality test split; the single-modality
    references train and test within one modality.  Points report the mean
    over seeds.
    """
    src_store = class_stores[cfg.source_modality]
    tgt_store = class_stores[cfg.target_modality]
    if classes is None:
        classes = derive_classes([src_store, tgt_store])
    n_classes = len(classes)
    if pca_models["audio"].k != pca_models["image"].k:
        raise ConfigError(
            f"PCA projectors disagree on output dim: "
            f"{pca_models['audio'].k} vs {pca_models['image'].k}"
        )

    mmt = make_translation_projector(translation_model)
    mmp = make_pca_projector(pca_models)

    splits = {
        ("src", "train"): src_store.filter_split("train"),
        ("src", "test"): src_store.filter_split("test"),
        ("tgt", "train"): tgt_store.filter_split("train"),
        ("tgt", "test"): tgt_store.filter_split("test"),
    }
    feats = {("mmt",) + key: mmt(store) for key, store in splits.items()}
    feats.update({("mmp",) + key: mmp(store) for key, store in splits.items()})
    y = {key: class_indices(store, classes) for key, store in splits.items()}

    tgt_train_y = y[("tgt", "train")]
    rows_by_class = [np.nonzero(tgt_train_y == c)[0] for c in range(n_classes)]
    n_target = len(tgt_train_y)
    grid = cfg.mix_in_grid or default_grid(n_target, n_classes)
    if grid[-1] > n_target:
        raise ConfigError(f"grid point {grid[-1]} exceeds {n_target} target samples")

    acc = {n: {"mmt": [], "mmp": []} for n in grid}
    sm_source_vals, sm_target_vals = [], []
    for seed in cfg.seeds:
        forest_cfg = replace(cfg.forest, rng_seed=seed)
        sm_source_vals.append(
            _fit_eval_f1(
                feats[("mmp", "src", "train")], y[("src", "train")],
                feats[("mmp", "src", "test")], y[("src", "test")],
                forest_cfg, n_classes,
            )
        )
        sm_target_vals.append(
            _fit_eval_f1(
                feats[("mmp", "tgt", "train")], tgt_train_y,
                feats[("mmp", "tgt", "test")], y[("tgt", "test")],
                forest_cfg, n_classes,
            )
        )
        for n in grid:
            mix_rng = np.random.default_rng([seed, n])
            picked = _balanced_sample(rows_by_class, n, mix_rng)
            for proj in ("mmt", "mmp"):
                X_train = np.vstack(
                    [feats[(proj, "src", "train")], feats[(proj, "tgt", "train")][picked]]
                )
                y_train = np.concatenate([y[("src", "train")], tgt_train_y[picked]])
                acc[n][proj].append(
                    _fit_eval_f1(
                        X_train, y_train,
                        feats[(proj, "tgt", "test")], y[("tgt", "test")],
                        forest_cfg, n_classes,
                    )
                )

    sm_source = float(np.mean(sm_source_vals))
    sm_target = float(np.mean(sm_target_vals))
    points = [
        MixCurvePoint(
            n_mixed=n,
            mmt_f1=float(np.mean(acc[n]["mmt"])),
            mmp_f1=float(np.mean(acc[n]["mmp"])),
            sm_source_f1=sm_source,
            sm_target_f1=sm_target,
        )
        for n in grid
    ]
    return MixCurve(points)


def zero_shot_f1(
    class_stores: dict[str, EmbeddingStore],
    translation_model: TranslationModel,
    source_modality: str,
    target_modality: str,
    forest_cfg: ForestConfig,
    classes: tuple[str, ...] | None = None,
) -> float:
    """Train on translated source training data only, test on the target.

    This is exactly the n=0 point of the MMT mix-in curve.
    """
    src = class_stores[source_modality]
    tgt = class_stores[target_modality]
    if classes is None:
        classes = derive_classes([src, tgt])
    projector = make_translation_projector(translation_model)
    return _fit_eval_f1(
        projector(src.filter_split("train")),
        class_indices(src.filter_split("train"), classes),
        projector(tgt.filter_split("test")),
        class_indices(tgt.filter_split("test"), classes),
        forest_cfg,
        len(classes),
    )


# ---------------------------------------------------------------------------
# inter-cluster distances
# ---------------------------------------------------------------------------


@dataclass
class ClusterDistanceMatrix:
    keys: tuple[tuple[str, str], ...]  # (modality, class)
    values: np.ndarray  # symmetric, zero diagonal
    missing: tuple[tuple[str, str], ...]
    sort: str  # "modality" | "class"

    def to_csv(self, path: str | Path) -> None:
        names = [f"{m}:{c}" for m, c in self.keys]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("cell," + ",".join(names) + "\n")
            for i, name in enumerate(names):
                fh.write(name + "," + ",".join(repr(float(v)) for v in self.values[i]) + "\n")


def run_cluster_distances(
    audio_store: EmbeddingStore,
    image_store: EmbeddingStore,
    sort: str = "modality",
    classes: tuple[str, ...] | None = None,
) -> ClusterDistanceMatrix:
    """Pairwise cosine distance between per-(modality, class) centroids.

    Sort order permutes rows/columns only: "modality" groups all audio
    cells first, "class" interleaves the two modalities per class.  Cells
    with no members are omitted and listed in ``missing``.
    """
    if sort not in ("modality", "class"):
        raise ConfigError(f"sort must be 'modality' or 'class', got {sort!r}")
    if classes is None:
        classes = derive_classes([audio_store, image_store])
    if sort == "modality":
        order = [(m, c) for m in ("audio", "image") for c in classes]
    else:
        order = [(m, c) for c in classes for m in ("audio", "image")]

    centroids: dict[tuple[str, str], np.ndarray] = {}
    for modality, store in (("audio", audio_store), ("image", image_store)):
        y = class_indices(store, classes)
        for c, name in enumerate(classes):
            rows = store.matrix[y == c]
            if len(rows):
                centroids[(modality, name)] = rows.astype(np.float64).mean(axis=0)

    keys = tuple(k for k in order if k in centroids)
    missing = tuple(k for k in order if k not in centroids)
    stack = np.vstack([centroids[k] for k in keys])
    norm = stack / np.maximum(np.linalg.norm(stack, axis=1, keepdims=True), 1e-12)
    values = 1.0 - norm @ norm.T
    np.fill_diagonal(values, 0.0)
    return ClusterDistanceMatrix(keys=keys, values=values, missing=missing, sort=sort)


# ---------------------------------------------------------------------------
# classification report
# ---------------------------------------------------------------------------


def run_classification_report(
    train_stores: list[EmbeddingStore],
    test_store: EmbeddingStore,
    projector: Projector,
    forest_cfg: ForestConfig = ForestConfig(),
    classes: tuple[str, ...] | None = None,
) -> tuple[ClassificationReport, RandomForest]:
    """Fit on the projected train stores, report on the projected test store."""
    if classes is None:
        classes = derive_classes(train_stores + [test_store])
    X_train = np.vstack([projector(s) for s in train_stores])
    y_train = np.concatenate([class_indices(s, classes) for s in train_stores])
    forest = fit_forest(X_train, y_train, forest_cfg, n_classes=len(classes))
    report = evaluate(forest, projector(test_store), class_indices(test_store, classes), classes)
    return report, forest
