"""Random-forest classifier over 128-d embeddings, built on array-based CART.

Each tree fits a bootstrap resample with Gini splits over ceil(sqrt(dim))
random feature candidates per node; thresholds are midpoints between
consecutive distinct sorted values.  Tree t draws its randomness from
``rng_seed + t`` so serial and parallel fits agree exactly.  Prediction is
a hard majority vote over per-tree leaf-majority classes, ties resolved
toward the lowest class index.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateFitError, ValidationError

#: Canonical class ordering for the instrument task (alphabetical, fixed).
INSTRUMENT_CLASSES = (
    "accordion",
    "banjo",
    "cello",
    "clarinet",
    "cymbals",
    "drums",
    "flute",
    "guitar",
    "mandolin",
    "organ",
    "piano",
    "saxophone",
    "synthesizer",
    "trombone",
    "trumpet",
    "ukulele",
    "violin",
    "voice",
)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 32
    min_samples_split: int = 2
    features_per_split: int | None = None  # default ceil(sqrt(dim))
    bootstrap: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")


@dataclass
class DecisionTree:
    """Flat node arrays; feature == -1 marks a leaf."""

    feature: np.ndarray  # (n_nodes,) int32, -1 for leaves
    threshold: np.ndarray  # (n_nodes,) float64
    left: np.ndarray  # (n_nodes,) int32
    right: np.ndarray  # (n_nodes,) int32
    histogram: np.ndarray  # (n_nodes, n_classes) int64 class counts
    depth: np.ndarray  # (n_nodes,) int32

    def __post_init__(self):
        self.leaf_class = self.histogram.argmax(axis=1).astype(np.int32)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node index for every row."""
        pos = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[pos]
            active = feat >= 0
            if not active.any():
                return pos
            rows = np.nonzero(active)[0]
            vals = X[rows, feat[rows]]
            go_left = vals <= self.threshold[pos[rows]]
            pos[rows] = np.where(go_left, self.left[pos[rows]], self.right[pos[rows]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Per-row leaf-majority class (ties toward the lowest index)."""
        return self.leaf_class[self.apply(X)]


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    n_classes: int
    dim: int
    config: ForestConfig = field(default_factory=ForestConfig)
    class_names: tuple[str, ...] | None = None

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _check_input(X, self.dim)
        votes = np.zeros((len(X), self.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict(X)), 1)
        return votes.argmax(axis=1)

    def predict_one(self, x: np.ndarray) -> int:
        return int(self.predict(np.asarray(x, dtype=np.float64)[None, :])[0])


def _check_input(X: np.ndarray, dim: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != dim:
        raise ValidationError(f"input dim {X.shape[1]} does not match forest dim {dim}")
    return X


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    cfg: ForestConfig,
    n_classes: int | None = None,
    n_jobs: int = 1,
) -> RandomForest:
    """Fit ``cfg.n_trees`` trees on bootstrap resamples of (X, y).

    ``y`` holds class indices in the canonical ordering.  Trees are
    independent; ``n_jobs > 1`` fans them out over threads without changing
    the result.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise ConfigError(f"X {X.shape} and y {y.shape} do not align")
    if len(X) < 2:
        raise ConfigError("need at least 2 training rows")
    if y.min() < 0:
        raise ConfigError("class indices must be non-negative")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    elif y.max() >= n_classes:
        raise ConfigError(f"label {int(y.max())} out of range for {n_classes} classes")
    if len(np.unique(y)) < 2:
        raise DegenerateFitError("training data has a single class")

    n, dim = X.shape
    m = cfg.features_per_split or math.ceil(math.sqrt(dim))
    if not (1 <= m <= dim):
        raise ConfigError(f"features_per_split {m} out of range for dim {dim}")

    def build(t: int) -> DecisionTree:
        rng = np.random.default_rng(cfg.rng_seed + t)
        idx = rng.integers(0, n, size=n) if cfg.bootstrap else np.arange(n)
        return _grow_tree(X, y, idx, n_classes, m, cfg, rng)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            trees = list(pool.map(build, range(cfg.n_trees)))
    else:
        trees = [build(t) for t in range(cfg.n_trees)]
    return RandomForest(trees=trees, n_classes=n_classes, dim=dim, config=cfg)


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    root_idx: np.ndarray,
    n_classes: int,
    m_features: int,
    cfg: ForestConfig,
    rng: np.random.Generator,
) -> DecisionTree:
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    hists: list[np.ndarray] = []
    depths: list[int] = []

    def new_node(idx: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        hists.append(np.bincount(y[idx], minlength=n_classes))
        depths.append(depth)
        return node

    # LIFO with the right child pushed first keeps expansion depth-first
    # left-to-right, so rng consumption is reproducible.
    root = new_node(root_idx, 0)
    stack: list[tuple[int, np.ndarray]] = [(root, root_idx)]
    while stack:
        node, idx = stack.pop()
        depth = depths[node]
        hist = hists[node]
        if (
            depth >= cfg.max_depth
            or len(idx) < cfg.min_samples_split
            or hist.max() == len(idx)  # pure
        ):
            continue
        cand = rng.choice(X.shape[1], size=m_features, replace=False)
        feat, thr = _best_split(X[np.ix_(idx, cand)], y[idx], n_classes)
        if feat < 0:  # all candidate features constant
            continue
        feature[node] = int(cand[feat])
        threshold[node] = thr
        go_left = X[idx, feature[node]] <= thr
        left_idx, right_idx = idx[go_left], idx[~go_left]
        left[node] = new_node(left_idx, depth + 1)
        right[node] = new_node(right_idx, depth + 1)
        stack.append((right[node], right_idx))
        stack.append((left[node], left_idx))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        histogram=np.asarray(hists, dtype=np.int64),
        depth=np.asarray(depths, dtype=np.int32),
    )


def _best_split(Xc: np.ndarray, yc: np.ndarray, n_classes: int) -> tuple[int, float]:
    """Best (candidate-column, threshold) by weighted Gini over midpoints.

    Minimizing the weighted Gini equals maximizing sum_side (sum_c n_c^2)/n_side.
    The squared class counts are accumulated incrementally: moving the
    boundary past an element whose class already has k members on that side
    raises the side's sum of squares by 2k + 1.  Invalid positions (equal
    consecutive values) are masked out.  Returns (-1, 0.0) when no candidate
    column admits a split.
    """
    n, f = Xc.shape
    order = np.argsort(Xc, axis=0, kind="stable")
    sorted_vals = np.take_along_axis(Xc, order, axis=0)
    sorted_y = yc[order]  # (n, f)

    # Occurrence rank of every element within its (column, class) group,
    # all columns in one stable sort: offsetting classes per column keeps
    # groups from colliding.
    keys = (sorted_y + np.arange(f)[None, :] * n_classes).T.ravel()  # column-major
    grouped = np.argsort(keys, kind="stable")
    new_run = np.empty(n * f, dtype=bool)
    new_run[0] = True
    new_run[1:] = keys[grouped][1:] != keys[grouped][:-1]
    run_id = np.cumsum(new_run) - 1
    run_starts = np.flatnonzero(new_run)
    run_lengths = np.diff(np.append(run_starts, n * f))
    pos_in_run = np.arange(n * f) - run_starts[run_id]
    occ_flat = np.empty(n * f, dtype=np.int64)
    occ_flat[grouped] = pos_in_run
    rev_flat = np.empty(n * f, dtype=np.int64)
    rev_flat[grouped] = run_lengths[run_id] - pos_in_run - 1
    occ = occ_flat.reshape(f, n).T  # same-class count before i, per column
    occ_rev = rev_flat.reshape(f, n).T  # same-class count after i

    n_left = np.arange(1, n, dtype=np.float64)[:, None]
    sumsq_left = np.cumsum(2 * occ + 1, axis=0)[:-1]
    suffix = np.cumsum((2 * occ_rev + 1)[::-1], axis=0)[::-1]
    score = sumsq_left / n_left + suffix[1:] / (n - n_left)

    valid = sorted_vals[1:] > sorted_vals[:-1]
    score[~valid] = -np.inf
    flat = int(np.argmax(score.T))  # feature-major: earliest column, then position
    best_feat, best_pos = divmod(flat, n - 1)
    if not np.isfinite(score[best_pos, best_feat]):
        return -1, 0.0
    thr = 0.5 * (sorted_vals[best_pos, best_feat] + sorted_vals[best_pos + 1, best_feat])
    return best_feat, float(thr)


@dataclass
class ClassificationReport:
    precision: np.ndarray  # (n_classes,)
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray  # (n_classes,) true counts
    macro_f1: float
    confusion: np.ndarray  # (n_classes, n_classes), rows = truth
    class_names: tuple[str, ...] | None = None

    def name_of(self, c: int) -> str:
        return self.class_names[c] if self.class_names else str(c)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("class,precision,recall,f1,support\n")
            for c in range(len(self.f1)):
                fh.write(
                    f"{self.name_of(c)},{float(self.precision[c])!r},{float(self.recall[c])!r},"
                    f"{float(self.f1[c])!r},{int(self.support[c])}\n"
                )
            fh.write(f"MACRO,,,{self.macro_f1!r},{int(self.support.sum())}\n")

    def confusion_to_csv(self, path: str | Path) -> None:
        names = [self.name_of(c) for c in range(len(self.f1))]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("true\\pred," + ",".join(names) + "\n")
            for c, row in enumerate(self.confusion):
                fh.write(names[c] + "," + ",".join(str(int(v)) for v in row) + "\n")


def evaluate(
    forest: RandomForest,
    X_test: np.ndarray,
    y_test: np.ndarray,
    class_names: tuple[str, ...] | None = None,
) -> ClassificationReport:
    """Per-class P/R/F1 (0 when undefined) and the truth-row confusion matrix."""
    X_test = _check_input(X_test, forest.dim)
    y_test = np.asarray(y_test, dtype=np.int64)
    if len(X_test) == 0:
        raise ConfigError("test set is empty")
    y_pred = forest.predict(X_test)
    return score_predictions(y_test, y_pred, forest.n_classes, class_names)


def score_predictions(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    n_classes: int,
    class_names: tuple[str, ...] | None = None,
) -> ClassificationReport:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)
    tp = np.diag(confusion).astype(np.float64)
    pred_counts = confusion.sum(axis=0).astype(np.float64)
    true_counts = confusion.sum(axis=1).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_counts > 0, tp / pred_counts, 0.0)
        recall = np.where(true_counts > 0, tp / true_counts, 0.0)
        pr = precision + recall
        f1 = np.where(pr > 0, 2 * precision * recall / np.where(pr > 0, pr, 1.0), 0.0)
    return ClassificationReport(
        precision=precision,
        recall=recall,
        f1=f1,
        support=confusion.sum(axis=1),
        macro_f1=float(f1.mean()),
        confusion=confusion,
        class_names=class_names,
    )


def save_forest(forest: RandomForest, path: str | Path) -> None:
    """Persist as an npz archive (arrays per tree plus config scalars)."""
    payload: dict[str, np.ndarray] = {
        "meta": np.asarray(
            [
                forest.n_classes,
                forest.dim,
                len(forest.trees),
                forest.config.n_trees,
                forest.config.max_depth,
                forest.config.min_samples_split,
                forest.config.features_per_split or 0,
                int(forest.config.bootstrap),
                forest.config.rng_seed,
            ],
            dtype=np.int64,
        )
    }
    if forest.class_names:
        payload["class_names"] = np.asarray(forest.class_names)
    for t, tree in enumerate(forest.trees):
        payload[f"t{t}_feature"] = tree.feature
        payload[f"t{t}_threshold"] = tree.threshold
        payload[f"t{t}_left"] = tree.left
        payload[f"t{t}_right"] = tree.right
        payload[f"t{t}_histogram"] = tree.histogram
        payload[f"t{t}_depth"] = tree.depth
    np.savez_compressed(path, **payload)


def load_forest(path: str | Path) -> RandomForest:
    with np.load(path) as data:
        meta = data["meta"]
        cfg = ForestConfig(
            n_trees=int(meta[3]),
            max_depth=int(meta[4]),
            min_samples_split=int(meta[5]),
            features_per_split=int(meta[6]) or None,
            bootstrap=bool(meta[7]),
            rng_seed=int(meta[8]),
        )
        trees = []
        for t in range(int(meta[2])):
            trees.append(
                DecisionTree(
                    feature=data[f"t{t}_feature"],
                    threshold=data[f"t{t}_threshold"],
                    left=data[f"t{t}_left"],
                    right=data[f"t{t}_right"],
                    histogram=data[f"t{t}_histogram"],
                    depth=data[f"t{t}_depth"],
                )
            )
        names = tuple(str(v) for v in data["class_names"]) if "class_names" in data else None
    return RandomForest(
        trees=trees, n_classes=int(meta[0]), dim=int(meta[1]), config=cfg, class_names=names
    )
