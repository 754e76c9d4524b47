"""Command-line surface: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation/config/usage error, 2 I/O error.
Every output-producing run writes ``run.json`` echoing its resolved
parameters next to its artifacts.  A JSON file passed via ``--config``
supplies flag defaults (command-line flags win); ``XMODAL_THREADS`` is the
fallback for ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments, forest, pca, retrieval, synth, translation
from .errors import ConfigError, XmodalError
from .ontology import RelevanceConfig, load_ontology
from .runmeta import write_run_manifest
from .store import read_store, write_store


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage to 1
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _split_list(text: str) -> list[str]:
    return [part for part in text.split(",") if part]


def _resolve_threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("XMODAL_THREADS")
    return int(env) if env else 1


def _relevance_config(args, ontology) -> RelevanceConfig:
    if args.exclude_labels is not None:
        return RelevanceConfig(
            max_distance=args.max_distance,
            excluded_labels=frozenset(_split_list(args.exclude_labels)),
        )
    return RelevanceConfig.default_for(ontology, max_distance=args.max_distance)


def _echo_params(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _train_config(args) -> translation.TrainConfig:
    return translation.TrainConfig(
        batch_size=args.batch_size,
        margin=args.margin,
        learning_rate=args.lr,
        patience_epochs=args.patience,
        max_epochs=args.max_epochs,
        val_fraction=args.val_fraction,
        rng_seed=args.seed,
    )


def _forest_config(args) -> forest.ForestConfig:
    return forest.ForestConfig(
        n_trees=args.trees, max_depth=args.depth, rng_seed=args.seed
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> None:
    imbalance = None
    if args.imbalance:
        imbalance = tuple(float(v) for v in _split_list(args.imbalance))
    cfg = synth.SynthConfig(
        n_classes=args.classes,
        latent_dim=args.latent_dim,
        audio_dim=args.audio_dim,
        image_dim=args.image_dim,
        translation_per_class=args.translation_per_class,
        crossmodal_per_class=args.crossmodal_per_class,
        class_train_per_class=args.class_train_per_class,
        class_test_per_class=args.class_test_per_class,
        latent_noise=args.latent_noise,
        audio_noise=args.audio_noise,
        image_noise=args.image_noise,
        baseline_dim=args.baseline_dim,
        baseline_alignment=args.baseline_alignment,
        baseline_noise=args.baseline_noise,
        class_imbalance=imbalance,
        rng_seed=args.seed,
    )
    data = synth.generate(cfg)
    synth.write_synth_dirs(data, args.out_dir)
    write_run_manifest(args.out_dir, "synth", _echo_params(args))
    print(f"wrote synthetic dataset under {args.out_dir}")


def cmd_validate_store(args) -> None:
    store = read_store(args.store)
    splits = {}
    for meta in store.metas:
        splits[meta.split] = splits.get(meta.split, 0) + 1
    print(f"{args.store}: OK ({store.count} rows, dim {store.dim}, splits {splits})")
    if args.out_dir:
        write_run_manifest(args.out_dir, "validate-store", _echo_params(args), [args.store])


def cmd_train_translation(args) -> None:
    from .store import pair_by_clip

    audio = read_store(Path(args.pairs) / "audio")
    image = read_store(Path(args.pairs) / "image")
    pairs = pair_by_clip(audio, image)
    model, history = translation.train_translation(pairs, _train_config(args))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    translation.save_model(model, out / "model.xmtm")
    history.to_csv(out / "history.csv")
    write_run_manifest(out, "train-translation", _echo_params(args), [args.pairs])
    print(
        f"trained {history.stop_epoch} epochs ({history.stop_reason}), "
        f"best epoch {history.best_epoch}, "
        f"final val loss {history.val_losses[-1]:.6f} -> {out / 'model.xmtm'}"
    )


def cmd_fit_pca(args) -> None:
    store = read_store(args.store)
    if args.split != "all":
        store = store.filter_split(args.split)
    model = pca.fit_pca(np.asarray(store.matrix, dtype=np.float64), k=args.k)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pca.save_model(model, out / "pca.xmpc")
    write_run_manifest(out, "fit-pca", _echo_params(args), [args.store])
    print(f"fit PCA ({store.count} rows -> {args.k} components) -> {out / 'pca.xmpc'}")


def _load_projector(args, store) -> experiments.Projector:
    raw = Path(args.model).read_bytes()[:4]
    if raw == translation.CHECKPOINT_MAGIC:
        model = translation.load_model(args.model)
        return experiments.make_translation_projector(model)
    if raw == pca.CHECKPOINT_MAGIC:
        m = pca.load_model(args.model)
        return experiments.make_pca_projector({store.modality(): m})
    raise ConfigError(f"{args.model}: unrecognized checkpoint magic {raw!r}")


def cmd_project(args) -> None:
    store = read_store(args.store)
    projector = _load_projector(args, store)
    suffix = "translated" if Path(args.model).read_bytes()[:4] == translation.CHECKPOINT_MAGIC else "pca"
    projected = experiments.projected_store(store, projector, suffix)
    write_store(list(projected.metas), projected.matrix, args.out_dir)
    write_run_manifest(args.out_dir, "project", _echo_params(args), [args.store, args.model])
    print(f"projected {store.count} rows to dim {projected.dim} -> {args.out_dir}")


def cmd_retrieve_eval(args) -> None:
    audio = read_store(args.audio)
    image = read_store(args.image)
    ontology = load_ontology(args.ontology)
    cfg = _relevance_config(args, ontology)
    a2i, i2a = retrieval.cross_modal_eval(audio, image, ontology, cfg, k=args.k)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    retrieval.reports_to_csv([a2i, i2a], out / "retrieval.csv")
    write_run_manifest(
        out, "retrieve-eval", _echo_params(args), [args.audio, args.image, args.ontology]
    )
    print(
        f"mean NDCG@{args.k}: audio->image {a2i.mean_ndcg:.4f} "
        f"({a2i.skipped_count} skipped), image->audio {i2a.mean_ndcg:.4f} "
        f"({i2a.skipped_count} skipped) -> {out / 'retrieval.csv'}"
    )


def cmd_combo_study(args) -> None:
    audio_stores = [read_store(p) for p in _split_list(args.audio)]
    image_stores = [read_store(p) for p in _split_list(args.image)]
    ontology = load_ontology(args.ontology)
    cfg = _relevance_config(args, ontology)
    baseline = None
    if args.baseline_audio and args.baseline_image:
        baseline = (read_store(args.baseline_audio), read_store(args.baseline_image))
    study = experiments.run_combination_study(
        audio_stores,
        image_stores,
        ontology,
        cfg,
        train_cfg=_train_config(args),
        k=args.k,
        baseline_pair=baseline,
        random_seed=args.seed,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    study.to_csv(out / "combo_study.csv")
    inputs = _split_list(args.audio) + _split_list(args.image) + [args.ontology]
    write_run_manifest(out, "combo-study", _echo_params(args), inputs)
    for row in study.rows:
        print(
            f"{row.kind:>14} {row.audio_model} x {row.image_model}: "
            f"a2i {row.ndcg_audio_to_image:.4f}, i2a {row.ndcg_image_to_audio:.4f}"
        )


def cmd_train_classifier(args) -> None:
    stores = [read_store(p) for p in _split_list(args.train)]
    classes = (
        tuple(_split_list(args.classes))
        if args.classes
        else experiments.derive_classes(stores)
    )
    X = np.vstack([np.asarray(s.matrix, dtype=np.float64) for s in stores])
    y = np.concatenate([experiments.class_indices(s, classes) for s in stores])
    model = forest.fit_forest(
        X, y, _forest_config(args), n_classes=len(classes), n_jobs=_resolve_threads(args)
    )
    model.class_names = classes
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    forest.save_forest(model, out / "forest.npz")
    write_run_manifest(out, "train-classifier", _echo_params(args), _split_list(args.train))
    print(f"fit {len(model.trees)} trees on {len(X)} rows -> {out / 'forest.npz'}")


def cmd_eval_classifier(args) -> None:
    model = forest.load_forest(args.model)
    store = read_store(args.test)
    classes = model.class_names or experiments.derive_classes([store])
    if len(classes) != model.n_classes:
        raise ConfigError(
            f"forest expects {model.n_classes} classes, got {len(classes)}"
        )
    report = forest.evaluate(
        model,
        np.asarray(store.matrix, dtype=np.float64),
        experiments.class_indices(store, tuple(classes)),
        tuple(classes),
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "report.csv")
    report.confusion_to_csv(out / "confusion.csv")
    write_run_manifest(out, "eval-classifier", _echo_params(args), [args.model, args.test])
    print(f"macro F1 {report.macro_f1:.4f} over {int(report.support.sum())} rows -> {out}")


def cmd_mix_curve(args) -> None:
    class_stores = {
        "audio": read_store(args.class_audio),
        "image": read_store(args.class_image),
    }
    model = translation.load_model(args.translation)
    pca_models = {
        "audio": pca.load_model(args.pca_audio),
        "image": pca.load_model(args.pca_image),
    }
    grid = (
        tuple(int(v) for v in _split_list(args.grid)) if args.grid else None
    )
    seeds = tuple(int(v) for v in _split_list(args.seeds))
    cfg = experiments.MixCurveConfig(
        source_modality="image" if args.target == "audio" else "audio",
        target_modality=args.target,
        mix_in_grid=grid,
        seeds=seeds,
        forest=forest.ForestConfig(n_trees=args.trees, max_depth=args.depth),
    )
    curve = experiments.run_mix_curve(class_stores, model, pca_models, cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curve.to_csv(out / "mix_curve.csv")
    inputs = [args.class_audio, args.class_image, args.translation, args.pca_audio, args.pca_image]
    write_run_manifest(out, "mix-curve", _echo_params(args), inputs)
    for p in curve.points:
        print(
            f"n={p.n_mixed:>6}: MMT {p.mmt_f1:.4f}, MMP {p.mmp_f1:.4f}, "
            f"SM-src {p.sm_source_f1:.4f}, SM-tgt {p.sm_target_f1:.4f}"
        )


def cmd_cluster_dist(args) -> None:
    audio = read_store(args.audio)
    image = read_store(args.image)
    matrix = experiments.run_cluster_distances(audio, image, sort=args.sort)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    matrix.to_csv(out / "cluster_distances.csv")
    write_run_manifest(out, "cluster-dist", _echo_params(args), [args.audio, args.image])
    print(
        f"{len(matrix.keys)} cells ({len(matrix.missing)} missing) -> "
        f"{out / 'cluster_distances.csv'}"
    )


def cmd_class_hist(args) -> None:
    store = read_store(args.store)
    ontology = load_ontology(args.ontology)
    hist = synth.class_histogram(store, ontology)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    synth.histogram_to_csv(hist, out / "class_histogram.csv")
    write_run_manifest(out, "class-hist", _echo_params(args), [args.store, args.ontology])
    for name, count in hist:
        print(f"{name}: {count}")


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------


def _add_common(p: _Parser, out_required: bool = True) -> None:
    p.add_argument("--seed", type=int, default=0, help="rng seed")
    p.add_argument("--out-dir", required=out_required, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="worker thread cap")
    p.add_argument("--config", default=None, help="JSON file with flag defaults")


def _add_train_flags(p: _Parser) -> None:
    p.add_argument("--batch-size", type=int, default=4096, help="training batch size")
    p.add_argument("--margin", type=float, default=1.0, help="contrastive margin")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate")
    p.add_argument("--patience", type=int, default=5, help="early-stopping patience (epochs)")
    p.add_argument("--max-epochs", type=int, default=200, help="epoch cap")
    p.add_argument("--val-fraction", type=float, default=0.1, help="held-out pair fraction")


def _add_relevance_flags(p: _Parser) -> None:
    p.add_argument("--k", type=int, default=30, help="retrieval depth")
    p.add_argument("--max-distance", type=int, default=21, help="relevance constant C")
    p.add_argument(
        "--exclude-labels",
        default=None,
        help="comma-separated excluded label ids (default: canonical top labels)",
    )


def build_parser() -> _Parser:
    parser = _Parser(
        prog="xmodal",
        description=__doc__,
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND")
    parser.subcommands = {}  # type: ignore[attr-defined]

    def add(name: str, func, help_text: str, out_required: bool = True) -> _Parser:
        p = sub.add_parser(
            name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        p.set_defaults(func=func)
        _add_common(p, out_required)
        parser.subcommands[name] = p  # type: ignore[attr-defined]
        return p

    p = add("synth", cmd_synth, "generate the synthetic oracle dataset")
    p.add_argument("--classes", type=int, default=18)
    p.add_argument("--latent-dim", type=int, default=32)
    p.add_argument("--audio-dim", type=int, default=1024)
    p.add_argument("--image-dim", type=int, default=2048)
    p.add_argument("--translation-per-class", type=int, default=112)
    p.add_argument("--crossmodal-per-class", type=int, default=28)
    p.add_argument("--class-train-per-class", type=int, default=100)
    p.add_argument("--class-test-per-class", type=int, default=20)
    p.add_argument("--latent-noise", type=float, default=0.1)
    p.add_argument("--audio-noise", type=float, default=0.05)
    p.add_argument("--image-noise", type=float, default=0.05)
    p.add_argument("--baseline-dim", type=int, default=512)
    p.add_argument("--baseline-alignment", type=float, default=0.7)
    p.add_argument("--baseline-noise", type=float, default=0.5)
    p.add_argument("--imbalance", default=None, help="per-class multipliers, comma-separated")

    p = add("validate-store", cmd_validate_store, "check a store directory", out_required=False)
    p.add_argument("--store", required=True)

    p = add("train-translation", cmd_train_translation, "train the two-tower translation")
    p.add_argument("--pairs", required=True, help="directory holding audio/ and image/ stores")
    _add_train_flags(p)

    p = add("fit-pca", cmd_fit_pca, "fit a PCA projector on one store")
    p.add_argument("--store", required=True)
    p.add_argument("--k", type=int, default=128)
    p.add_argument("--split", choices=["train", "val", "test", "all"], default="train")

    p = add("project", cmd_project, "project a store through a checkpoint")
    p.add_argument("--store", required=True)
    p.add_argument("--model", required=True, help=".xmtm or .xmpc checkpoint")

    p = add("retrieve-eval", cmd_retrieve_eval, "cross-modal NDCG over two stores")
    p.add_argument("--audio", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--ontology", required=True)
    _add_relevance_flags(p)

    p = add("combo-study", cmd_combo_study, "rank embedding-model combinations")
    p.add_argument("--audio", required=True, help="comma-separated store dirs")
    p.add_argument("--image", required=True, help="comma-separated store dirs")
    p.add_argument("--ontology", required=True)
    p.add_argument("--baseline-audio", default=None)
    p.add_argument("--baseline-image", default=None)
    _add_relevance_flags(p)
    _add_train_flags(p)

    p = add("train-classifier", cmd_train_classifier, "fit a random forest on projected stores")
    p.add_argument("--train", required=True, help="comma-separated store dirs")
    p.add_argument("--classes", default=None, help="comma-separated class labels")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depth", type=int, default=32)

    p = add("eval-classifier", cmd_eval_classifier, "score a forest on a projected store")
    p.add_argument("--model", required=True, help="forest.npz")
    p.add_argument("--test", required=True)

    p = add("mix-curve", cmd_mix_curve, "target-modality mix-in curves")
    p.add_argument("--class-audio", required=True)
    p.add_argument("--class-image", required=True)
    p.add_argument("--translation", required=True, help=".xmtm checkpoint")
    p.add_argument("--pca-audio", required=True, help=".xmpc checkpoint")
    p.add_argument("--pca-image", required=True, help=".xmpc checkpoint")
    p.add_argument("--target", choices=["audio", "image"], required=True)
    p.add_argument("--grid", default=None, help="comma-separated mix-in counts")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma-separated seeds")
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--depth", type=int, default=32)

    p = add("cluster-dist", cmd_cluster_dist, "inter-cluster centroid distances")
    p.add_argument("--audio", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--sort", choices=["modality", "class"], default="modality")

    p = add("class-hist", cmd_class_hist, "per-class sample histogram")
    p.add_argument("--store", required=True)
    p.add_argument("--ontology", required=True)

    return parser


def _apply_config_file(parser: _Parser, argv: list[str]) -> None:
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    with open(path, encoding="utf-8") as fh:
        overrides = json.load(fh)
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path}: config file must hold a JSON object")
    # defaults apply to whichever subparser defines the dest
    for sub in parser.subcommands.values():  # type: ignore[attr-defined]
        known = {a.dest for a in sub._actions}
        sub.set_defaults(**{k: v for k, v in overrides.items() if k in known})


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required", file=sys.stderr)
            return 1
        args.func(args)
        return 0
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except XmodalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
