#!/usr/bin/env python3
"""End-to-end desk-scale study: generate the synthetic dataset, train the
translation, then produce every experiment CSV under one run directory.

    python3 scripts/run_desk_study.py --out runs/desk --seed 0

Pass --quick for a six-class miniature that finishes in under a minute.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from xmodal import experiments as ex
from xmodal import forest as fo
from xmodal import pca, retrieval, synth
from xmodal import translation as tr
from xmodal.ontology import RelevanceConfig
from xmodal.runmeta import write_run_manifest


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/desk", help="run directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--quick", action="store_true", help="six-class miniature")
    parser.add_argument("--seeds", type=int, default=3, help="classifier seeds per point")
    return parser.parse_args()


def main():
    args = parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()

    if args.quick:
        cfg = synth.SynthConfig(
            n_classes=6, latent_dim=8, audio_dim=64, image_dim=96, baseline_dim=32,
            translation_per_class=40, crossmodal_per_class=12,
            class_train_per_class=30, class_test_per_class=8, rng_seed=args.seed,
        )
        train_cfg = tr.TrainConfig(batch_size=64, max_epochs=15, rng_seed=args.seed)
        forest_cfg = fo.ForestConfig(n_trees=30, rng_seed=args.seed)
    else:
        cfg = synth.SynthConfig(rng_seed=args.seed)
        train_cfg = tr.TrainConfig(batch_size=256, max_epochs=20, rng_seed=args.seed)
        forest_cfg = fo.ForestConfig(rng_seed=args.seed)

    print(f"[{time.time()-t0:6.1f}s] generating synthetic dataset ...")
    data = synth.generate(cfg)
    synth.write_synth_dirs(data, out / "data")
    rel_cfg = RelevanceConfig.default_for(data.ontology)
    classes = ex.derive_classes([data.class_audio])

    print(f"[{time.time()-t0:6.1f}s] training translation ...")
    model, history = tr.train_translation(data.translation_pairs, train_cfg)
    tr.save_model(model, out / "model.xmtm")
    history.to_csv(out / "history.csv")

    print(f"[{time.time()-t0:6.1f}s] fitting PCA projectors ...")
    k = min(128, data.class_audio.dim, data.class_image.dim)
    pca_models = {
        m: pca.fit_pca(np.asarray(s.filter_split("train").matrix, np.float64), k=k)
        for m, s in (("audio", data.class_audio), ("image", data.class_image))
    }
    for modality, pm in pca_models.items():
        pca.save_model(pm, out / f"pca-{modality}.xmpc")

    print(f"[{time.time()-t0:6.1f}s] combination study ...")
    study = ex.run_combination_study(
        [data.combined_audio()], [data.combined_image()], data.ontology, rel_cfg,
        train_cfg=train_cfg,
        baseline_pair=(
            data.crossmodal_baseline_pairs.audio_store,
            data.crossmodal_baseline_pairs.image_store,
        ),
        random_seed=args.seed,
    )
    study.to_csv(out / "combo_study.csv")

    print(f"[{time.time()-t0:6.1f}s] retrieval report ...")
    projector = ex.make_translation_projector(model)
    trans_a = ex.projected_store(data.crossmodal_pairs.audio_store, projector, "translated")
    trans_v = ex.projected_store(data.crossmodal_pairs.image_store, projector, "translated")
    reports = retrieval.cross_modal_eval(trans_a, trans_v, data.ontology, rel_cfg)
    retrieval.reports_to_csv(list(reports), out / "retrieval.csv")

    stores = {"audio": data.class_audio, "image": data.class_image}
    for target in ("image", "audio"):
        print(f"[{time.time()-t0:6.1f}s] mix-in curve (target={target}) ...")
        curve = ex.run_mix_curve(
            stores, model, pca_models,
            ex.MixCurveConfig(
                source_modality="audio" if target == "image" else "image",
                target_modality=target,
                seeds=tuple(range(args.seeds)),
                forest=forest_cfg,
            ),
            classes,
        )
        curve.to_csv(out / f"mix_curve_target_{target}.csv")

    print(f"[{time.time()-t0:6.1f}s] cluster distances ...")
    proj_test_a = ex.projected_store(data.class_audio.filter_split("test"), projector, "translated")
    proj_test_v = ex.projected_store(data.class_image.filter_split("test"), projector, "translated")
    pca_proj = ex.make_pca_projector(pca_models)
    pca_test_a = ex.projected_store(data.class_audio.filter_split("test"), pca_proj, "pca")
    pca_test_v = ex.projected_store(data.class_image.filter_split("test"), pca_proj, "pca")
    ex.run_cluster_distances(pca_test_a, pca_test_v, sort="modality").to_csv(
        out / "cluster_pca_by_modality.csv"
    )
    ex.run_cluster_distances(proj_test_a, proj_test_v, sort="class").to_csv(
        out / "cluster_translated_by_class.csv"
    )

    print(f"[{time.time()-t0:6.1f}s] classification report (both modalities) ...")
    report, _ = ex.run_classification_report(
        [data.class_audio.filter_split("train"), data.class_image.filter_split("train")],
        data.class_image.filter_split("test"),
        projector,
        forest_cfg=forest_cfg,
        classes=classes,
    )
    report.to_csv(out / "per_class_f1.csv")
    report.confusion_to_csv(out / "confusion.csv")

    print(f"[{time.time()-t0:6.1f}s] class histogram ...")
    synth.histogram_to_csv(
        synth.class_histogram(data.translation_pairs.audio_store, data.ontology),
        out / "class_histogram.csv",
    )

    write_run_manifest(
        out, "run_desk_study",
        {"seed": args.seed, "quick": args.quick, "seeds": args.seeds},
        [out / "data"],
    )
    print(f"[{time.time()-t0:6.1f}s] done -> {out}")


if __name__ == "__main__":
    main()
