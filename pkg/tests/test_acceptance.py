"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines as they
complete.  The synthetic-data criteria share one default-scale dataset and
one trained translation model (module-scoped fixtures); each test body is
timed against its stated budget.
"""

import math
import time

import numpy as np
import pytest

from xmodal import experiments as ex
from xmodal import forest as fo
from xmodal import pca, retrieval, synth
from xmodal import translation as tr
from xmodal.errors import CorruptStoreError, UnsupportedFormatError, ValidationError
from xmodal.ontology import RelevanceConfig, relevance
from xmodal.store import SampleMeta, read_store, write_store

# the default desk-scale dataset; translation trained with the paper's loss
# settings and a bounded epoch budget suited to the synthetic task's size
TRAIN_CFG = tr.TrainConfig(batch_size=256, max_epochs=20, rng_seed=0)
SEEDS = (0, 1, 2, 3, 4)


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def data():
    return synth.generate(synth.SynthConfig())


@pytest.fixture(scope="module")
def model(data):
    trained, _ = tr.train_translation(data.translation_pairs, TRAIN_CFG)
    return trained


@pytest.fixture(scope="module")
def pca_models(data):
    return {
        "audio": pca.fit_pca(
            np.asarray(data.class_audio.filter_split("train").matrix, np.float64), k=128
        ),
        "image": pca.fit_pca(
            np.asarray(data.class_image.filter_split("train").matrix, np.float64), k=128
        ),
    }


@pytest.fixture(scope="module")
def classes(data):
    return ex.derive_classes([data.class_audio])


@pytest.fixture(scope="module")
def relevance_cfg(data):
    return RelevanceConfig.default_for(data.ontology)


def _class_stores(data):
    return {"audio": data.class_audio, "image": data.class_image}


# -- 1. gradient oracle --------------------------------------------------------


def test_gradient_oracle():
    start = time.time()
    checked = 0
    worst = 0.0
    base_seed = 0
    while checked < 20:
        rng = np.random.default_rng(base_seed)
        base_seed += 1
        B = int(rng.integers(2, 6))  # B <= 5
        d = int(rng.integers(2, 9))  # in_dim <= 8
        A = rng.normal(size=(B, d))
        V = rng.normal(size=(B, d))
        margin = 1.0
        # central differences are invalid within h of a hinge kink; skip draws
        # whose off-diagonal distances graze the margin
        na = np.linalg.norm(A, axis=1)
        nv = np.linalg.norm(V, axis=1)
        D = 1.0 - (A @ V.T) / np.maximum(na[:, None] * nv[None, :], 1e-12)
        off = ~np.eye(B, dtype=bool)
        if np.abs(margin - D[off]).min() < 5e-3:
            continue
        _, dA, dV = tr.contrastive_batch_loss(A, V, margin)
        h = 1e-4
        for M, dM, other, is_a in ((A, dA, V, True), (V, dV, A, False)):
            fd = np.zeros_like(M)
            for idx in np.ndindex(*M.shape):
                up, down = M.copy(), M.copy()
                up[idx] += h
                down[idx] -= h
                if is_a:
                    lu = tr.contrastive_batch_loss(up, other, margin)[0]
                    ld = tr.contrastive_batch_loss(down, other, margin)[0]
                else:
                    lu = tr.contrastive_batch_loss(other, up, margin)[0]
                    ld = tr.contrastive_batch_loss(other, down, margin)[0]
                fd[idx] = (lu - ld) / (2 * h)
            err = np.linalg.norm(dM - fd) / max(np.linalg.norm(fd), 1e-12)
            worst = max(worst, err)
        checked += 1
    elapsed = time.time() - start
    report(
        "gradient-oracle",
        worst < 1e-4 and elapsed < 10.0,
        f"{checked} configs, worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


# -- 2. zero-shot analogue -------------------------------------------------------


def test_zero_shot_ratio(data, model, pca_models, classes):
    start = time.time()
    stores = _class_stores(data)
    projector = ex.make_pca_projector(pca_models)
    ratios = {}
    for src, tgt in (("audio", "image"), ("image", "audio")):
        mmt, sm = [], []
        for seed in SEEDS:
            cfg = fo.ForestConfig(rng_seed=seed)
            mmt.append(ex.zero_shot_f1(stores, model, src, tgt, cfg, classes))
            train = stores[tgt].filter_split("train")
            test = stores[tgt].filter_split("test")
            sm.append(
                ex._fit_eval_f1(
                    projector(train), ex.class_indices(train, classes),
                    projector(test), ex.class_indices(test, classes),
                    cfg, len(classes),
                )
            )
        ratios[(src, tgt)] = float(np.mean(mmt)) / float(np.mean(sm))
    elapsed = time.time() - start
    ok = all(r >= 0.7 for r in ratios.values()) and elapsed < 300.0
    detail = ", ".join(f"{s}->{t}: {r:.3f}" for (s, t), r in ratios.items())
    report("zero-shot-ratio", ok, f"{detail}, {elapsed:.0f}s")


# -- 3. retrieval ordering --------------------------------------------------------


def test_retrieval_ordering(data, model, relevance_cfg):
    start = time.time()
    projector = ex.make_translation_projector(model)
    trans_a = ex.projected_store(data.crossmodal_pairs.audio_store, projector, "t")
    trans_v = ex.projected_store(data.crossmodal_pairs.image_store, projector, "t")
    t_a2i, t_i2a = retrieval.cross_modal_eval(
        trans_a, trans_v, data.ontology, relevance_cfg
    )
    b_a2i, b_i2a = retrieval.cross_modal_eval(
        data.crossmodal_baseline_pairs.audio_store,
        data.crossmodal_baseline_pairs.image_store,
        data.ontology,
        relevance_cfg,
    )
    r_a2i = retrieval.random_ranking_eval(
        trans_a, trans_v, "audio->image", data.ontology, relevance_cfg, seed=0
    )
    r_i2a = retrieval.random_ranking_eval(
        trans_v, trans_a, "image->audio", data.ontology, relevance_cfg, seed=1
    )
    elapsed = time.time() - start
    gaps = [
        t_a2i.mean_ndcg - b_a2i.mean_ndcg,
        t_i2a.mean_ndcg - b_i2a.mean_ndcg,
        b_a2i.mean_ndcg - r_a2i.mean_ndcg,
        b_i2a.mean_ndcg - r_i2a.mean_ndcg,
    ]
    ok = all(g >= 0.05 for g in gaps) and elapsed < 120.0
    report(
        "retrieval-ordering",
        ok,
        f"translated {t_a2i.mean_ndcg:.3f}/{t_i2a.mean_ndcg:.3f} > "
        f"baseline {b_a2i.mean_ndcg:.3f}/{b_i2a.mean_ndcg:.3f} > "
        f"random {r_a2i.mean_ndcg:.3f}/{r_i2a.mean_ndcg:.3f}, {elapsed:.0f}s",
    )


# -- 4. mix-curve analogue ---------------------------------------------------------


def test_mix_curve_shape(data, model, pca_models, classes):
    stores = _class_stores(data)
    n_target = stores["image"].filter_split("train").count
    cfg = ex.MixCurveConfig(
        source_modality="audio",
        target_modality="image",
        mix_in_grid=ex.default_grid(n_target, len(classes), steps=5),
        seeds=(0, 1, 2),
        forest=fo.ForestConfig(),
    )
    curve = ex.run_mix_curve(stores, model, pca_models, cfg, classes)
    first, last = curve.points[0], curve.points[-1]
    zero_gap = first.mmt_f1 - first.mmp_f1
    end_gap = abs(last.mmp_f1 - last.sm_target_f1)
    mmt = [p.mmt_f1 for p in curve.points]
    monotone = all(b >= a - 0.02 for a, b in zip(mmt, mmt[1:]))
    ok = zero_gap >= 0.2 and end_gap <= 0.05 and monotone
    report(
        "mix-curve-shape",
        ok,
        f"MMT0-MMP0 {zero_gap:.3f}, |MMP(full)-SMtgt| {end_gap:.3f}, "
        f"monotone {monotone}",
    )


# -- 5. cluster structure -----------------------------------------------------------


def test_cluster_structure(data, model):
    projector = ex.make_translation_projector(model)
    audio = ex.projected_store(data.class_audio.filter_split("test"), projector, "t")
    image = ex.projected_store(data.class_image.filter_split("test"), projector, "t")
    matrix = ex.run_cluster_distances(audio, image, sort="class")
    v = matrix.values
    symmetric = bool(np.abs(v - v.T).max() < 1e-6)
    zero_diag = bool(np.abs(np.diag(v)).max() < 1e-6)
    within, cross = [], []
    for i, (mi, ci) in enumerate(matrix.keys):
        for j, (mj, cj) in enumerate(matrix.keys):
            if j <= i:
                continue
            if ci == cj and mi != mj:
                within.append(v[i, j])
            elif ci != cj:
                cross.append(v[i, j])
    separated = float(np.mean(within)) < float(np.mean(cross))
    report(
        "cluster-structure",
        symmetric and zero_diag and separated,
        f"within {np.mean(within):.4f} < cross {np.mean(cross):.4f}, "
        f"symmetric {symmetric}, zero-diag {zero_diag}",
    )


# -- 6. NDCG unit suite ---------------------------------------------------------------


def test_ndcg_units():
    ideal = retrieval.ndcg_at_k([21, 19, 17], [17, 19, 21], k=3)
    exact_one = ideal == 1.0
    skipped = retrieval.ndcg_at_k([0, 0], [0, 0, 0], k=2) is None
    got = retrieval.ndcg_at_k([2, 3], [3, 2], k=2)
    want = (2.0 + 3.0 / math.log2(3)) / (3.0 + 2.0 / math.log2(3))
    hand = abs(got - want) < 1e-12
    ontology = synth.build_toy_ontology(synth.SynthConfig().class_names())
    cfg = RelevanceConfig.default_for(ontology)
    rel = relevance({"guitar"}, {"guitar"}, ontology, cfg)
    report(
        "ndcg-units",
        exact_one and skipped and hand and rel == 21,
        f"ideal=1 {exact_one}, skipped {skipped}, hand-case {hand}, r(identical)={rel}",
    )


# -- 7. PCA oracle -----------------------------------------------------------------


def test_pca_oracle():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(5):
        X = rng.normal(size=(50, 10)) * rng.uniform(0.5, 3.0)
        model = pca.fit_pca(X, k=6)
        Xc = X - X.mean(axis=0)
        vals, vecs = np.linalg.eigh(Xc.T @ Xc / (len(X) - 1))
        order = np.argsort(vals)[::-1][:6]
        want = vecs[:, order].T.copy()
        for row in want:
            if row[np.argmax(np.abs(row))] < 0:
                row *= -1.0
        worst = max(worst, float(np.abs(model.components - want).max()))

    factors = rng.normal(size=(40, 4))
    basis = rng.normal(size=(4, 12))
    X = factors @ basis
    model = pca.fit_pca(X, k=4)
    P = pca.project(model, X)
    orig = np.linalg.norm(X[:, None] - X[None, :], axis=2)
    proj = np.linalg.norm(P[:, None] - P[None, :], axis=2)
    iso_err = float(np.abs(orig - proj).max())
    report(
        "pca-oracle",
        worst < 1e-6 and iso_err < 1e-4,
        f"eig mismatch {worst:.2e}, isometry err {iso_err:.2e}",
    )


# -- 8. forest determinism + sanity ---------------------------------------------------


def test_forest_determinism_and_sanity():
    rng = np.random.default_rng(5)
    centers = rng.normal(size=(18, 128)) * 0.6
    y = np.repeat(np.arange(18), 60)
    X = centers[y] + 0.1 * rng.normal(size=(len(y), 128))
    yt = np.repeat(np.arange(18), 15)
    Xt = centers[yt] + 0.1 * rng.normal(size=(len(yt), 128))

    cfg = fo.ForestConfig(rng_seed=3)
    f1 = fo.fit_forest(X, y, cfg)
    f2 = fo.fit_forest(X, y, cfg)
    r1 = fo.evaluate(f1, Xt, yt)
    r2 = fo.evaluate(f2, Xt, yt)
    deterministic = bool(
        np.array_equal(r1.confusion, r2.confusion) and r1.macro_f1 == r2.macro_f1
    )
    easy_f1 = r1.macro_f1

    Xr = rng.normal(size=(540, 128))
    yr = rng.integers(0, 18, size=540)
    fr = fo.fit_forest(Xr, yr, fo.ForestConfig(n_trees=50, rng_seed=0), n_classes=18)
    chance_f1 = fo.evaluate(
        fr, rng.normal(size=(360, 128)), rng.integers(0, 18, size=360)
    ).macro_f1
    report(
        "forest-determinism-sanity",
        deterministic and easy_f1 >= 0.95 and chance_f1 <= 0.15,
        f"deterministic {deterministic}, easy F1 {easy_f1:.3f}, "
        f"random-label F1 {chance_f1:.3f}",
    )


# -- 9. format round-trip ---------------------------------------------------------------


def test_format_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    n = 1000
    metas = [
        SampleMeta(
            sample_id=f"s{i}",
            clip_id=f"c{i}",
            modality="audio" if i % 2 else "image",
            labels=(f"label{i % 7}",),
            split=("train", "val", "test")[i % 3],
            embedding_model="rt-model",
        )
        for i in range(n)
    ]
    matrix = (rng.normal(size=(n, 64)) * 100).astype(np.float32)
    write_store(metas, matrix, tmp_path / "rt")
    back = read_store(tmp_path / "rt")
    bitwise = (
        back.matrix.tobytes() == matrix.tobytes() and back.metas == tuple(metas)
    )

    blob = (tmp_path / "rt" / "embeddings.xmeb").read_bytes()
    (tmp_path / "rt" / "embeddings.xmeb").write_bytes(b"ZZZZ" + blob[4:])
    try:
        read_store(tmp_path / "rt")
        magic_ok = False
    except UnsupportedFormatError:
        magic_ok = True

    (tmp_path / "rt" / "embeddings.xmeb").write_bytes(blob[:-8])
    try:
        read_store(tmp_path / "rt")
        trunc_ok = False
    except CorruptStoreError:
        trunc_ok = True

    (tmp_path / "rt" / "embeddings.xmeb").write_bytes(blob)
    bad = matrix.copy()
    bad[0, 0] = np.nan
    try:
        write_store(metas, bad, tmp_path / "rt2")
        nan_ok = False
    except ValidationError:
        nan_ok = True

    report(
        "format-round-trip",
        bitwise and magic_ok and trunc_ok and nan_ok,
        f"bitwise {bitwise}, magic {magic_ok}, truncation {trunc_ok}, nan {nan_ok}",
    )
