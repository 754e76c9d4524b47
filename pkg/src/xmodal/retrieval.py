"""Cross-modal nearest-neighbor retrieval and NDCG@k scoring.

Queries and candidates are compared by cosine distance (matching the
training loss).  NDCG uses linear gain rel/log2(rank+1); the ideal DCG is
computed over the entire candidate pool, and queries whose pool carries no
relevance at all (IDCG = 0) are skipped rather than scored 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .ontology import Ontology, RelevanceConfig, relevance
from .store import EmbeddingStore

DEFAULT_K = 30


def retrieve_top_k(
    query: np.ndarray, candidates: np.ndarray, k: int = DEFAULT_K
) -> tuple[np.ndarray, np.ndarray]:
    """Indices and cosine distances of the k nearest candidates.

    Ties break toward the lower candidate index; k is clamped to the pool.
    """
    query = np.asarray(query, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.float64)
    if candidates.ndim != 2 or query.shape != (candidates.shape[1],):
        raise ValidationError(
            f"query {query.shape} does not match candidates {candidates.shape}"
        )
    dist = _cosine_distances(query[None, :], candidates)[0]
    order = np.argsort(dist, kind="stable")[: min(k, len(dist))]
    return order, dist[order]


def _cosine_distances(queries: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    qn = np.linalg.norm(queries, axis=1, keepdims=True)
    cn = np.linalg.norm(candidates, axis=1, keepdims=True)
    q = queries / np.maximum(qn, 1e-12)
    c = candidates / np.maximum(cn, 1e-12)
    return 1.0 - q @ c.T


def ndcg_at_k(
    ranked_relevances: list[int] | np.ndarray,
    ideal_pool: list[int] | np.ndarray,
    k: int = DEFAULT_K,
) -> float | None:
    """DCG(ranked) / DCG(k best of pool); None marks a skipped query."""
    ranked = np.asarray(ranked_relevances, dtype=np.float64)[:k]
    pool = np.asarray(ideal_pool, dtype=np.float64)
    if (ranked < 0).any() or (pool < 0).any():
        raise ValidationError("relevances must be non-negative")
    ideal = np.sort(pool)[::-1][:k]
    idcg = _dcg(ideal)
    if idcg == 0.0:
        return None
    return _dcg(ranked) / idcg


def _dcg(rels: np.ndarray) -> float:
    if len(rels) == 0:
        return 0.0
    ranks = np.arange(1, len(rels) + 1, dtype=np.float64)
    return float(np.sum(rels / np.log2(ranks + 1)))


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    ndcg: float | None  # None == skipped (IDCG 0)

    @property
    def skipped(self) -> bool:
        return self.ndcg is None


@dataclass(frozen=True)
class NdcgReport:
    direction: str  # "audio->image" | "image->audio"
    results: tuple[QueryResult, ...]
    k: int

    @property
    def skipped_count(self) -> int:
        return sum(1 for r in self.results if r.skipped)

    @property
    def mean_ndcg(self) -> float:
        scores = [r.ndcg for r in self.results if r.ndcg is not None]
        if not scores:
            return float("nan")
        return float(np.mean(scores))


def cross_modal_eval(
    audio_store: EmbeddingStore,
    image_store: EmbeddingStore,
    ontology: Ontology,
    cfg: RelevanceConfig,
    k: int = DEFAULT_K,
) -> tuple[NdcgReport, NdcgReport]:
    """NDCG@k for audio->image and image->audio over the full pools."""
    if audio_store.dim != image_store.dim:
        raise ValidationError(
            f"stores disagree on dimension: {audio_store.dim} vs {image_store.dim}"
        )
    a2i = _eval_direction(audio_store, image_store, "audio->image", ontology, cfg, k)
    i2a = _eval_direction(image_store, audio_store, "image->audio", ontology, cfg, k)
    return a2i, i2a


def _relevance_matrix(
    queries: EmbeddingStore, pool: EmbeddingStore, ontology: Ontology, cfg: RelevanceConfig
) -> np.ndarray:
    """Pairwise relevance of every query against every pool candidate."""
    cache: dict[frozenset, int] = {}
    q_sets = [frozenset(m.labels) for m in queries.metas]
    c_sets = [frozenset(m.labels) for m in pool.metas]
    out = np.zeros((len(q_sets), len(c_sets)), dtype=np.int64)
    for i, qs in enumerate(q_sets):
        for j, cs in enumerate(c_sets):
            key = frozenset((qs, cs))  # relevance is symmetric
            val = cache.get(key)
            if val is None:
                val = relevance(qs, cs, ontology, cfg)
                cache[key] = val
            out[i, j] = val
    return out


def _eval_direction(
    source: EmbeddingStore,
    target: EmbeddingStore,
    direction: str,
    ontology: Ontology,
    cfg: RelevanceConfig,
    k: int,
) -> NdcgReport:
    rel = _relevance_matrix(source, target, ontology, cfg)
    dists = _cosine_distances(
        source.matrix.astype(np.float64), target.matrix.astype(np.float64)
    )
    results = []
    for i, meta in enumerate(source.metas):
        order = np.argsort(dists[i], kind="stable")[: min(k, dists.shape[1])]
        score = ndcg_at_k(rel[i, order], rel[i], k)
        results.append(QueryResult(meta.sample_id, score))
    return NdcgReport(direction, tuple(results), k)


def random_ranking_eval(
    source: EmbeddingStore,
    target: EmbeddingStore,
    direction: str,
    ontology: Ontology,
    cfg: RelevanceConfig,
    k: int = DEFAULT_K,
    seed: int = 0,
) -> NdcgReport:
    """Baseline: rank the pool by a seeded shuffle instead of by distance."""
    rng = np.random.default_rng(seed)
    rel = _relevance_matrix(source, target, ontology, cfg)
    results = []
    for i, meta in enumerate(source.metas):
        order = rng.permutation(rel.shape[1])[: min(k, rel.shape[1])]
        score = ndcg_at_k(rel[i, order], rel[i], k)
        results.append(QueryResult(meta.sample_id, score))
    return NdcgReport(direction, tuple(results), k)


def reports_to_csv(reports: list[NdcgReport], path: str | Path) -> None:
    """Per-query rows plus one MEAN summary row per direction."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("direction,query_id,ndcg,skipped\n")
        for report in reports:
            for r in report.results:
                ndcg = "" if r.ndcg is None else repr(r.ndcg)
                fh.write(f"{report.direction},{r.query_id},{ndcg},{int(r.skipped)}\n")
        for report in reports:
            fh.write(
                f"{report.direction},MEAN,{report.mean_ndcg!r},{report.skipped_count}\n"
            )
