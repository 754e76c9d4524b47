"""Taxonomy graph over class labels: hop distances and retrieval relevance.

The on-disk format mirrors the public AudioSet ontology: a JSON array of
``{"id": ..., "name": ..., "child_ids": [...]}`` objects.  Child pointers
are treated as undirected edges for distance queries.

Relevance between two label sets is ``r = C - d`` with ``C`` the maximum
distance (default 21) and ``d`` the smallest hop distance over all label
pairs.  Generic top labels ("Music", "Musical instrument", "Tools",
"Singing") are excluded by default: they are dropped from both label sets
and paths may not run through them, otherwise every pair would sit two
hops apart via the shared hub.
"""

from __future__ import annotations

import json
import math
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

from .errors import OntologyError

#: Names whose ids are excluded from relevance unless overridden.
DEFAULT_EXCLUDED_NAMES = ("Music", "Musical instrument", "Tools", "Singing")

DEFAULT_MAX_DISTANCE = 21


@dataclass(frozen=True)
class OntologyNode:
    id: str
    name: str
    child_ids: tuple[str, ...]


class Ontology:
    """Immutable label graph; distance queries are memoized and thread-safe."""

    def __init__(self, nodes: list[OntologyNode]):
        self.nodes: dict[str, OntologyNode] = {}
        self.by_name: dict[str, str] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise OntologyError(f"duplicate ontology id {node.id!r}")
            self.nodes[node.id] = node
            self.by_name.setdefault(node.name, node.id)
        self.adjacency: dict[str, set[str]] = {nid: set() for nid in self.nodes}
        for node in nodes:
            for child in node.child_ids:
                if child not in self.nodes:
                    raise OntologyError(
                        f"node {node.id!r} references unknown child {child!r}"
                    )
                if child == node.id:
                    raise OntologyError(f"node {node.id!r} lists itself as a child")
                self.adjacency[node.id].add(child)
                self.adjacency[child].add(node.id)
        self._cache: dict[tuple, float] = {}
        self._lock = threading.Lock()

    def __contains__(self, label_id: str) -> bool:
        return label_id in self.nodes

    def require(self, label_id: str) -> OntologyNode:
        node = self.nodes.get(label_id)
        if node is None:
            raise OntologyError(f"unknown label id {label_id!r}")
        return node

    def id_for_name(self, name: str) -> str:
        nid = self.by_name.get(name)
        if nid is None:
            raise OntologyError(f"unknown label name {name!r}")
        return nid

    def degree(self, label_id: str) -> int:
        self.require(label_id)
        return len(self.adjacency[label_id])

    def leaf_ids(self) -> list[str]:
        return [nid for nid, node in self.nodes.items() if not node.child_ids]

    def distance(self, label_a: str, label_b: str, excluded: frozenset[str] = frozenset()) -> float:
        """Shortest undirected hop count avoiding excluded nodes; inf if cut off.

        Endpoints must exist and must not themselves be excluded.
        """
        self.require(label_a)
        self.require(label_b)
        if label_a in excluded or label_b in excluded:
            raise OntologyError("distance endpoint is an excluded label")
        if label_a == label_b:
            return 0
        key = (min(label_a, label_b), max(label_a, label_b), excluded)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        dist = self._bfs(label_a, label_b, excluded)
        with self._lock:
            self._cache[key] = dist
        return dist

    def _bfs(self, src: str, dst: str, excluded: frozenset[str]) -> float:
        seen = {src}
        queue = deque([(src, 0)])
        while queue:
            node, hops = queue.popleft()
            for nxt in self.adjacency[node]:
                if nxt in excluded or nxt in seen:
                    continue
                if nxt == dst:
                    return hops + 1
                seen.add(nxt)
                queue.append((nxt, hops + 1))
        return math.inf


@dataclass(frozen=True)
class RelevanceConfig:
    """Maximum distance C plus the label ids ignored during scoring."""

    max_distance: int = DEFAULT_MAX_DISTANCE
    excluded_labels: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.max_distance < 1:
            raise OntologyError(f"max_distance must be >= 1, got {self.max_distance}")
        object.__setattr__(self, "excluded_labels", frozenset(self.excluded_labels))

    @classmethod
    def default_for(cls, ontology: Ontology, max_distance: int = DEFAULT_MAX_DISTANCE) -> "RelevanceConfig":
        """Exclude whichever of the canonical top labels the graph contains."""
        ids = frozenset(
            ontology.by_name[name]
            for name in DEFAULT_EXCLUDED_NAMES
            if name in ontology.by_name
        )
        return cls(max_distance=max_distance, excluded_labels=ids)


def load_ontology(path: str | Path) -> Ontology:
    """Load a JSON array of ``{id, name, child_ids}`` node objects."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise OntologyError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise OntologyError(f"{path}: expected a JSON array of node objects")
    nodes = []
    for obj in data:
        try:
            nodes.append(
                OntologyNode(
                    id=obj["id"], name=obj["name"], child_ids=tuple(obj["child_ids"])
                )
            )
        except (KeyError, TypeError) as exc:
            raise OntologyError(f"{path}: node object missing id/name/child_ids") from exc
    return Ontology(nodes)


def save_ontology(ontology: Ontology, path: str | Path) -> None:
    data = [
        {"id": n.id, "name": n.name, "child_ids": list(n.child_ids)}
        for n in ontology.nodes.values()
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, ensure_ascii=False)
        fh.write("\n")


def relevance(
    labels_q: set[str] | frozenset[str],
    labels_c: set[str] | frozenset[str],
    ontology: Ontology,
    cfg: RelevanceConfig,
) -> int:
    """Relevance r = C - d between two label sets, clamped to [0, C].

    Excluded labels are dropped from both sets and barred from paths; if
    either set empties out the relevance is 0.  d is the minimum pairwise
    hop distance; anything beyond C (including disconnection) clamps to 0.
    """
    if not labels_q or not labels_c:
        raise OntologyError("relevance requires non-empty label sets")
    q = [l for l in labels_q if l not in cfg.excluded_labels]
    c = [l for l in labels_c if l not in cfg.excluded_labels]
    if not q or not c:
        return 0
    best = math.inf
    for lq in q:
        for lc in c:
            d = ontology.distance(lq, lc, cfg.excluded_labels)
            if d < best:
                best = d
                if best == 0:
                    break
        if best == 0:
            break
    capped = min(best, cfg.max_distance)
    return int(max(0, cfg.max_distance - capped))
