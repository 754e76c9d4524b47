"""Modality-agnostic embeddings toolkit.

Translates pre-trained audio and image embeddings into a shared 128-d
space with self-supervised contrastive training, evaluates the joint space
with ontology-aware cross-modal retrieval (NDCG@30), and feeds it to
random-forest instrument classifiers that accept either modality.
"""

from .forest import INSTRUMENT_CLASSES, ForestConfig, RandomForest, evaluate, fit_forest
from .ontology import Ontology, RelevanceConfig, load_ontology, relevance
from .pca import PcaModel, fit_pca, project
from .retrieval import cross_modal_eval, ndcg_at_k, retrieve_top_k
from .store import (
    EmbeddingStore,
    PairedDataset,
    SampleMeta,
    pair_by_clip,
    read_store,
    write_store,
)
from .synth import SynthConfig, SynthData, generate
from .translation import (
    TrainConfig,
    TranslationModel,
    contrastive_batch_loss,
    cosine_distance,
    tower_forward,
    train_translation,
    translate,
)

__version__ = "0.1.0"

__all__ = [
    "EmbeddingStore",
    "ForestConfig",
    "INSTRUMENT_CLASSES",
    "Ontology",
    "PairedDataset",
    "PcaModel",
    "RandomForest",
    "RelevanceConfig",
    "SampleMeta",
    "SynthConfig",
    "SynthData",
    "TrainConfig",
    "TranslationModel",
    "contrastive_batch_loss",
    "cosine_distance",
    "cross_modal_eval",
    "evaluate",
    "fit_forest",
    "fit_pca",
    "generate",
    "load_ontology",
    "ndcg_at_k",
    "pair_by_clip",
    "project",
    "read_store",
    "relevance",
    "retrieve_top_k",
    "tower_forward",
    "train_translation",
    "translate",
    "write_store",
]
