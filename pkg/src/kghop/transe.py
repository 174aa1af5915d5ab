"""Translational embedding pretraining over the augmented edge set.

Inverse relations and `Equal` are trained as ordinary relations; `Equal`
positives are the self-loops. Negative sampling corrupts head or tail with
probability 0.5 and rejects corruptions that form a known-true edge.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .arrayio import load_container, save_container
from .errors import ConfigError, ParseError, VocabMismatchError

logger = logging.getLogger(__name__)


@dataclass
class TransEConfig:
    dim_entity: int = 200
    dim_relation: int = 200
    margin: float = 1.0
    learning_rate: float = 0.01
    epochs: int = 100
    negatives_per_positive: int = 1
    norm_order: int = 2
    seed: int = 0
    random_init: bool = False  # skip training, emit Gaussian(0, 0.02) tables

    def validate(self):
        if self.dim_entity <= 0 or self.dim_relation <= 0:
            raise ConfigError("embedding dims must be positive")
        if self.dim_entity != self.dim_relation:
            raise ConfigError("entity and relation dims must match (rows are [r ; v] pairs)")
        if self.margin <= 0:
            raise ConfigError("margin must be > 0")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.norm_order not in (1, 2):
            raise ConfigError("norm_order must be 1 or 2")
        if self.negatives_per_positive < 1:
            raise ConfigError("negatives_per_positive must be >= 1")


@dataclass
class EmbeddingTable:
    entity_vectors: np.ndarray  # (entity_count, d_e) float32
    relation_vectors: np.ndarray  # (relation_count, d_r) float32
    vocab_hash: str = ""
    training_losses: list = None  # per-epoch mean hinge loss, None if untrained

    @property
    def dim_entity(self):
        return self.entity_vectors.shape[1]

    @property
    def dim_relation(self):
        return self.relation_vectors.shape[1]


def score(table, heads, rels, tails, norm_order=2):
    """Translation distance ||v_h + v_r - v_t||; lower is more plausible."""
    diff = (table.entity_vectors[heads].astype(np.float64)
            + table.relation_vectors[rels]
            - table.entity_vectors[tails])
    if norm_order == 1:
        return np.abs(diff).sum(axis=-1)
    return np.sqrt((diff * diff).sum(axis=-1))


def _init_tables(graph, cfg, rng):
    if cfg.random_init:
        ent = rng.normal(0.0, 0.02, size=(graph.entity_count, cfg.dim_entity))
        rel = rng.normal(0.0, 0.02, size=(graph.relation_count, cfg.dim_relation))
        return ent.astype(np.float32), rel.astype(np.float32)
    bound = 6.0 / np.sqrt(cfg.dim_entity)
    ent = rng.uniform(-bound, bound, size=(graph.entity_count, cfg.dim_entity))
    rel = rng.uniform(-bound, bound, size=(graph.relation_count, cfg.dim_relation))
    norms = np.linalg.norm(rel, axis=1, keepdims=True)
    rel = np.divide(rel, norms, out=rel, where=norms > 0)
    return ent.astype(np.float32), rel.astype(np.float32)


def _project_entities(ent):
    # Renormalize to the unit ball (norm <= 1) after each epoch.
    norms = np.linalg.norm(ent.astype(np.float64), axis=1)
    over = norms > 1.0
    if over.any():
        ent[over] = (ent[over] / norms[over, None]).astype(np.float32)


def train(graph, cfg):
    """Margin-ranking SGD; seeded-deterministic in single-threaded mode."""
    cfg.validate()
    if graph.entity_count == 0:
        raise ConfigError("cannot pretrain an empty graph")
    rng = np.random.default_rng(cfg.seed)
    ent, rel = _init_tables(graph, cfg, rng)
    table = EmbeddingTable(ent, rel, vocab_hash=graph.vocab_hash())
    if cfg.random_init or cfg.epochs == 0:
        return table

    heads, rels, tails = graph.all_edge_triples()
    true_keys = graph.edge_keys()
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(heads))
        epoch_seed = int(rng.integers(0, 2 ** 63, dtype=np.int64))
        loss = kernels.transe_sgd_epoch(
            ent, rel, heads[order], rels[order], tails[order], true_keys,
            graph.entity_count, cfg.margin, cfg.learning_rate,
            cfg.norm_order, cfg.negatives_per_positive, epoch_seed,
        )
        _project_entities(ent)
        losses.append(loss)
        if (epoch + 1) % 50 == 0 or epoch == cfg.epochs - 1:
            logger.info("transe epoch %d/%d mean loss %.5f", epoch + 1, cfg.epochs, loss)
    table.training_losses = losses
    return table


def save_embeddings(table, path):
    meta = {
        "format": "kghop-embeddings",
        "d_e": table.dim_entity,
        "d_r": table.dim_relation,
        "entity_count": int(table.entity_vectors.shape[0]),
        "relation_count": int(table.relation_vectors.shape[0]),
        "vocab_hash": table.vocab_hash,
    }
    save_container(path, meta, {
        "entity_vectors": table.entity_vectors.astype(np.float32),
        "relation_vectors": table.relation_vectors.astype(np.float32),
    })


def load_embeddings(path, graph=None):
    """Round-trips bit-exactly; refuses tables built for a different vocab."""
    meta, arrays = load_container(path)
    if meta.get("format") != "kghop-embeddings":
        raise ParseError(f"{path}: not an embedding file")
    table = EmbeddingTable(arrays["entity_vectors"], arrays["relation_vectors"],
                           vocab_hash=meta["vocab_hash"])
    if table.entity_vectors.shape != (meta["entity_count"], meta["d_e"]):
        raise ParseError(f"{path}: entity table shape does not match header")
    if table.relation_vectors.shape != (meta["relation_count"], meta["d_r"]):
        raise ParseError(f"{path}: relation table shape does not match header")
    if graph is not None and graph.vocab_hash() != table.vocab_hash:
        raise VocabMismatchError(
            f"{path}: embeddings were trained for a different graph vocabulary")
    return table
