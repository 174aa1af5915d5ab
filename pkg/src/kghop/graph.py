"""Immutable triple store with inverse relations and the `Equal` stop edge.

Loading a TSV of (head, relation, tail) triples materializes, for every base
relation r, an inverse relation named "~r", and gives every entity a
(`Equal`, self) out-edge. Adjacency is CSR over dense ids, sorted by
(relation, destination) within each entity, so a byte-identical input file
always produces a byte-identical serialized graph.
"""

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .arrayio import load_container, save_container
from .errors import ContractError, DataError, ParseError

logger = logging.getLogger(__name__)

EQUAL_NAME = "Equal"
EQUAL_ID = 0
INVERSE_PREFIX = "~"
UNK_NAME = "<UNK>"


@dataclass
class GraphConfig:
    add_unk: bool = False


@dataclass
class GraphStats:
    entities: int = 0
    base_relations: int = 0
    relations: int = 0
    base_triples: int = 0
    duplicate_triples: int = 0
    edges: int = 0

    def summary(self):
        return (f"entities={self.entities} base_relations={self.base_relations} "
                f"relations={self.relations} base_triples={self.base_triples} "
                f"duplicates_dropped={self.duplicate_triples} edges={self.edges}")


def _shuffle_rng(seed, entity):
    # Pure function of (seed, entity): same pair, same permutation.
    return np.random.default_rng(np.random.SeedSequence((int(seed) & ((1 << 63) - 1), int(entity))))


class KnowledgeGraph:
    """Read-only after construction; safe to share across workers."""

    def __init__(self, entity_names, relation_names, inverse_ids, indptr,
                 edge_rel, edge_dst, triple_count, stats):
        self.entity_names = entity_names
        self.relation_names = relation_names
        self._entity_index = {n: i for i, n in enumerate(entity_names)}
        self._relation_index = {n: i for i, n in enumerate(relation_names)}
        self._inverse_ids = inverse_ids
        self.indptr = indptr
        self.edge_rel = edge_rel
        self.edge_dst = edge_dst
        self.triple_count = triple_count
        self.stats = stats

    # -- vocabulary ---------------------------------------------------------

    @property
    def entity_count(self):
        return len(self.entity_names)

    @property
    def relation_count(self):
        return len(self.relation_names)

    def entity_id(self, name):
        try:
            return self._entity_index[name]
        except KeyError:
            raise DataError(f"unknown entity {name!r}") from None

    def relation_id(self, name):
        try:
            return self._relation_index[name]
        except KeyError:
            raise DataError(f"unknown relation {name!r}") from None

    def has_entity(self, name):
        return name in self._entity_index

    def has_relation(self, name):
        return name in self._relation_index

    def entity_name(self, idx):
        return self.entity_names[idx]

    def relation_name(self, idx):
        return self.relation_names[idx]

    def inverse(self, rel_id):
        """Involution over base/inverse relations; `Equal` is excluded."""
        if rel_id == EQUAL_ID:
            raise ContractError("the Equal stop relation has no inverse")
        return int(self._inverse_ids[rel_id])

    # -- adjacency ----------------------------------------------------------

    def out_degree(self, v):
        return int(self.indptr[v + 1] - self.indptr[v])

    def out_edges(self, v):
        """Full sorted (relations, destinations) arrays for entity v."""
        lo, hi = int(self.indptr[v]), int(self.indptr[v + 1])
        return self.edge_rel[lo:hi], self.edge_dst[lo:hi]

    def out_edges_of(self, v, max_out, seed):
        """Seeded shuffle of v's out-edges, truncated to max_out.

        The (`Equal`, v) edge survives truncation: if the shuffled prefix
        would drop it, it replaces the last kept slot. Deterministic per
        (v, seed).
        """
        if max_out < 1:
            raise ContractError("max_out must be >= 1")
        rels, dsts = self.out_edges(v)
        deg = len(rels)
        perm = _shuffle_rng(seed, v).permutation(deg)
        if deg > max_out:
            keep = perm[:max_out]
            # Edges are sorted by relation id and Equal is id 0, so the
            # Equal self-loop is always local index 0.
            if not (keep == 0).any():
                keep[-1] = 0
        else:
            keep = perm
        return rels[keep], dsts[keep]

    def has_edge(self, h, r, t):
        lo, hi = int(self.indptr[h]), int(self.indptr[h + 1])
        keys = self.edge_rel[lo:hi].astype(np.int64) * self.entity_count + self.edge_dst[lo:hi]
        pos = np.searchsorted(keys, np.int64(r) * self.entity_count + t)
        return pos < len(keys) and keys[pos] == np.int64(r) * self.entity_count + t

    def edge_keys(self):
        """All edges as sorted uint64 keys (h*R + r)*N + t; N*N*R must fit."""
        n, m = self.entity_count, self.relation_count
        if n * n * m >= 2 ** 63:
            raise DataError("graph too large for packed edge keys")
        heads = np.repeat(np.arange(n, dtype=np.uint64), np.diff(self.indptr))
        keys = (heads * np.uint64(m) + self.edge_rel.astype(np.uint64)) * np.uint64(n) \
            + self.edge_dst.astype(np.uint64)
        return np.sort(keys)

    def all_edge_triples(self):
        """(heads, rels, dsts) int64 arrays over every materialized edge."""
        heads = np.repeat(np.arange(self.entity_count, dtype=np.int64), np.diff(self.indptr))
        return heads, self.edge_rel.astype(np.int64), self.edge_dst.astype(np.int64)

    # -- persistence --------------------------------------------------------

    def vocab_hash(self):
        h = hashlib.blake2b(digest_size=16)
        h.update("\x00".join(self.entity_names).encode("utf-8"))
        h.update(b"\x01")
        h.update("\x00".join(self.relation_names).encode("utf-8"))
        return h.hexdigest()

    def save(self, path):
        meta = {
            "format": "kghop-graph",
            "triple_count": self.triple_count,
            "stats": vars(self.stats),
            "vocab_hash": self.vocab_hash(),
        }
        arrays = {
            "entity_names": np.frombuffer("\n".join(self.entity_names).encode("utf-8"), dtype=np.uint8),
            "relation_names": np.frombuffer("\n".join(self.relation_names).encode("utf-8"), dtype=np.uint8),
            "inverse_ids": self._inverse_ids,
            "indptr": self.indptr,
            "edge_rel": self.edge_rel,
            "edge_dst": self.edge_dst,
        }
        save_container(path, meta, arrays)

    @classmethod
    def load(cls, path):
        meta, arrays = load_container(path)
        if meta.get("format") != "kghop-graph":
            raise ParseError(f"{path}: not a serialized graph")
        entity_blob = arrays["entity_names"].tobytes().decode("utf-8")
        relation_blob = arrays["relation_names"].tobytes().decode("utf-8")
        entity_names = entity_blob.split("\n") if entity_blob else []
        relation_names = relation_blob.split("\n")
        stats = GraphStats(**meta["stats"])
        return cls(entity_names, relation_names, arrays["inverse_ids"], arrays["indptr"],
                   arrays["edge_rel"], arrays["edge_dst"], meta["triple_count"], stats)


def _check_name(name, line_no):
    if not name:
        raise ParseError("empty field", line_no)
    if "\n" in name or "\t" in name:
        raise ParseError(f"name contains control characters: {name!r}", line_no)
    return name


def build_graph(triples, config=None):
    """Assemble a KnowledgeGraph from an iterable of (head, rel, tail) names."""
    config = config or GraphConfig()
    entity_names = []
    entity_index = {}
    relation_names = [EQUAL_NAME]
    relation_index = {EQUAL_NAME: EQUAL_ID}

    def ent(name):
        idx = entity_index.get(name)
        if idx is None:
            idx = len(entity_names)
            entity_names.append(name)
            entity_index[name] = idx
        return idx

    def rel(name):
        idx = relation_index.get(name)
        if idx is None:
            idx = len(relation_names)
            relation_names.append(name)
            relation_index[name] = idx
            relation_names.append(INVERSE_PREFIX + name)
            relation_index[INVERSE_PREFIX + name] = idx + 1
        return idx

    seen = set()
    duplicates = 0
    base = []
    for h_name, r_name, t_name in triples:
        if r_name == EQUAL_NAME or r_name.startswith(INVERSE_PREFIX):
            raise DataError(f"relation name {r_name!r} is reserved")
        key = (h_name, r_name, t_name)
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        base.append((ent(h_name), rel(r_name), ent(t_name)))

    if config.add_unk:
        ent(UNK_NAME)

    n = len(entity_names)
    inverse_ids = np.zeros(len(relation_names), dtype=np.int32)
    for i in range(1, len(relation_names), 2):
        inverse_ids[i] = i + 1
        inverse_ids[i + 1] = i

    edges = set()
    for h, r, t in base:
        edges.add((h, r, t))
        edges.add((t, r + 1, h))  # inverse id is always base id + 1
    for v in range(n):
        edges.add((v, EQUAL_ID, v))

    order = np.array(sorted(edges), dtype=np.int64) if edges else np.zeros((0, 3), dtype=np.int64)
    indptr = np.zeros(n + 1, dtype=np.int64)
    if len(order):
        counts = np.bincount(order[:, 0], minlength=n)
        indptr[1:] = np.cumsum(counts)
    stats = GraphStats(
        entities=n,
        base_relations=(len(relation_names) - 1) // 2,
        relations=len(relation_names),
        base_triples=len(base),
        duplicate_triples=duplicates,
        edges=len(order),
    )
    return KnowledgeGraph(
        entity_names, relation_names, inverse_ids, indptr,
        order[:, 1].astype(np.int32), order[:, 2].astype(np.int32),
        len(base), stats,
    )


def load_graph(path, config=None):
    """Parse a UTF-8 TSV triple file (head<TAB>relation<TAB>tail per line)."""
    def produce():
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise ParseError(f"expected 3 tab-separated fields, got {len(parts)}", line_no)
                yield tuple(_check_name(p, line_no) for p in parts)

    graph = build_graph(produce(), config)
    logger.info("loaded %s: %s", path, graph.stats.summary())
    return graph
