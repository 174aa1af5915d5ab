"""Dialog-grounded path-prediction samples: parsing, resolution, splits.

Canonical ingestion format (schema version 1) is JSON lines, one sample per
line:

    {"sample_id": str,
     "history": [[speaker, text], ...],          # optional, default []
     "utterance": str,
     "start_entity": str,
     "gold_path": [[relation, entity], ...],     # 1 or 2 hops
     "goal_entity": str}

Records that fail to resolve against the graph are skipped, never fatal; the
skip report itemizes (sample_id, reason) pairs.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

SCHEMA_FIELDS = ("sample_id", "history", "utterance", "start_entity", "gold_path", "goal_entity")
SCHEMA_VERSION = 1
MAX_GOLD_HOPS = 2


@dataclass(frozen=True)
class DialogSample:
    sample_id: str
    history: tuple  # ((speaker, text), ...)
    utterance: str
    start_name: str
    start_id: int
    gold_path: tuple  # ((relation name, entity name), ...)
    gold_path_ids: tuple  # ((relation id, entity id), ...)
    goal_name: str
    goal_id: int


def _resolve(record, graph):
    history = tuple((str(s), str(t)) for s, t in record.get("history", []))
    start = record["start_entity"]
    goal = record["goal_entity"]
    gold = [(str(r), str(e)) for r, e in record["gold_path"]]
    if not 1 <= len(gold) <= MAX_GOLD_HOPS:
        return None, f"gold path has {len(gold)} hops, expected 1..{MAX_GOLD_HOPS}"
    if gold[-1][1] != goal:
        return None, "goal entity is not the tail of the gold path"
    if not graph.has_entity(start):
        return None, f"unknown start entity {start!r}"
    if not graph.has_entity(goal):
        return None, f"unknown goal entity {goal!r}"
    path_ids = []
    for rel, ent in gold:
        if not graph.has_relation(rel):
            return None, f"unknown relation {rel!r}"
        if not graph.has_entity(ent):
            return None, f"unknown entity {ent!r}"
        path_ids.append((graph.relation_id(rel), graph.entity_id(ent)))
    sample = DialogSample(
        sample_id=str(record["sample_id"]),
        history=history,
        utterance=str(record["utterance"]),
        start_name=start,
        start_id=graph.entity_id(start),
        gold_path=tuple(gold),
        gold_path_ids=tuple(path_ids),
        goal_name=goal,
        goal_id=graph.entity_id(goal),
    )
    return sample, None


def parse_dataset(path, graph):
    """Returns (samples, skip_report); skip_report entries are (id, reason)."""
    samples = []
    skips = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                missing = [f for f in SCHEMA_FIELDS if f not in record and f != "history"]
                if missing:
                    raise KeyError(", ".join(missing))
                sample, reason = _resolve(record, graph)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                skips.append((f"line:{line_no}", f"malformed record: {exc}"))
                continue
            if sample is None:
                skips.append((record.get("sample_id", f"line:{line_no}"), reason))
            else:
                samples.append(sample)
    if skips:
        logger.info("parsed %s: %d samples, %d skipped", path, len(samples), len(skips))
    return samples, skips


def write_dataset(records, path):
    """Write raw (pre-resolution) records in the schema-1 line format."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def write_skip_report(skips, path):
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, reason in skips:
            fh.write(json.dumps({"sample_id": sample_id, "reason": reason}) + "\n")


@dataclass
class SplitSpec:
    train_frac: float = 0.70
    valid_frac: float = 0.15
    test_frac: float = 0.15
    seed: int = 0

    def validate(self):
        total = self.train_frac + self.valid_frac + self.test_frac
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {total}")
        if min(self.train_frac, self.valid_frac, self.test_frac) < 0:
            raise ConfigError("split fractions must be non-negative")


def split(samples, spec):
    """Seeded shuffle then contiguous cut; floor for train and valid, the
    remainder goes to test. Disjoint and exhaustive for any size."""
    spec.validate()
    order = np.random.default_rng(spec.seed).permutation(len(samples))
    n_train = int(len(samples) * spec.train_frac)
    n_valid = int(len(samples) * spec.valid_frac)
    train = [samples[i] for i in order[:n_train]]
    valid = [samples[i] for i in order[n_train: n_train + n_valid]]
    test = [samples[i] for i in order[n_train + n_valid:]]
    return train, valid, test
