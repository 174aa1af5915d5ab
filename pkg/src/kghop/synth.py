"""Synthetic corpus generator for the acceptance suite.

Emits a random knowledge graph plus dialog samples whose goals are reachable
in at most two hops; every sample is checked against a breadth-first oracle
and the oracle's full solution set is written alongside the splits.
"""

import json
import logging
import os
from dataclasses import dataclass

import numpy as np

from .data import write_dataset
from .errors import ConfigError
from .graph import EQUAL_ID, build_graph

logger = logging.getLogger(__name__)

UTTERANCE_TEMPLATES = (
    "Find {goal}. The destination is {goal}. Stop at {goal}.",
    "Route me to {goal}. I want {goal}. End the walk at {goal}.",
    "Reach {goal} from here. The target is {goal}. Finish at {goal}.",
    "Go to {goal}. Arrive at {goal}. The goal is {goal}.",
)


@dataclass
class SynthConfig:
    n_entities: int = 100
    branching: int = 4
    n_relations: int = 6
    n_goals: int = 12  # 0 = any entity may be a goal; small sets keep the
    #                    per-goal reward signal dense enough to learn fast
    n_train: int = 400
    n_valid: int = 100
    n_test: int = 0
    two_hop_fraction: float = 0.5
    seed: int = 0

    def validate(self):
        if self.n_entities < 2:
            raise ConfigError("need at least 2 entities")
        if self.branching < 1:
            raise ConfigError("branching must be >= 1")
        if self.branching > self.n_entities - 1:
            raise ConfigError("branching cannot exceed n_entities - 1")
        if self.n_relations < 1:
            raise ConfigError("need at least one relation")
        if not 0 <= self.two_hop_fraction <= 1:
            raise ConfigError("two_hop_fraction must be in [0, 1]")
        if self.n_goals < 0 or self.n_goals > self.n_entities:
            raise ConfigError("n_goals must be in [0, n_entities]")


def _entity_name(i):
    return f"ent{i:03d}"


def _relation_name(j):
    return f"rel{j}"


def generate_triples(cfg, rng):
    """Each entity gets `branching` distinct outgoing base edges (no self
    loops; `Equal` is added by the graph loader, not here)."""
    triples = []
    for i in range(cfg.n_entities):
        seen = set()
        while len(seen) < cfg.branching:
            rel = int(rng.integers(cfg.n_relations))
            dst = int(rng.integers(cfg.n_entities))
            if dst == i or (rel, dst) in seen:
                continue
            seen.add((rel, dst))
            triples.append((_entity_name(i), _relation_name(rel), _entity_name(dst)))
    return triples


def _non_stop_edges(graph, v):
    rels, dsts = graph.out_edges(v)
    keep = rels != EQUAL_ID
    return rels[keep], dsts[keep]


def enumerate_solutions(graph, start, goal, max_hops=2):
    """All non-stop walks of length <= max_hops from start ending at goal."""
    solutions = []
    rels1, dsts1 = _non_stop_edges(graph, start)
    for r1, d1 in zip(rels1, dsts1):
        if d1 == goal:
            solutions.append(((int(r1), int(d1)),))
        if max_hops >= 2:
            rels2, dsts2 = _non_stop_edges(graph, int(d1))
            for r2, d2 in zip(rels2, dsts2):
                if d2 == goal:
                    solutions.append(((int(r1), int(d1)), (int(r2), int(d2))))
    return solutions


def _random_walk_sample(graph, rng, idx, cfg, goal_set):
    for _attempt in range(10000):
        start = int(rng.integers(graph.entity_count))
        hops = 2 if rng.random() < cfg.two_hop_fraction else 1
        v = start
        path = []
        for _ in range(hops):
            rels, dsts = _non_stop_edges(graph, v)
            pick = int(rng.integers(len(rels)))
            path.append((int(rels[pick]), int(dsts[pick])))
            v = int(dsts[pick])
        goal = v
        if goal == start:
            continue
        if goal_set is not None and goal not in goal_set:
            continue
        solutions = enumerate_solutions(graph, start, goal)
        if tuple(tuple(e) for e in path) not in {tuple(s) for s in solutions}:
            raise AssertionError("walked path missing from the oracle solution set")
        template = UTTERANCE_TEMPLATES[int(rng.integers(len(UTTERANCE_TEMPLATES)))]
        record = {
            "sample_id": f"synth{idx:05d}",
            "history": [],
            "utterance": template.format(goal=graph.entity_name(goal)),
            "start_entity": graph.entity_name(start),
            "gold_path": [[graph.relation_name(r), graph.entity_name(d)] for r, d in path],
            "goal_entity": graph.entity_name(goal),
        }
        return record, solutions
    raise ConfigError("could not draw a reachable sample; graph too degenerate")


def generate(cfg, out_dir):
    """Write triples.tsv, {train,valid,test}.jsonl, solutions.jsonl, meta.json.

    Returns (graph, stats dict). Deterministic per seed.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    os.makedirs(out_dir, exist_ok=True)
    triples = generate_triples(cfg, rng)
    with open(os.path.join(out_dir, "triples.tsv"), "w", encoding="utf-8") as fh:
        for h, r, t in triples:
            fh.write(f"{h}\t{r}\t{t}\n")
    graph = build_graph(triples)

    goal_set = None
    if cfg.n_goals:
        goal_set = set(int(v) for v in
                       rng.choice(graph.entity_count, size=cfg.n_goals, replace=False))
    counts = {"train": cfg.n_train, "valid": cfg.n_valid, "test": cfg.n_test}
    idx = 0
    solution_records = []
    for split_name, count in counts.items():
        records = []
        for _ in range(count):
            record, solutions = _random_walk_sample(graph, rng, idx, cfg, goal_set)
            idx += 1
            records.append(record)
            solution_records.append({
                "sample_id": record["sample_id"],
                "split": split_name,
                "solutions": [
                    [[graph.relation_name(r), graph.entity_name(d)] for r, d in sol]
                    for sol in solutions
                ],
            })
        write_dataset(records, os.path.join(out_dir, f"{split_name}.jsonl"))
    with open(os.path.join(out_dir, "solutions.jsonl"), "w", encoding="utf-8") as fh:
        for rec in solution_records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    stats = {
        "entities": graph.entity_count,
        "relations": graph.relation_count,
        "base_triples": graph.triple_count,
        "samples": idx,
        "goals": len(goal_set) if goal_set else graph.entity_count,
        **{f"n_{k}": v for k, v in counts.items()},
        "seed": cfg.seed,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
    logger.info("synthetic corpus written to %s: %s", out_dir, stats)
    return graph, stats
