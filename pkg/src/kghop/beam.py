"""Beam-search decoding of 2-hop paths and path@k / target@k recall.

Beam items are scored by cumulative log-probability under the greedy
distribution; ties break by the lexicographic (relation, destination) id
sequence so decoding is fully deterministic. Action sets use a fixed
evaluation seed, so gold edges evicted by max_out truncation stay evicted;
those count as misses and are reported separately.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .agent import actor_forward, build_action_table, sample_action
from .env import derive_action_seed
from .errors import ConfigError
from .fte import render_fte
from .graph import EQUAL_ID

logger = logging.getLogger(__name__)

DEFAULT_KS = (1, 3, 5, 10, 25)


@dataclass
class ScoredPath:
    edges: tuple  # ((head, relation, destination), ...)
    score: float  # sum of step log-probabilities
    terminal_entity: int

    def sort_key(self):
        return (-self.score, tuple((r, d) for _, r, d in self.edges))


@dataclass
class EvalReport:
    path_at_k: dict
    target_at_k: dict
    n_samples: int
    truncation_misses: int = 0

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "path_at_k": {str(k): v for k, v in self.path_at_k.items()},
            "target_at_k": {str(k): v for k, v in self.target_at_k.items()},
            "truncation_misses": self.truncation_misses,
        }

    def format_table(self):
        ks = sorted(self.path_at_k)
        header = "metric  " + "".join(f"{'@' + str(k):>9}" for k in ks)
        path_row = "path    " + "".join(f"{self.path_at_k[k]:>9.4f}" for k in ks)
        target_row = "target  " + "".join(f"{self.target_at_k[k]:>9.4f}" for k in ks)
        return "\n".join([header, path_row, target_row,
                          f"samples={self.n_samples} truncation_misses={self.truncation_misses}"])


def _terminal_entity(edges, start):
    last = start
    for _, rel, dst in edges:
        if rel != EQUAL_ID:
            last = dst
    return last


def beam_decode(policy, encoder, env, sample, width, seed=0):
    """Level-wise beam over the episode horizon; returns up to `width`
    complete paths sorted by descending score (ties lexicographic)."""
    if width < 1:
        raise ConfigError("beam width must be >= 1")
    root = env.reset(sample)
    beams = [(0.0, (), root, False)]  # (score, edges, state, done)
    for _hop in range(env.max_steps):
        expanded = []
        any_live = False
        for score, edges, state, done in beams:
            if done:
                expanded.append((score, edges, state, True))
                continue
            any_live = True
            fte = render_fte(state, env.graph)
            s = encoder.encode(fte)
            seed_vt = derive_action_seed(seed, state.v_c, state.t)
            actions = env.legal_actions(state, seed_vt)
            dist = actor_forward(policy.actor, s, build_action_table(actions, policy.embeddings))
            for action in actions:
                step_logp = float(dist.log_probs[action.table_index])
                new_state, _, new_done = env.step(state, action, sample.goal_id)
                expanded.append((score + step_logp,
                                 edges + ((state.v_c, action.relation, action.destination),),
                                 new_state, new_done))
        if not any_live:
            break
        expanded.sort(key=lambda item: (-item[0], tuple((r, d) for _, r, d in item[1])))
        beams = expanded[:width]
    paths = [ScoredPath(edges=edges, score=score,
                        terminal_entity=_terminal_entity(edges, sample.start_id))
             for score, edges, state, done in beams]
    paths.sort(key=ScoredPath.sort_key)
    return paths


def greedy_decode(policy, encoder, env, sample, seed=0):
    return beam_decode(policy, encoder, env, sample, width=1, seed=seed)[0]


def match_path(predicted, gold):
    """True iff the predicted edges, minus any trailing `Equal` hops, equal
    the gold (relation, entity) sequence exactly."""
    if not gold:
        raise ConfigError("gold path must be non-empty")
    edges = list(predicted.edges)
    while edges and edges[-1][1] == EQUAL_ID:
        edges.pop()
    return [(r, d) for _, r, d in edges] == list(gold)


def _dedup_terminals(paths):
    """Best-scoring path per terminal entity, order preserved."""
    seen = set()
    out = []
    for p in paths:
        if p.terminal_entity not in seen:
            seen.add(p.terminal_entity)
            out.append(p)
    return out


def score_decoded(decoded, samples, ks):
    """Metrics from per-sample decoded path lists (hand-testable core).

    path@k looks at the raw top-k paths; target@k deduplicates terminals
    first, keeping each terminal's best-scoring path.
    """
    ks = sorted(ks)
    path_hits = {k: 0 for k in ks}
    target_hits = {k: 0 for k in ks}
    for sample, paths in zip(samples, decoded):
        gold = list(sample.gold_path_ids)
        match_rank = None
        for rank, p in enumerate(paths):
            if match_path(p, gold):
                match_rank = rank
                break
        terminals = _dedup_terminals(paths)
        target_rank = None
        for rank, p in enumerate(terminals):
            if p.terminal_entity == sample.goal_id:
                target_rank = rank
                break
        for k in ks:
            if match_rank is not None and match_rank < k:
                path_hits[k] += 1
            if target_rank is not None and target_rank < k:
                target_hits[k] += 1
    n = len(samples)
    report = EvalReport(
        path_at_k={k: path_hits[k] / n for k in ks},
        target_at_k={k: target_hits[k] / n for k in ks},
        n_samples=n,
    )
    _check_monotone(report)
    return report


def _check_monotone(report):
    for metrics in (report.path_at_k, report.target_at_k):
        ks = sorted(metrics)
        for a, b in zip(ks, ks[1:]):
            if metrics[a] > metrics[b] + 1e-12:
                raise AssertionError(f"recall@k must be monotone in k, got {metrics}")


def gold_path_survives_truncation(env, sample, seed):
    """Walk the gold path through the truncated action sets the evaluator
    would see; False means truncation alone makes the sample unmatchable."""
    v = sample.start_id
    for t, (rel, dst) in enumerate(sample.gold_path_ids):
        rels, dsts = env.action_ids(v, t, derive_action_seed(seed, v, t))
        if not ((rels == rel) & (dsts == dst)).any():
            return False
        v = dst
    return True


def evaluate(policy, encoder, env, samples, ks=DEFAULT_KS, width=None, seed=0,
             trace_stream=None):
    """Beam-decode every sample and report recall@k for both metric families."""
    ks = tuple(sorted(ks))
    if width is None:
        width = max(ks)
    if width < max(ks):
        raise ConfigError(f"beam width {width} cannot fill top-{max(ks)} recalls")
    decoded = []
    truncation_misses = 0
    for sample in samples:
        paths = beam_decode(policy, encoder, env, sample, width=width, seed=seed)
        decoded.append(paths)
        if not gold_path_survives_truncation(env, sample, seed):
            truncation_misses += 1
        if trace_stream is not None:
            trace_stream.write(json.dumps(_trace_record(sample, paths, env.graph)) + "\n")
    report = score_decoded(decoded, samples, ks)
    report.truncation_misses = truncation_misses
    return report


def _trace_record(sample, paths, graph):
    def name_path(edges):
        return [[graph.entity_name(h), graph.relation_name(r), graph.entity_name(d)]
                for h, r, d in edges]

    best = paths[0]
    return {
        "sample_id": sample.sample_id,
        "utterance": sample.utterance,
        "start": sample.start_name,
        "goal": sample.goal_name,
        "gold_path": [[r, e] for r, e in sample.gold_path],
        "predicted": name_path(best.edges),
        "predicted_score": best.score,
        "success": match_path(best, list(sample.gold_path_ids)),
        "target_reached": best.terminal_entity == sample.goal_id,
    }


def random_rollout_target_rate(env, samples, seed, episodes_per_sample=1):
    """Uniform-random policy baseline: fraction of sampled episodes that end
    on the goal entity. The sanity floor for learned policies."""
    rng = np.random.default_rng(seed)
    wins = 0
    total = 0
    for sample in samples:
        for _ in range(episodes_per_sample):
            state = env.reset(sample)
            done = False
            while not done:
                actions = env.legal_actions(state, int(rng.integers(0, 2 ** 63)))
                action = actions[int(rng.integers(len(actions)))]
                state, reward, done = env.step(state, action, sample.goal_id)
            total += 1
            if reward > 0:
                wins += 1
    return wins / total if total else 0.0
