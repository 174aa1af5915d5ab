import io
import json
from types import SimpleNamespace

import numpy as np
import pytest

from kghop.agent import AgentDims, MLPParams, Policy, actor_forward, build_action_table, init_params
from kghop.beam import (ScoredPath, beam_decode, evaluate, match_path,
                        random_rollout_target_rate, score_decoded)
from kghop.encoders import CachingEncoder, HashFeatureEncoder
from kghop.env import Environment
from kghop.errors import ConfigError
from kghop.fte import render_fte
from kghop.graph import EQUAL_ID, build_graph
from kghop.transe import EmbeddingTable

from .conftest import make_sample
from .oracles import enumerate_paths

D_EMB = 4


def random_graph(rng, n_entities=6, branching=2):
    triples = []
    for i in range(n_entities):
        seen = set()
        while len(seen) < branching:
            rel = int(rng.integers(3))
            dst = int(rng.integers(n_entities))
            if dst == i or (rel, dst) in seen:
                continue
            seen.add((rel, dst))
            triples.append((f"e{i}", f"rel{rel}", f"e{dst}"))
    return build_graph(triples)


def pipeline_for(graph, seed=0, d_s=24):
    rng = np.random.default_rng(seed + 50)
    emb = EmbeddingTable(rng.normal(0, 0.5, size=(graph.entity_count, D_EMB)).astype(np.float32),
                         rng.normal(0, 0.5, size=(graph.relation_count, D_EMB)).astype(np.float32),
                         vocab_hash=graph.vocab_hash())
    dims = AgentDims(d_s=d_s, h1=10, h2=8, d_action=2 * D_EMB)
    actor, critic = init_params(dims, seed, dtype=np.float64)
    # widen the logit spread so orderings are decisive, not near-ties
    actor.W3 = actor.W3 * 100.0
    policy = Policy(dims=dims, actor=actor, critic=critic, embeddings=emb,
                    dtype=np.dtype(np.float64))
    encoder = CachingEncoder(HashFeatureEncoder(dim=d_s))
    env = Environment(graph, max_out=50)
    return policy, encoder, env


def oracle_paths(policy, encoder, env, sample, seed):
    def logp_fn(state, actions):
        s = encoder.encode(render_fte(state, env.graph))
        dist = actor_forward(policy.actor, s, build_action_table(actions, policy.embeddings))
        return [float(dist.log_probs[a.table_index]) for a in actions]

    return enumerate_paths(logp_fn, env, sample, seed)


class TestBeamDecode:
    def test_width_one_is_greedy(self):
        graph = random_graph(np.random.default_rng(0))
        policy, encoder, env = pipeline_for(graph)
        sample = _any_sample(graph)
        top = beam_decode(policy, encoder, env, sample, width=1, seed=3)[0]
        # manual greedy rollout
        state = env.reset(sample)
        edges = []
        score = 0.0
        done = False
        while not done:
            from kghop.env import derive_action_seed
            actions = env.legal_actions(state, derive_action_seed(3, state.v_c, state.t))
            s = encoder.encode(render_fte(state, graph))
            dist = actor_forward(policy.actor, s, build_action_table(actions, policy.embeddings))
            idx = int(np.argmax(dist.probs))
            score += float(dist.log_probs[idx])
            action = actions[idx]
            edges.append((state.v_c, action.relation, action.destination))
            state, _, done = env.step(state, action, sample.goal_id)
        assert top.edges == tuple(edges)
        assert top.score == pytest.approx(score, abs=1e-12)

    def test_equals_exhaustive_enumeration_on_toy_graphs(self):
        # width >= number of complete paths: beam must equal brute force
        checked = 0
        for seed in range(60):
            rng = np.random.default_rng(seed)
            graph = random_graph(rng, n_entities=int(rng.integers(5, 8)), branching=2)
            policy, encoder, env = pipeline_for(graph, seed=seed)
            sample = _any_sample(graph, seed)
            oracle = oracle_paths(policy, encoder, env, sample, seed)
            if len(oracle) > 50:
                continue
            got = beam_decode(policy, encoder, env, sample, width=50, seed=seed)
            assert len(got) == len(oracle)
            for path, (score, edges) in zip(got, oracle):
                assert path.edges == edges
                assert path.score == pytest.approx(score, abs=1e-9)
            checked += 1
        assert checked >= 50

    def test_stop_in_place_when_policy_peaks_on_equal(self):
        graph = random_graph(np.random.default_rng(4))
        policy, encoder, env = pipeline_for(graph)
        # zero the net so z == b3, then point b3 at the Equal relation half
        zeros = {k: np.zeros_like(v) for k, v in policy.actor.as_dict().items()}
        policy.embeddings.relation_vectors[EQUAL_ID] = np.array([10, 0, 0, 0], np.float32)
        b3 = np.zeros(2 * D_EMB)
        b3[:D_EMB] = policy.embeddings.relation_vectors[EQUAL_ID]
        policy = Policy(policy.dims, MLPParams(**{**zeros, "b3": b3}), policy.critic,
                        policy.embeddings, policy.dtype)
        sample = _any_sample(graph)
        top = beam_decode(policy, encoder, env, sample, width=3, seed=0)[0]
        v = sample.start_id
        assert top.edges == ((v, EQUAL_ID, v),)
        assert top.terminal_entity == v

    def test_width_validation(self):
        graph = random_graph(np.random.default_rng(1))
        policy, encoder, env = pipeline_for(graph)
        with pytest.raises(ConfigError):
            beam_decode(policy, encoder, env, _any_sample(graph), width=0)


def _any_sample(graph, seed=0):
    rng = np.random.default_rng(seed + 1000)
    while True:
        v = int(rng.integers(graph.entity_count))
        rels, dsts = graph.out_edges(v)
        non_stop = [(int(r), int(d)) for r, d in zip(rels, dsts)
                    if r != EQUAL_ID and d != v]
        if not non_stop:
            continue
        r, d = non_stop[int(rng.integers(len(non_stop)))]
        return make_sample(graph, graph.entity_name(v),
                           [(graph.relation_name(r), graph.entity_name(d))],
                           sample_id=f"b{seed}")


class TestMatchPath:
    def test_trailing_equal_suffix_matches(self):
        pred = ScoredPath(edges=((1, 3, 2), (2, EQUAL_ID, 2)), score=-0.1, terminal_entity=2)
        assert match_path(pred, [(3, 2)])

    def test_wrong_destination_fails(self):
        pred = ScoredPath(edges=((1, 3, 4), (4, EQUAL_ID, 4)), score=-0.1, terminal_entity=4)
        assert not match_path(pred, [(3, 2)])

    def test_exact_match_without_equal(self):
        pred = ScoredPath(edges=((1, 3, 2), (2, 5, 6)), score=-0.2, terminal_entity=6)
        assert match_path(pred, [(3, 2), (5, 6)])

    def test_pure_equal_never_matches_nonempty_gold(self):
        pred = ScoredPath(edges=((1, EQUAL_ID, 1),), score=-0.1, terminal_entity=1)
        assert not match_path(pred, [(3, 2)])

    def test_empty_gold_rejected(self):
        pred = ScoredPath(edges=((1, EQUAL_ID, 1),), score=-0.1, terminal_entity=1)
        with pytest.raises(ConfigError):
            match_path(pred, [])


def _p(edges, score, terminal):
    return ScoredPath(edges=tuple(edges), score=score, terminal_entity=terminal)


class TestScoreDecoded:
    def fixture(self):
        gold = ((1, 10),)
        samples = [SimpleNamespace(gold_path_ids=gold, goal_id=10) for _ in range(5)]
        decoded = [
            # s1: top-1 matches gold and reaches the goal
            [_p([(5, 1, 10)], -0.1, 10),
             _p([(5, 2, 11)], -0.5, 11)],
            # s2: match at rank 2; goal terminal first appears at rank 1
            [_p([(5, 2, 20)], -0.1, 20),
             _p([(5, 2, 10)], -0.2, 10),
             _p([(5, 1, 10)], -0.3, 10),
             _p([(5, 2, 21)], -0.4, 21)],
            # s3: no match; goal terminal only at raw rank 4
            [_p([(5, 2, 11)], -0.1, 11),
             _p([(5, 2, 12)], -0.2, 12),
             _p([(5, 2, 13)], -0.3, 13),
             _p([(5, 2, 14)], -0.4, 14),
             _p([(5, 2, 10)], -0.5, 10)],
            # s4: duplicate terminals collapse, goal at deduped rank 1
            [_p([(5, 2, 30)], -0.1, 30),
             _p([(5, 3, 30)], -0.2, 30),
             _p([(5, 2, 10)], -0.3, 10)],
            # s5: never matches, never reaches the goal
            [_p([(5, 2, 40)], -0.1, 40)],
        ]
        return decoded, samples

    def test_hand_scored_fixture_exact(self):
        decoded, samples = self.fixture()
        report = score_decoded(decoded, samples, ks=(1, 3, 5))
        assert report.path_at_k == {1: 0.2, 3: 0.4, 5: 0.4}
        assert report.target_at_k == {1: 0.2, 3: 0.6, 5: 0.8}

    def test_k_monotonicity_enforced(self):
        decoded, samples = self.fixture()
        report = score_decoded(decoded, samples, ks=(1, 2, 3, 4, 5))
        for metrics in (report.path_at_k, report.target_at_k):
            values = [metrics[k] for k in sorted(metrics)]
            assert values == sorted(values)

    def test_perfect_predictor_scores_one(self):
        gold = ((1, 10),)
        samples = [SimpleNamespace(gold_path_ids=gold, goal_id=10)]
        decoded = [[_p([(5, 1, 10)], -0.1, 10)]]
        report = score_decoded(decoded, samples, ks=(1,))
        assert report.path_at_k[1] == 1.0 and report.target_at_k[1] == 1.0


class TestEvaluate:
    def _eval_setup(self, seed=0):
        graph = random_graph(np.random.default_rng(8), n_entities=8, branching=2)
        policy, encoder, env = pipeline_for(graph, seed=seed)
        samples = [_any_sample(graph, seed=i) for i in range(6)]
        return graph, policy, encoder, env, samples

    def test_report_structure_and_bounds(self):
        _, policy, encoder, env, samples = self._eval_setup()
        report = evaluate(policy, encoder, env, samples, ks=(1, 3, 5), seed=2)
        assert report.n_samples == 6
        for metrics in (report.path_at_k, report.target_at_k):
            for v in metrics.values():
                assert 0.0 <= v <= 1.0

    def test_path_at_k_never_exceeds_target_at_k(self):
        # every gold terminates at the goal, so a path match implies a target match
        for seed in range(5):
            _, policy, encoder, env, samples = self._eval_setup(seed)
            report = evaluate(policy, encoder, env, samples, ks=(1, 3, 5), seed=seed)
            for k in (1, 3, 5):
                assert report.path_at_k[k] <= report.target_at_k[k] + 1e-12

    def test_beam_width_monotonicity(self):
        _, policy, encoder, env, samples = self._eval_setup()
        previous = None
        for width in (1, 3, 5, 10):
            report = evaluate(policy, encoder, env, samples, ks=(1,), width=width, seed=4)
            value = report.target_at_k[1]
            if previous is not None:
                assert value >= previous - 1e-12
            previous = value

    def test_deterministic(self):
        _, policy, encoder, env, samples = self._eval_setup()
        a = evaluate(policy, encoder, env, samples, ks=(1, 3), seed=9)
        b = evaluate(policy, encoder, env, samples, ks=(1, 3), seed=9)
        assert a.path_at_k == b.path_at_k and a.target_at_k == b.target_at_k

    def test_width_must_cover_max_k(self):
        _, policy, encoder, env, samples = self._eval_setup()
        with pytest.raises(ConfigError):
            evaluate(policy, encoder, env, samples, ks=(1, 5), width=3)

    def test_trace_stream_records(self):
        _, policy, encoder, env, samples = self._eval_setup()
        stream = io.StringIO()
        evaluate(policy, encoder, env, samples, ks=(1,), width=1, seed=0,
                 trace_stream=stream)
        records = [json.loads(line) for line in stream.getvalue().splitlines()]
        assert len(records) == len(samples)
        assert {"sample_id", "gold_path", "predicted", "success", "target_reached"} \
            <= set(records[0])

    def test_truncation_misses_counted(self):
        hub = build_graph([("hub", "r", f"leaf{i}") for i in range(40)])
        policy, encoder, env = pipeline_for(hub)
        env = Environment(hub, max_out=3)
        samples = [make_sample(hub, "hub", [("r", f"leaf{i}")], sample_id=f"t{i}")
                   for i in range(25)]
        report = evaluate(policy, encoder, env, samples, ks=(1,), width=1, seed=0)
        assert report.truncation_misses > 0


class TestRandomBaseline:
    def test_rate_in_unit_interval_and_deterministic(self):
        graph = random_graph(np.random.default_rng(3), n_entities=10, branching=3)
        env = Environment(graph)
        samples = [_any_sample(graph, seed=i) for i in range(10)]
        a = random_rollout_target_rate(env, samples, seed=5, episodes_per_sample=3)
        b = random_rollout_target_rate(env, samples, seed=5, episodes_per_sample=3)
        assert a == b
        assert 0.0 <= a <= 1.0
