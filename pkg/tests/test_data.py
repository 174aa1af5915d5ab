import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kghop.data import SplitSpec, parse_dataset, split, write_dataset
from kghop.errors import ConfigError
from kghop.graph import build_graph
from kghop.synth import SynthConfig, enumerate_solutions, generate


@pytest.fixture
def graph():
    return build_graph([("A", "r", "B"), ("B", "s", "C"), ("C", "u", "D")])


def record(sample_id="s1", history=(), utterance="find C",
           start="A", path=(("r", "B"), ("s", "C")), goal=None):
    return {
        "sample_id": sample_id,
        "history": [list(t) for t in history],
        "utterance": utterance,
        "start_entity": start,
        "gold_path": [list(p) for p in path],
        "goal_entity": goal if goal is not None else path[-1][1],
    }


class TestParse:
    def test_round_trip_all_valid(self, tmp_path, graph):
        records = [record(sample_id=f"s{i}") for i in range(10)]
        path = tmp_path / "d.jsonl"
        write_dataset(records, path)
        samples, skips = parse_dataset(path, graph)
        assert len(samples) == 10
        assert skips == []
        s = samples[0]
        assert s.start_id == graph.entity_id("A")
        assert s.goal_id == graph.entity_id("C")
        assert s.gold_path_ids == ((graph.relation_id("r"), graph.entity_id("B")),
                                   (graph.relation_id("s"), graph.entity_id("C")))

    def test_unknown_relation_skipped_with_reason(self, tmp_path, graph):
        path = tmp_path / "d.jsonl"
        write_dataset([record(sample_id="bad", path=(("nope", "B"),), goal="B")], path)
        samples, skips = parse_dataset(path, graph)
        assert samples == []
        assert skips == [("bad", "unknown relation 'nope'")]

    def test_unknown_entities_skipped(self, tmp_path, graph):
        rows = [record(sample_id="s-start", start="Zed"),
                record(sample_id="s-goal", path=(("r", "B"),), goal="Zed")]
        path = tmp_path / "d.jsonl"
        write_dataset(rows, path)
        samples, skips = parse_dataset(path, graph)
        assert samples == []
        assert {sid for sid, _ in skips} == {"s-start", "s-goal"}

    def test_goal_must_be_path_tail(self, tmp_path, graph):
        path = tmp_path / "d.jsonl"
        write_dataset([record(sample_id="mism", goal="D")], path)
        _, skips = parse_dataset(path, graph)
        assert skips[0][0] == "mism"
        assert "tail" in skips[0][1]

    def test_path_length_bounds(self, tmp_path, graph):
        rows = [record(sample_id="long", path=(("r", "B"), ("s", "C"), ("u", "D")), goal="D"),
                record(sample_id="empty", path=(), goal="A")]
        path = tmp_path / "d.jsonl"
        write_dataset(rows, path)
        samples, skips = parse_dataset(path, graph)
        assert samples == []
        assert len(skips) == 2

    def test_malformed_line_never_aborts(self, tmp_path, graph):
        path = tmp_path / "d.jsonl"
        with open(path, "w") as fh:
            fh.write("{not json\n")
            fh.write(json.dumps(record(sample_id="ok", path=(("r", "B"),))) + "\n")
            fh.write(json.dumps({"sample_id": "missing"}) + "\n")
        samples, skips = parse_dataset(path, graph)
        assert [s.sample_id for s in samples] == ["ok"]
        assert len(skips) == 2

    def test_inverse_relations_resolve(self, tmp_path, graph):
        path = tmp_path / "d.jsonl"
        write_dataset([record(sample_id="inv", start="B", path=(("~r", "A"),), goal="A")], path)
        samples, skips = parse_dataset(path, graph)
        assert skips == []
        assert samples[0].gold_path_ids[0][0] == graph.relation_id("~r")


class TestSplit:
    def test_exact_fractions(self):
        train, valid, test = split(list(range(100)), SplitSpec(seed=1))
        assert (len(train), len(valid), len(test)) == (70, 15, 15)

    def test_seven_samples_floor_rule(self):
        # floor(4.9)=4 train, floor(1.05)=1 valid, remainder 2 test
        train, valid, test = split(list(range(7)), SplitSpec(seed=0))
        assert (len(train), len(valid), len(test)) == (4, 1, 2)

    def test_deterministic(self):
        a = split(list(range(40)), SplitSpec(seed=9))
        b = split(list(range(40)), SplitSpec(seed=9))
        assert a == b

    def test_fraction_validation(self):
        with pytest.raises(ConfigError):
            split([1], SplitSpec(train_frac=0.9, valid_frac=0.2, test_frac=0.1))

    @given(st.integers(min_value=0, max_value=200), st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=50, deadline=None, derandomize=True)
    def test_disjoint_and_exhaustive(self, n, seed):
        items = list(range(n))
        train, valid, test = split(items, SplitSpec(seed=seed))
        assert sorted(train + valid + test) == items
        assert len(set(train) & set(valid)) == 0
        assert len(set(valid) & set(test)) == 0
        assert len(set(train) & set(test)) == 0


class TestSynth:
    def test_generated_samples_verified_by_bfs(self, tmp_path):
        cfg = SynthConfig(n_entities=30, branching=3, n_train=40, n_valid=10,
                          n_test=5, seed=4)
        graph, stats = generate(cfg, tmp_path / "corpus")
        assert stats["samples"] == 55
        assert graph.triple_count == 30 * 3
        for name in ("train", "valid", "test"):
            samples, skips = parse_dataset(tmp_path / "corpus" / f"{name}.jsonl", graph)
            assert skips == []
            for s in samples:
                sols = enumerate_solutions(graph, s.start_id, s.goal_id)
                assert s.gold_path_ids in {tuple(sol) for sol in sols}
                assert s.goal_id != s.start_id

    def test_chain_graph_has_unique_gold(self, chain_graph):
        # no branching: each forward hop has exactly one route
        g = chain_graph
        for i in range(9):
            start, goal = g.entity_id(f"n{i:02d}"), g.entity_id(f"n{i + 1:02d}")
            one_hop = [sol for sol in enumerate_solutions(g, start, goal) if len(sol) == 1]
            assert len(one_hop) == 1
            goal2 = g.entity_id(f"n{i + 2:02d}")
            two_hop = [sol for sol in enumerate_solutions(g, start, goal2) if len(sol) == 2]
            assert len(two_hop) == 1

    def test_deterministic_per_seed(self, tmp_path):
        cfg = SynthConfig(n_entities=20, branching=2, n_train=15, n_valid=5, seed=11)
        generate(cfg, tmp_path / "a")
        generate(cfg, tmp_path / "b")
        for name in ("triples.tsv", "train.jsonl", "valid.jsonl", "solutions.jsonl"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_unsatisfiable_config_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            generate(SynthConfig(branching=0), tmp_path / "x")

    def test_solutions_file_covers_every_sample(self, tmp_path):
        cfg = SynthConfig(n_entities=15, branching=2, n_train=8, n_valid=2, seed=2)
        _, _ = generate(cfg, tmp_path / "c")
        with open(tmp_path / "c" / "solutions.jsonl") as fh:
            recs = [json.loads(line) for line in fh]
        assert len(recs) == 10
        assert all(rec["solutions"] for rec in recs)
