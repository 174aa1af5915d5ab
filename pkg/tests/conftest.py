import numpy as np
import pytest

from kghop.data import DialogSample
from kghop.graph import build_graph


def make_graph(triples):
    return build_graph(triples)


@pytest.fixture
def two_triple_graph():
    # A -r-> B -s-> C
    return make_graph([("A", "r", "B"), ("B", "s", "C")])


@pytest.fixture
def chain_graph():
    # 20 base triples n00 -link-> n01 -link-> ... -link-> n20
    triples = [(f"n{i:02d}", "link", f"n{i + 1:02d}") for i in range(20)]
    return make_graph(triples)


def make_sample(graph, start, gold_path, sample_id="s0", utterance=None, history=()):
    """Resolve a (start, [(rel, ent), ...]) description against a graph."""
    goal = gold_path[-1][1]
    return DialogSample(
        sample_id=sample_id,
        history=tuple(history),
        utterance=utterance or f"Find {goal}.",
        start_name=start,
        start_id=graph.entity_id(start),
        gold_path=tuple((r, e) for r, e in gold_path),
        gold_path_ids=tuple((graph.relation_id(r), graph.entity_id(e)) for r, e in gold_path),
        goal_name=goal,
        goal_id=graph.entity_id(goal),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
