"""Deterministic 2-hop MDP over the knowledge graph.

States are the six-tuple (task background, utterance, dialog history, current
entity, path history, step). Actions are out-edges of the current entity;
choosing `Equal` stops in place. The only nonzero reward is terminal: +1 when
the final entity is the goal, -1 otherwise.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ContractError
from .graph import EQUAL_ID

DEFAULT_TASK_BACKGROUND = "Performing 2-hop reasoning on the knowledge graph."


@dataclass(frozen=True)
class EnvState:
    tb: str
    q: str
    h: tuple  # rendered dialog turns, oldest first
    v_c: int
    ph: tuple  # (head, relation, destination) triples walked so far
    t: int

    def validate(self, max_steps):
        if not 0 <= self.t <= max_steps:
            raise ContractError(f"step counter {self.t} outside [0, {max_steps}]")
        if len(self.ph) != self.t:
            raise ContractError("path history length must equal the step counter")
        for a, b in zip(self.ph, self.ph[1:]):
            if a[2] != b[0]:
                raise ContractError("path history entries do not chain")
        if self.ph and self.ph[-1][2] != self.v_c:
            raise ContractError("current entity must be the tail of the last hop")


@dataclass(frozen=True)
class Action:
    relation: int
    destination: int
    table_index: int


def derive_action_seed(base_seed, v, t):
    """Stable per-(entity, step) shuffle seed for evaluation-time action sets."""
    return int(np.random.SeedSequence((int(base_seed) & ((1 << 63) - 1), int(v), int(t)))
               .generate_state(1, np.uint64)[0])


class Environment:
    """Immutable configuration plus pure transition functions.

    Episodes own their EnvState; any number may run concurrently against one
    Environment. The goal entity is episode context, so step() takes it
    explicitly rather than storing it.
    """

    def __init__(self, graph, max_out=50, max_steps=2,
                 positive_reward=1.0, negative_reward=-1.0,
                 equal_min_step=0, step_penalty=0.0,
                 task_background=DEFAULT_TASK_BACKGROUND):
        if max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        self.graph = graph
        self.max_out = max_out
        self.max_steps = max_steps
        self.positive_reward = positive_reward
        self.negative_reward = negative_reward
        self.equal_min_step = equal_min_step  # 0: stop legal at every hop
        self.step_penalty = step_penalty
        self.task_background = task_background

    def reset(self, sample):
        """Fresh state at the sample's start entity; observation = state."""
        turns = tuple(f"{speaker}: {text}" for speaker, text in sample.history)
        state = EnvState(tb=self.task_background, q=sample.utterance, h=turns,
                         v_c=sample.start_id, ph=(), t=0)
        state.validate(self.max_steps)
        return state

    def is_terminal(self, state):
        if state.t >= self.max_steps:
            return True
        return bool(state.ph) and state.ph[-1][1] == EQUAL_ID

    def action_ids(self, v_c, t, seed):
        """(relations, destinations) arrays for the action set at (v_c, t).

        Pure function of its arguments plus graph/config, so update-time
        ActionTable reconstruction replays collection-time sets exactly.
        """
        rels, dsts = self.graph.out_edges_of(v_c, self.max_out, seed)
        if t < self.equal_min_step and len(rels) > 1:
            keep = rels != EQUAL_ID
            rels, dsts = rels[keep], dsts[keep]
        return rels, dsts

    def legal_actions(self, state, seed):
        """Actions for the current entity under seeded shuffle + truncation."""
        rels, dsts = self.action_ids(state.v_c, state.t, seed)
        return [Action(int(r), int(d), i) for i, (r, d) in enumerate(zip(rels, dsts))]

    def step(self, state, action, goal):
        """Apply one edge; returns (state', reward, done)."""
        if self.is_terminal(state):
            raise ContractError("cannot step a finished episode")
        if not self.graph.has_edge(state.v_c, action.relation, action.destination):
            raise ContractError(
                f"action ({action.relation}, {action.destination}) is not an "
                f"out-edge of entity {state.v_c}")
        new_state = replace(
            state,
            v_c=action.destination,
            ph=state.ph + ((state.v_c, action.relation, action.destination),),
            t=state.t + 1,
        )
        new_state.validate(self.max_steps)
        done = new_state.t >= self.max_steps or action.relation == EQUAL_ID
        if done:
            reward = self.positive_reward if new_state.v_c == goal else self.negative_reward
        else:
            reward = -self.step_penalty
        return new_state, float(reward), done


class MultiTurnSession:
    """Chains episodes within one dialog: each new user turn starts a fresh
    episode at the previous episode's final entity, with the history grown by
    the turns seen so far."""

    def __init__(self, env):
        self.env = env
        self._state = None

    def start(self, sample):
        self._state = self.env.reset(sample)
        return self._state

    def advance(self, utterance, final_state, speaker="user"):
        if self._state is None:
            raise ContractError("session not started")
        history = final_state.h + (f"{speaker}: {final_state.q}",)
        self._state = EnvState(tb=self.env.task_background, q=utterance, h=history,
                               v_c=final_state.v_c, ph=(), t=0)
        return self._state


def episode_trace_records(sample_id, states, actions, rewards):
    """Line-record form of one episode for trace export."""
    records = []
    for i, action in enumerate(actions):
        records.append({
            "sample_id": sample_id,
            "step": i,
            "v_c": states[i].v_c,
            "relation": action.relation,
            "destination": action.destination,
            "reward": rewards[i],
            "done": i == len(actions) - 1,
        })
    return records
