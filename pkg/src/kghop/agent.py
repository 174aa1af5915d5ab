"""Path-aware actor and value critic over frozen state/edge embeddings.

The actor is a 3-layer tanh MLP whose output vector is dotted against the
stacked out-edge embeddings [relation ; destination] to produce one logit per
candidate edge; invalid (pad) rows are masked to -inf before the softmax.
The critic is a 3-layer tanh MLP with a single scalar output. Both are
implemented directly in numpy with hand-written backward passes, which the
test suite checks against central finite differences.

The single-state forward normalizes the softmax with math.fsum, which is
exactly rounded and therefore permutation-invariant: shuffling the action
rows permutes the probabilities bit-for-bit. Batched forwards use ordinary
BLAS reductions.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .arrayio import load_container, save_container
from .errors import ContractError, ParseError
from .env import Action

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")


@dataclass
class AgentDims:
    d_s: int
    h1: int = 512
    h2: int = 512
    d_action: int = 400  # d_r + d_e

    def validate(self):
        if min(self.d_s, self.h1, self.h2, self.d_action) <= 0:
            raise ContractError("all agent dims must be positive")


@dataclass
class MLPParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def as_dict(self):
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self):
        return MLPParams(**{k: v.copy() for k, v in self.as_dict().items()})


@dataclass
class ActionTable:
    """Per-state matrix of candidate edge embeddings plus validity mask."""

    rows: np.ndarray  # (k, d_action)
    mask: np.ndarray  # (k,) bool, True = valid
    actions: list  # Action objects for the valid rows, in row order

    def __post_init__(self):
        if self.rows.ndim != 2 or len(self.mask) != self.rows.shape[0]:
            raise ContractError("action table rows/mask shapes disagree")
        if not self.mask.any():
            raise ContractError("action table must contain at least one valid row")


@dataclass
class ActionDistribution:
    logits: np.ndarray  # (k,) float64, -inf at masked rows
    probs: np.ndarray  # (k,) float64, exact zeros at masked rows
    log_probs: np.ndarray  # (k,) float64, -inf at masked rows
    actions: list


@dataclass
class Policy:
    """Trainable MLPs plus the frozen embedding tables they act over."""

    dims: AgentDims
    actor: MLPParams
    critic: MLPParams
    embeddings: "EmbeddingTable"  # noqa: F821 - transe.EmbeddingTable
    dtype: np.dtype = np.dtype(np.float32)

    def copy(self):
        return Policy(self.dims, self.actor.copy(), self.critic.copy(),
                      self.embeddings, self.dtype)


def _orthogonal(rows, cols, gain, rng):
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def _init_mlp(rng, d_in, h1, h2, d_out, out_gain, dtype):
    hidden_gain = math.sqrt(2.0)
    return MLPParams(
        W1=_orthogonal(h1, d_in, hidden_gain, rng).astype(dtype),
        b1=np.zeros(h1, dtype=dtype),
        W2=_orthogonal(h2, h1, hidden_gain, rng).astype(dtype),
        b2=np.zeros(h2, dtype=dtype),
        W3=_orthogonal(d_out, h2, out_gain, rng).astype(dtype),
        b3=np.zeros(d_out, dtype=dtype),
    )


def init_params(dims, seed, dtype=np.float32):
    """Orthogonal init: gain sqrt(2) on hidden layers, 0.01 on the actor
    output, 1.0 on the critic output; zero biases; deterministic per seed."""
    dims.validate()
    rng = np.random.default_rng(seed)
    actor = _init_mlp(rng, dims.d_s, dims.h1, dims.h2, dims.d_action, 0.01, dtype)
    critic = _init_mlp(rng, dims.d_s, dims.h1, dims.h2, 1, 1.0, dtype)
    return actor, critic


def build_action_table(actions, embeddings, dtype=np.float64):
    """Stack [relation ; destination] embedding rows for the given actions."""
    rels = np.array([a.relation for a in actions], dtype=np.int64)
    dsts = np.array([a.destination for a in actions], dtype=np.int64)
    rows = np.concatenate(
        [embeddings.relation_vectors[rels], embeddings.entity_vectors[dsts]], axis=1
    ).astype(dtype)
    return ActionTable(rows=rows, mask=np.ones(len(actions), dtype=bool), actions=list(actions))


def build_action_batch(rel_lists, dst_lists, embeddings, dtype=np.float32):
    """Pad per-state edge id arrays to a common width and gather embeddings.

    Returns (rows (b, k_max, d_action), mask (b, k_max)). Pad rows point at
    id 0; they are masked so neither forward nor backward ever reads them
    meaningfully.
    """
    b = len(rel_lists)
    k_max = max(len(r) for r in rel_lists)
    rels = np.zeros((b, k_max), dtype=np.int64)
    dsts = np.zeros((b, k_max), dtype=np.int64)
    mask = np.zeros((b, k_max), dtype=bool)
    for i, (r, d) in enumerate(zip(rel_lists, dst_lists)):
        rels[i, : len(r)] = r
        dsts[i, : len(d)] = d
        mask[i, : len(r)] = True
    rows = np.concatenate(
        [embeddings.relation_vectors[rels], embeddings.entity_vectors[dsts]], axis=2
    ).astype(dtype)
    return rows, mask


def mlp3_forward(p, x):
    """x: (d_in,) or (b, d_in). Returns (output, cache for backward)."""
    h1 = np.tanh(x @ p.W1.T + p.b1)
    h2 = np.tanh(h1 @ p.W2.T + p.b2)
    out = h2 @ p.W3.T + p.b3
    return out, (x, h1, h2)


def mlp3_backward(p, cache, dout):
    """Gradients of a scalar loss wrt all parameters, given d loss / d out.

    Batched: dout (b, d_out) with cache from a batched forward. Also works
    for single states via reshape upstream.
    """
    x, h1, h2 = cache
    grads = {}
    grads["W3"] = dout.T @ h2
    grads["b3"] = dout.sum(axis=0)
    dh2 = dout @ p.W3
    da2 = dh2 * (1.0 - h2 * h2)
    grads["W2"] = da2.T @ h1
    grads["b2"] = da2.sum(axis=0)
    dh1 = da2 @ p.W2
    da1 = dh1 * (1.0 - h1 * h1)
    grads["W1"] = da1.T @ x
    grads["b1"] = da1.sum(axis=0)
    return grads


def actor_forward(actor, s, table):
    """Masked action distribution for one state (float64, fsum-normalized)."""
    if s.shape[-1] != actor.W1.shape[1]:
        raise ContractError(f"state dim {s.shape[-1]} != actor input {actor.W1.shape[1]}")
    if table.rows.shape[1] != actor.W3.shape[0]:
        raise ContractError(
            f"action row dim {table.rows.shape[1]} != actor output {actor.W3.shape[0]}")
    z, _ = mlp3_forward(actor, np.asarray(s, dtype=np.float64))
    raw = table.rows.astype(np.float64) @ z
    logits = np.where(table.mask, raw, -np.inf)
    m = logits[table.mask].max()
    exps = np.where(table.mask, np.exp(logits - m), 0.0)
    total = math.fsum(exps[table.mask])
    probs = exps / total
    log_z = math.log(total) + m
    log_probs = np.where(table.mask, logits - log_z, -np.inf)
    return ActionDistribution(logits=logits, probs=probs, log_probs=log_probs,
                              actions=table.actions)


def actor_forward_batch(actor, states, rows, mask):
    """Batched logits/log-probs. states (b, d_s), rows (b, k, d_a), mask (b, k)."""
    z, cache = mlp3_forward(actor, states)
    raw = np.matmul(rows, z[:, :, None])[:, :, 0]
    logits = np.where(mask, raw, -np.inf)
    m = logits.max(axis=1, keepdims=True)
    exps = np.where(mask, np.exp(logits - m), 0.0)
    total = exps.sum(axis=1, keepdims=True)
    probs = exps / total
    log_probs = np.where(mask, logits - (np.log(total) + m), -np.inf)
    return logits, probs, log_probs, cache


def actor_backward_batch(actor, cache, rows, dlogits):
    """Backprop dlogits (b, k) through the action-table dot and the MLP."""
    dz = np.matmul(dlogits[:, None, :], rows)[:, 0, :]
    return mlp3_backward(actor, cache, dz)


def critic_forward(critic, s):
    """Scalar value for (d_s,) input, vector for (b, d_s) input."""
    s = np.asarray(s)
    single = s.ndim == 1
    out, _ = mlp3_forward(critic, s[None, :] if single else s)
    values = out[:, 0]
    return float(values[0]) if single else values


def critic_forward_batch(critic, states):
    out, cache = mlp3_forward(critic, states)
    return out[:, 0], cache


def critic_backward_batch(critic, cache, dvalues):
    return mlp3_backward(critic, cache, dvalues[:, None])


def sample_action(dist, rng=None, mode="sample"):
    """Draw (Action, log_prob). Greedy breaks ties toward the lowest index."""
    if mode == "greedy":
        idx = int(np.argmax(dist.probs))
    elif mode == "sample":
        if rng is None:
            raise ContractError("sampling mode requires an rng")
        cum = np.cumsum(dist.probs)
        idx = int(np.searchsorted(cum, rng.random(), side="right"))
        if idx >= len(cum) or dist.probs[idx] == 0.0:
            idx = int(np.flatnonzero(dist.probs > 0)[-1])
    else:
        raise ContractError(f"unknown sampling mode {mode!r}")
    return dist.actions[idx], float(dist.log_probs[idx])


def log_prob_grads(actor, s, table, index):
    """Gradients of log pi(action_index | s) wrt every actor parameter."""
    states = np.asarray(s, dtype=np.float64)[None, :]
    rows = table.rows.astype(np.float64)[None, :, :]
    mask = table.mask[None, :]
    _, probs, _, cache = actor_forward_batch(actor, states, rows, mask)
    dlogits = -probs
    dlogits[0, index] += 1.0
    dlogits[~mask] = 0.0
    return actor_backward_batch(actor, cache, rows, dlogits)


def value_grads(critic, s):
    """Gradients of V(s) wrt every critic parameter."""
    states = np.asarray(s, dtype=np.float64)[None, :]
    _, cache = critic_forward_batch(critic, states)
    return critic_backward_batch(critic, cache, np.ones(1, dtype=np.float64))


def entropy(dist):
    p = dist.probs
    valid = p > 0
    return -float(np.sum(p[valid] * np.log(p[valid])))


CHECKPOINT_FORMAT = "kghop-checkpoint"


def save_checkpoint(path, policy, meta=None, optimizer_arrays=None):
    """Versioned checkpoint: dims, seed lineage, weights as little-endian
    float32, optional optimizer state."""
    full_meta = {
        "format": CHECKPOINT_FORMAT,
        "dims": vars(policy.dims),
        "dtype": policy.dtype.name if hasattr(policy.dtype, "name") else str(policy.dtype),
        "embedding_vocab_hash": policy.embeddings.vocab_hash,
        "d_e": policy.embeddings.dim_entity,
        "d_r": policy.embeddings.dim_relation,
    }
    full_meta.update(meta or {})
    arrays = {}
    for prefix, params in (("actor", policy.actor), ("critic", policy.critic)):
        for name, arr in params.as_dict().items():
            arrays[f"{prefix}.{name}"] = arr.astype("<f4")
    for name, arr in (optimizer_arrays or {}).items():
        arrays[f"opt.{name}"] = arr
    save_container(path, full_meta, arrays)


def load_checkpoint(path, embeddings, dtype=np.float32):
    """Load and validate a checkpoint against the given embedding tables."""
    meta, arrays = load_container(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"{path}: not a policy checkpoint")
    dims = AgentDims(**meta["dims"])
    if embeddings.vocab_hash and meta.get("embedding_vocab_hash") \
            and embeddings.vocab_hash != meta["embedding_vocab_hash"]:
        raise ParseError(f"{path}: checkpoint was trained with different embeddings")
    if dims.d_action != embeddings.dim_relation + embeddings.dim_entity:
        raise ParseError(f"{path}: action dim does not match embedding dims")
    expected = {
        "W1": (dims.h1, dims.d_s), "b1": (dims.h1,),
        "W2": (dims.h2, dims.h1), "b2": (dims.h2,),
    }
    params = {}
    for prefix, d_out in (("actor", dims.d_action), ("critic", 1)):
        shapes = dict(expected, W3=(d_out, dims.h2), b3=(d_out,))
        fields = {}
        for name, shape in shapes.items():
            arr = arrays.get(f"{prefix}.{name}")
            if arr is None or arr.shape != shape:
                raise ParseError(f"{path}: missing or misshapen {prefix}.{name}")
            fields[name] = arr.astype(dtype)
        params[prefix] = MLPParams(**fields)
    policy = Policy(dims=dims, actor=params["actor"], critic=params["critic"],
                    embeddings=embeddings, dtype=np.dtype(dtype))
    return policy, meta
