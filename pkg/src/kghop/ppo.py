"""On-policy optimization: rollout collection, GAE, clipped-surrogate updates.

The buffer records, per transition, the current entity plus the shuffle seed
and action count used when its action set was built, so the exact ActionTable
(and therefore the old distribution) can be rebuilt at update time. Buffers
are discarded after the K update epochs; nothing is reused off-policy.
"""

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .agent import (AgentDims, Policy, actor_backward_batch, actor_forward,
                    actor_forward_batch, build_action_batch, build_action_table,
                    critic_backward_batch, critic_forward, critic_forward_batch,
                    init_params, sample_action, save_checkpoint)
from .arrayio import save_container
from .errors import ConfigError, ContractError
from .fte import render_fte

logger = logging.getLogger(__name__)


@dataclass
class PPOConfig:
    gamma: float = 0.95
    lam: float = 0.95
    clip_epsilon: float = 0.2
    k_epochs: int = 10
    minibatch: int = 1024
    actor_lr: float = 5e-5
    critic_lr: float = 5e-5
    entropy_coef: float = 0.01
    grad_clip_norm: float = 0.5
    adv_normalize: bool = True
    adv_normalize_minibatch: bool = False
    lr_decay: bool = True
    adam_eps: float = 1e-5
    explorations: int = 8
    max_patience: int = 5
    buffer_size: int = 4096
    max_iterations: int = 48
    max_env_steps: int = 200_000
    stop_at_valid_target: Optional[float] = None

    def validate(self):
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must be in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ConfigError("lambda must be in [0, 1]")
        if self.clip_epsilon <= 0:
            raise ConfigError("clip_epsilon must be > 0")
        if self.k_epochs < 1 or self.minibatch < 1 or self.buffer_size < 1:
            raise ConfigError("k_epochs, minibatch and buffer_size must be >= 1")
        if self.explorations < 1:
            raise ConfigError("explorations must be >= 1")

    def planned_updates(self):
        return self.max_iterations * self.k_epochs * math.ceil(self.buffer_size / self.minibatch)


@dataclass
class Transition:
    v_c: int
    s: np.ndarray
    fte: str
    log_prob: float  # chosen action's log-probability under the snapshot policy
    action_index: int
    mask: np.ndarray  # validity over the action table rows at selection time
    reward: float
    value: float
    s_next: np.ndarray
    done: bool
    shuffle_seed: int
    step: int  # t within the episode, needed to rebuild the action set


class RolloutBuffer:
    """Columnar store of whole episodes; capacity is a lower bound that
    collection rounds up to the next episode end."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.transitions = []
        self.advantages = None
        self.returns = None

    def append(self, tr):
        if tr.log_prob > 1e-12:
            raise ContractError("log-probabilities must be <= 0")
        self.transitions.append(tr)

    def __len__(self):
        return len(self.transitions)

    def finalize(self):
        t = self.transitions
        self.v_c = np.array([x.v_c for x in t], dtype=np.int64)
        self.states = np.stack([x.s for x in t])
        self.next_states = np.stack([x.s_next for x in t])
        self.log_probs = np.array([x.log_prob for x in t], dtype=np.float64)
        self.action_index = np.array([x.action_index for x in t], dtype=np.int64)
        self.rewards = np.array([x.reward for x in t], dtype=np.float64)
        self.values = np.array([x.value for x in t], dtype=np.float64)
        self.dones = np.array([x.done for x in t], dtype=np.uint8)
        self.shuffle_seeds = np.array([x.shuffle_seed for x in t], dtype=np.uint64)
        self.n_actions = np.array([int(x.mask.sum()) for x in t], dtype=np.int64)
        self.steps = np.array([x.step for x in t], dtype=np.int64)
        self.ftes = [x.fte for x in t]
        return self

    def save(self, path):
        meta = {"format": "kghop-rollouts", "size": len(self)}
        arrays = {
            "v_c": self.v_c, "states": self.states, "next_states": self.next_states,
            "log_probs": self.log_probs, "action_index": self.action_index,
            "rewards": self.rewards, "values": self.values, "dones": self.dones,
            "shuffle_seeds": self.shuffle_seeds, "n_actions": self.n_actions,
            "steps": self.steps,
            "ftes": np.frombuffer(json.dumps(self.ftes).encode("utf-8"), dtype=np.uint8),
        }
        if self.advantages is not None:
            arrays["advantages"] = self.advantages
            arrays["returns"] = self.returns
        save_container(path, meta, arrays)


def collect_rollouts(policy, env, encoder, samples, cfg, rng):
    """Sampled episodes (cfg.explorations per start sample) until the buffer
    holds at least cfg.buffer_size transitions, on a fixed policy snapshot."""
    buffer = RolloutBuffer(cfg.buffer_size)
    episodes = 0
    successes = 0
    graph = env.graph
    order = rng.permutation(len(samples))
    cursor = 0
    while len(buffer) < cfg.buffer_size:
        if cursor >= len(order):
            order = rng.permutation(len(samples))
            cursor = 0
        sample = samples[order[cursor]]
        cursor += 1
        for _ in range(cfg.explorations):
            state = env.reset(sample)
            fte = render_fte(state, graph)
            s = encoder.encode(fte)
            while True:
                seed = int(rng.integers(0, 2 ** 63))
                actions = env.legal_actions(state, seed)
                table = build_action_table(actions, policy.embeddings)
                dist = actor_forward(policy.actor, s, table)
                action, log_prob = sample_action(dist, rng, mode="sample")
                value = critic_forward(policy.critic, s.astype(policy.dtype))
                next_state, reward, done = env.step(state, action, sample.goal_id)
                fte_next = render_fte(next_state, graph)
                s_next = encoder.encode(fte_next)
                buffer.append(Transition(
                    v_c=state.v_c, s=s, fte=fte, log_prob=log_prob,
                    action_index=action.table_index, mask=table.mask.copy(),
                    reward=reward, value=value, s_next=s_next, done=done,
                    shuffle_seed=seed, step=state.t,
                ))
                state, s, fte = next_state, s_next, fte_next
                if done:
                    episodes += 1
                    if reward > 0:
                        successes += 1
                    break
            if len(buffer) >= cfg.buffer_size:
                break
    stats = {"episodes": episodes, "successes": successes,
             "success_rate": successes / episodes if episodes else 0.0}
    return buffer.finalize(), stats


def compute_gae(buffer, cfg):
    """Per-episode advantage recursion; optionally standardizes advantages
    over the whole buffer. Returns (advantages, returns) and stores both."""
    values = buffer.values
    next_values = np.zeros_like(values)
    not_done = buffer.dones[:-1] == 0
    next_values[:-1][not_done] = values[1:][not_done]
    adv, ret = kernels.gae_scan(buffer.rewards, values, next_values,
                                buffer.dones, cfg.gamma, cfg.lam)
    if cfg.adv_normalize and len(adv) > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    buffer.advantages = adv
    buffer.returns = ret
    return adv, ret


class AdamOptimizer:
    """Adam with optional linear LR decay to zero over the planned updates."""

    def __init__(self, params, lr, eps, total_steps, lr_decay, beta1=0.9, beta2=0.999):
        self.params = params
        self.lr0 = lr
        self.eps = eps
        self.total_steps = max(1, total_steps)
        self.lr_decay = lr_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.as_dict().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.as_dict().items()}

    def current_lr(self):
        if not self.lr_decay:
            return self.lr0
        frac = min(1.0, self.step_count / self.total_steps)
        return self.lr0 * (1.0 - frac)

    def step(self, grads):
        lr = self.current_lr()
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.step_count
        bc2 = 1.0 - b2 ** self.step_count
        for name, param in self.params.as_dict().items():
            g = grads[name].astype(param.dtype)
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            param -= update.astype(param.dtype)
        return lr

    def state_arrays(self, prefix):
        out = {f"{prefix}.step": np.array([self.step_count], dtype=np.int64)}
        for k, arr in self.m.items():
            out[f"{prefix}.m.{k}"] = arr
        for k, arr in self.v.items():
            out[f"{prefix}.v.{k}"] = arr
        return out


def clip_grad_norm(grads, max_norm):
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        grads = {k: g * factor for k, g in grads.items()}
    return grads, total


@dataclass
class UpdateStats:
    actor_loss: float = 0.0
    critic_loss: float = 0.0
    entropy: float = 0.0
    approx_kl: float = 0.0
    mean_ratio: float = 0.0
    actor_grad_norm: float = 0.0
    critic_grad_norm: float = 0.0
    lr_actor: float = 0.0
    lr_critic: float = 0.0
    n_minibatches: int = 0


def _rebuild_action_ids(env, buffer):
    rel_lists, dst_lists = [], []
    for i in range(len(buffer)):
        rels, dsts = env.action_ids(int(buffer.v_c[i]), int(buffer.steps[i]),
                                    int(buffer.shuffle_seeds[i]))
        if len(rels) != buffer.n_actions[i]:
            raise ContractError(
                f"action set reconstruction mismatch at transition {i}: "
                f"{len(rels)} actions vs recorded {buffer.n_actions[i]}")
        rel_lists.append(rels)
        dst_lists.append(dsts)
    return rel_lists, dst_lists


def update(policy, buffer, cfg, env, actor_opt, critic_opt, rng):
    """K epochs of clipped-surrogate SGD over shuffled minibatches."""
    if buffer.advantages is None:
        raise ContractError("compute_gae must run before update")
    n = len(buffer)
    rel_lists, dst_lists = _rebuild_action_ids(env, buffer)
    dtype = policy.dtype
    states_all = buffer.states.astype(dtype, copy=False)
    eps_clip = cfg.clip_epsilon
    stats = UpdateStats()
    sums = {"actor_loss": 0.0, "critic_loss": 0.0, "entropy": 0.0,
            "approx_kl": 0.0, "mean_ratio": 0.0,
            "actor_grad_norm": 0.0, "critic_grad_norm": 0.0}

    for _epoch in range(cfg.k_epochs):
        perm = rng.permutation(n)
        for lo in range(0, n, cfg.minibatch):
            mb = perm[lo: lo + cfg.minibatch]
            b = len(mb)
            rows, mask = build_action_batch([rel_lists[i] for i in mb],
                                            [dst_lists[i] for i in mb],
                                            policy.embeddings, dtype=dtype)
            states = states_all[mb]
            logits, probs, log_probs, cache = actor_forward_batch(
                policy.actor, states, rows, mask)
            idx = buffer.action_index[mb]
            logp_new = log_probs[np.arange(b), idx].astype(np.float64)
            logp_old = buffer.log_probs[mb]
            adv = buffer.advantages[mb]
            if cfg.adv_normalize_minibatch and b > 1:
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            ratio = np.exp(logp_new - logp_old)
            surr1 = ratio * adv
            surr2 = np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip) * adv
            surrogate = np.minimum(surr1, surr2)
            with np.errstate(invalid="ignore"):
                plogp = np.where(probs > 0, probs * np.where(mask, log_probs, 0.0), 0.0)
            ent = -plogp.sum(axis=1)
            actor_loss = -surrogate.mean() - cfg.entropy_coef * ent.mean()

            # d actor_loss / d logp_new: only the unclipped branch carries grad
            unclipped = surr1 <= surr2
            g_logp = np.where(unclipped, ratio * adv, 0.0) / b
            # d(-logp)/dlogits = -(onehot - p), scaled by g_logp per sample
            dlogits = g_logp[:, None] * probs
            dlogits[np.arange(b), idx] -= g_logp
            # entropy bonus: dH/dlogits = -p * (logp + H)
            with np.errstate(invalid="ignore"):
                dent = np.where(probs > 0,
                                -probs * (np.where(mask, log_probs, 0.0) + ent[:, None]),
                                0.0)
            dlogits -= (cfg.entropy_coef / b) * dent
            dlogits = dlogits.astype(dtype)
            agrads = actor_backward_batch(policy.actor, cache, rows, dlogits)
            agrads, a_norm = clip_grad_norm(agrads, cfg.grad_clip_norm)
            lr_a = actor_opt.step(agrads)

            values, vcache = critic_forward_batch(policy.critic, states)
            verr = values.astype(np.float64) - buffer.returns[mb]
            critic_loss = float((verr ** 2).mean())
            dvalues = (2.0 * verr / b).astype(dtype)
            cgrads = critic_backward_batch(policy.critic, vcache, dvalues)
            cgrads, c_norm = clip_grad_norm(cgrads, cfg.grad_clip_norm)
            lr_c = critic_opt.step(cgrads)

            sums["actor_loss"] += float(actor_loss)
            sums["critic_loss"] += critic_loss
            sums["entropy"] += float(ent.mean())
            sums["approx_kl"] += float((logp_old - logp_new).mean())
            sums["mean_ratio"] += float(ratio.mean())
            sums["actor_grad_norm"] += a_norm
            sums["critic_grad_norm"] += c_norm
            stats.n_minibatches += 1
            stats.lr_actor = lr_a
            stats.lr_critic = lr_c

    if not np.isfinite(sums["actor_loss"]) or not np.isfinite(sums["critic_loss"]):
        raise ContractError("non-finite loss during update; diagnostics: " + repr(sums))
    k = stats.n_minibatches
    for name in ("actor_loss", "critic_loss", "entropy", "approx_kl", "mean_ratio",
                 "actor_grad_norm", "critic_grad_norm"):
        setattr(stats, name, sums[name] / k)
    return stats


@dataclass
class TrainResult:
    best_policy: Policy
    last_policy: Policy
    history: list
    env_steps: int
    best_metric: float
    stop_reason: str


def _default_valid_fn(env, encoder, eval_seed):
    from .beam import evaluate  # local import: beam depends on agent, not ppo

    def run(policy, samples):
        report = evaluate(policy, encoder, env, samples, ks=(1,), width=1, seed=eval_seed)
        return report.target_at_k[1], report.path_at_k[1]

    return run


def train_loop(cfg, env, embeddings, encoder, train_samples, valid_samples,
               dims=None, seed=0, dtype=np.float32, eval_seed=1234,
               run_dir=None, valid_fn=None, log_stream=None):
    """Alternate collect / GAE / update; keep the checkpoint with the best
    greedy validation target@1; stop on patience, step budget, or iteration
    budget."""
    cfg.validate()
    if dims is None:
        dims = AgentDims(d_s=encoder.dim,
                         d_action=embeddings.dim_relation + embeddings.dim_entity)
    ss = np.random.SeedSequence(seed)
    init_ss, rollout_ss, update_ss = ss.spawn(3)
    actor, critic = init_params(dims, init_ss, dtype=dtype)
    policy = Policy(dims=dims, actor=actor, critic=critic,
                    embeddings=embeddings, dtype=np.dtype(dtype))
    rollout_rng = np.random.default_rng(rollout_ss)
    update_rng = np.random.default_rng(update_ss)
    actor_opt = AdamOptimizer(policy.actor, cfg.actor_lr, cfg.adam_eps,
                              cfg.planned_updates(), cfg.lr_decay)
    critic_opt = AdamOptimizer(policy.critic, cfg.critic_lr, cfg.adam_eps,
                               cfg.planned_updates(), cfg.lr_decay)
    if valid_fn is None:
        valid_fn = _default_valid_fn(env, encoder, eval_seed)

    history = []
    best_metric = -math.inf
    best_policy = policy.copy()
    patience = 0
    env_steps = 0
    stop_reason = "max_iterations"
    t0 = time.monotonic()

    for iteration in range(cfg.max_iterations):
        buffer, roll_stats = collect_rollouts(policy, env, encoder,
                                              train_samples, cfg, rollout_rng)
        env_steps += len(buffer)
        compute_gae(buffer, cfg)
        stats = update(policy, buffer, cfg, env, actor_opt, critic_opt, update_rng)
        valid_target, valid_path = valid_fn(policy, valid_samples)
        improved = valid_target > best_metric
        if improved:
            best_metric = valid_target
            best_policy = policy.copy()
            patience = 0
        else:
            patience += 1
        record = {
            "iteration": iteration,
            "env_steps": env_steps,
            "episodes": roll_stats["episodes"],
            "train_success_rate": round(roll_stats["success_rate"], 6),
            "actor_loss": round(stats.actor_loss, 8),
            "critic_loss": round(stats.critic_loss, 8),
            "entropy": round(stats.entropy, 8),
            "approx_kl": round(stats.approx_kl, 8),
            "mean_ratio": round(stats.mean_ratio, 8),
            "lr_actor": stats.lr_actor,
            "lr_critic": stats.lr_critic,
            "valid_path_at_1": round(valid_path, 6),
            "valid_target_at_1": round(valid_target, 6),
            "best_valid_target_at_1": round(best_metric, 6),
            "wall_clock": round(time.monotonic() - t0, 3),
        }
        history.append(record)
        if log_stream is not None:
            log_stream.write(json.dumps(record) + "\n")
            log_stream.flush()
        logger.info("iter %d steps %d valid target@1 %.3f (best %.3f)",
                    iteration, env_steps, valid_target, best_metric)
        if run_dir is not None:
            save_checkpoint(f"{run_dir}/last.ckpt", policy,
                            meta={"iteration": iteration, "valid_target_at_1": valid_target})
            if improved:
                save_checkpoint(f"{run_dir}/best.ckpt", best_policy,
                                meta={"iteration": iteration, "valid_target_at_1": valid_target})
        if cfg.stop_at_valid_target is not None and valid_target >= cfg.stop_at_valid_target:
            stop_reason = "target_reached"
            break
        if patience >= cfg.max_patience:
            stop_reason = "patience"
            break
        if env_steps >= cfg.max_env_steps:
            stop_reason = "env_steps"
            break

    return TrainResult(best_policy=best_policy, last_policy=policy, history=history,
                       env_steps=env_steps, best_metric=best_metric, stop_reason=stop_reason)
