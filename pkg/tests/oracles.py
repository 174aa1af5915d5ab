"""Independent reference implementations used to check the real code paths.

Everything here is deliberately written the slow, obvious way (scalar loops,
exhaustive enumeration) and must stay free of imports from the modules it
checks, beyond plain data containers.
"""

import math

import numpy as np


def triple_distance(ent, rel, h, r, t, norm_order=2):
    total = 0.0
    for k in range(ent.shape[1]):
        d = float(ent[h][k]) + float(rel[r][k]) - float(ent[t][k])
        total += abs(d) if norm_order == 1 else d * d
    return total if norm_order == 1 else math.sqrt(total)


def mean_filtered_tail_rank(ent, rel, test_triples, known_triples, norm_order=2):
    """1-based rank of each true tail among all entities, skipping candidates
    that form another known-true triple; exhaustive per-candidate scoring."""
    known = set(known_triples)
    ranks = []
    for h, r, t in test_triples:
        true_score = triple_distance(ent, rel, h, r, t, norm_order)
        rank = 1
        for cand in range(ent.shape[0]):
            if cand == t or (h, r, cand) in known:
                continue
            if triple_distance(ent, rel, h, r, cand, norm_order) < true_score:
                rank += 1
        ranks.append(rank)
    return sum(ranks) / len(ranks)


def scalar_actor_forward(actor, s, rows, mask):
    """Scalar-loop recomputation of the path-aware actor distribution."""
    def mat_vec(w, b, x):
        out = []
        for i in range(w.shape[0]):
            acc = float(b[i])
            for j in range(w.shape[1]):
                acc += float(w[i][j]) * float(x[j])
            out.append(acc)
        return out

    h1 = [math.tanh(v) for v in mat_vec(actor.W1, actor.b1, s)]
    h2 = [math.tanh(v) for v in mat_vec(actor.W2, actor.b2, h1)]
    z = mat_vec(actor.W3, actor.b3, h2)
    logits = []
    for i in range(rows.shape[0]):
        if not mask[i]:
            logits.append(-math.inf)
            continue
        acc = 0.0
        for j in range(rows.shape[1]):
            acc += float(rows[i][j]) * z[j]
        logits.append(acc)
    m = max(l for l in logits if l != -math.inf)
    exps = [math.exp(l - m) if l != -math.inf else 0.0 for l in logits]
    total = sum(exps)
    return [e / total for e in exps], logits


def scalar_critic_forward(critic, s):
    def mat_vec(w, b, x):
        out = []
        for i in range(w.shape[0]):
            acc = float(b[i])
            for j in range(w.shape[1]):
                acc += float(w[i][j]) * float(x[j])
            out.append(acc)
        return out

    h1 = [math.tanh(v) for v in mat_vec(critic.W1, critic.b1, s)]
    h2 = [math.tanh(v) for v in mat_vec(critic.W2, critic.b2, h1)]
    return mat_vec(critic.W3, critic.b3, h2)[0]


def finite_difference(fn, arr, step=1e-5):
    """Central differences of scalar fn wrt every element of arr (in place
    perturbation, restored afterwards)."""
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn()
        flat[i] = orig - step
        lo = fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def naive_gae(rewards, values, next_values, dones, gamma, lam):
    """Direct evaluation of the exponentially weighted advantage sum."""
    n = len(rewards)
    deltas = [rewards[t] + gamma * next_values[t] * (0.0 if dones[t] else 1.0) - values[t]
              for t in range(n)]
    adv = []
    for t in range(n):
        acc = 0.0
        weight = 1.0
        for l in range(t, n):
            acc += weight * deltas[l]
            if dones[l]:
                break
            weight *= gamma * lam
        adv.append(acc)
    returns = [a + v for a, v in zip(adv, values)]
    return np.array(adv), np.array(returns)


def enumerate_paths(policy_logp_fn, env, sample, seed):
    """Exhaustive enumeration of complete episodes with cumulative scores.

    policy_logp_fn(state, actions) -> per-action log-probs; expansion and
    ordering logic is independent of the beam implementation.
    """
    from kghop.env import derive_action_seed

    complete = []

    def walk(state, edges, score):
        seed_vt = derive_action_seed(seed, state.v_c, state.t)
        actions = env.legal_actions(state, seed_vt)
        logps = policy_logp_fn(state, actions)
        for action, logp in zip(actions, logps):
            new_state, _, done = env.step(state, action, sample.goal_id)
            new_edges = edges + ((state.v_c, action.relation, action.destination),)
            if done:
                complete.append((score + logp, new_edges))
            else:
                walk(new_state, new_edges, score + logp)

    walk(env.reset(sample), (), 0.0)
    complete.sort(key=lambda item: (-item[0], tuple((r, d) for _, r, d in item[1])))
    return complete
