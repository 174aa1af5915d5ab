"""Pure-Python kernel implementations.

These are the fallback for the compiled extension in `_fast.pyx`. Both
backends implement byte-identical algorithms: the same FNV-1a hashing, the
same splitmix64 draws for negative sampling, the same update order. Tests
assert equivalence, so any change here must be mirrored in the .pyx file.
"""

import numpy as np

_U64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _is_word_byte(b):
    # [0-9A-Za-z_] plus any non-ASCII byte, so UTF-8 sequences stay in-token
    return (48 <= b <= 57) or (65 <= b <= 90) or (97 <= b <= 122) or b == 95 or b >= 128


def _fnv1a(h, data):
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


def _tokenize(data):
    """Offsets (start, end) of maximal word-byte runs in a bytes object."""
    spans = []
    start = -1
    for i, b in enumerate(data):
        if _is_word_byte(b):
            if start < 0:
                start = i
        elif start >= 0:
            spans.append((start, i))
            start = -1
    if start >= 0:
        spans.append((start, len(data)))
    return spans


def hash_ngram_features(data, dim, ngram_min=1, ngram_max=2):
    """Signed token-n-gram counts hashed into `dim` buckets (float32).

    Tokens are maximal runs of word bytes in the UTF-8 input; n-grams are
    hashed with FNV-1a over the token bytes joined by 0x1f. Bit 63 of the
    hash picks the sign, the remainder modulo `dim` picks the bucket.
    """
    out = np.zeros(dim, dtype=np.float32)
    spans = _tokenize(data)
    for n in range(ngram_min, ngram_max + 1):
        for i in range(len(spans) - n + 1):
            h = _FNV_OFFSET
            for j in range(n):
                if j:
                    h = ((h ^ 0x1F) * _FNV_PRIME) & _U64
                s, e = spans[i + j]
                h = _fnv1a(h, data[s:e])
            bucket = h % dim
            if (h >> 63) & 1:
                out[bucket] -= 1.0
            else:
                out[bucket] += 1.0
    return out


def gae_scan(rewards, values, next_values, dones, gamma, lam):
    """Backward recursion for generalized advantage estimation.

    dones cut the recursion at episode boundaries; returns (advantages,
    returns) with returns = advantages + values. All float64.
    """
    n = len(rewards)
    adv = np.zeros(n, dtype=np.float64)
    ret = np.zeros(n, dtype=np.float64)
    acc = 0.0
    for i in range(n - 1, -1, -1):
        nonterminal = 0.0 if dones[i] else 1.0
        delta = rewards[i] + gamma * next_values[i] * nonterminal - values[i]
        acc = delta + gamma * lam * nonterminal * acc
        adv[i] = acc
        ret[i] = acc + values[i]
    return adv, ret


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _U64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _U64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _U64
    z = z ^ (z >> 31)
    return state, z


def transe_sgd_epoch(ent, rel, heads, rels, tails, true_keys, n_entities,
                     margin, lr, norm_order, negatives, seed):
    """One epoch of per-triple margin-ranking SGD over pre-shuffled positives.

    Corrupts head or tail (coin from splitmix64(seed)), rejecting corruptions
    that hit a known-true key ("filtered" sampling, up to 64 redraws). Updates
    ent/rel in place; returns the mean hinge loss over all (pos, neg) pairs.
    """
    key_set = set(int(k) for k in true_keys)
    n_rel_vocab = rel.shape[0]
    state = int(seed) & _U64
    dim = ent.shape[1]
    total = 0.0
    count = 0
    for idx in range(len(heads)):
        h, r, t = int(heads[idx]), int(rels[idx]), int(tails[idx])
        for _ in range(negatives):
            state, z = _splitmix64(state)
            corrupt_head = (z & 1) == 0
            cand = h if corrupt_head else t
            for _attempt in range(64):
                state, z = _splitmix64(state)
                cand = int(z % n_entities)
                if corrupt_head:
                    key = (cand * n_rel_vocab + r) * n_entities + t
                    if cand != h and key not in key_set:
                        break
                else:
                    key = (h * n_rel_vocab + r) * n_entities + cand
                    if cand != t and key not in key_set:
                        break
            nh, nt = (cand, t) if corrupt_head else (h, cand)

            diff_pos = ent[h].astype(np.float64) + rel[r] - ent[t]
            diff_neg = ent[nh].astype(np.float64) + rel[r] - ent[nt]
            if norm_order == 1:
                d_pos = float(np.abs(diff_pos).sum())
                d_neg = float(np.abs(diff_neg).sum())
                g_pos = np.sign(diff_pos)
                g_neg = np.sign(diff_neg)
            else:
                d_pos = float(np.sqrt((diff_pos * diff_pos).sum()))
                d_neg = float(np.sqrt((diff_neg * diff_neg).sum()))
                g_pos = diff_pos / d_pos if d_pos > 0 else np.zeros(dim)
                g_neg = diff_neg / d_neg if d_neg > 0 else np.zeros(dim)
            loss = margin + d_pos - d_neg
            count += 1
            if loss > 0:
                total += loss
                ent[h] -= (lr * g_pos).astype(np.float32)
                ent[t] += (lr * g_pos).astype(np.float32)
                ent[nh] += (lr * g_neg).astype(np.float32)
                ent[nt] -= (lr * g_neg).astype(np.float32)
                rel[r] -= (lr * (g_pos - g_neg)).astype(np.float32)
    return total / count if count else 0.0
