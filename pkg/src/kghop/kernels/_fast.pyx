# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel implementations; see _pure.py for the reference semantics.

Integer paths (hashing, splitmix64 draws, rejection sampling) are exact
mirrors of the pure backend. Float accumulation order may differ at machine
epsilon (numpy uses pairwise summation, these loops are sequential).
"""

import numpy as np

from libc.math cimport sqrt, fabs

ctypedef unsigned long long u64

cdef u64 U64_MASK = <u64> 0xFFFFFFFFFFFFFFFFULL
cdef u64 FNV_OFFSET = <u64> 0xCBF29CE484222325ULL
cdef u64 FNV_PRIME = <u64> 0x100000001B3ULL


cdef inline bint _is_word_byte(unsigned char b) nogil:
    return (48 <= b <= 57) or (65 <= b <= 90) or (97 <= b <= 122) or b == 95 or b >= 128


cdef inline u64 _splitmix64_next(u64* state) nogil:
    cdef u64 z
    state[0] = state[0] + <u64> 0x9E3779B97F4A7C15ULL
    z = state[0]
    z = (z ^ (z >> 30)) * <u64> 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <u64> 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def hash_ngram_features(bytes data, int dim, int ngram_min=1, int ngram_max=2):
    cdef const unsigned char[::1] buf = data
    cdef Py_ssize_t n_bytes = buf.shape[0]
    out_arr = np.zeros(dim, dtype=np.float32)
    cdef float[::1] out = out_arr
    if n_bytes == 0:
        return out_arr

    starts_arr = np.empty(n_bytes, dtype=np.intp)
    ends_arr = np.empty(n_bytes, dtype=np.intp)
    cdef Py_ssize_t[::1] starts = starts_arr
    cdef Py_ssize_t[::1] ends = ends_arr
    cdef Py_ssize_t n_tokens = 0, start = -1, i, j, k
    cdef int n
    cdef u64 h
    cdef Py_ssize_t bucket

    with nogil:
        for i in range(n_bytes):
            if _is_word_byte(buf[i]):
                if start < 0:
                    start = i
            elif start >= 0:
                starts[n_tokens] = start
                ends[n_tokens] = i
                n_tokens += 1
                start = -1
        if start >= 0:
            starts[n_tokens] = start
            ends[n_tokens] = n_bytes
            n_tokens += 1

        for n in range(ngram_min, ngram_max + 1):
            for i in range(n_tokens - n + 1):
                h = FNV_OFFSET
                for j in range(n):
                    if j:
                        h = (h ^ <u64> 0x1F) * FNV_PRIME
                    for k in range(starts[i + j], ends[i + j]):
                        h = (h ^ <u64> buf[k]) * FNV_PRIME
                bucket = <Py_ssize_t> (h % <u64> dim)
                if (h >> 63) & 1:
                    out[bucket] -= 1.0
                else:
                    out[bucket] += 1.0
    return out_arr


def gae_scan(double[::1] rewards, double[::1] values, double[::1] next_values,
             unsigned char[::1] dones, double gamma, double lam):
    cdef Py_ssize_t n = rewards.shape[0]
    adv_arr = np.zeros(n, dtype=np.float64)
    ret_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] adv = adv_arr
    cdef double[::1] ret = ret_arr
    cdef double acc = 0.0, nonterminal, delta
    cdef Py_ssize_t i
    with nogil:
        for i in range(n - 1, -1, -1):
            nonterminal = 0.0 if dones[i] else 1.0
            delta = rewards[i] + gamma * next_values[i] * nonterminal - values[i]
            acc = delta + gamma * lam * nonterminal * acc
            adv[i] = acc
            ret[i] = acc + values[i]
    return adv_arr, ret_arr


cdef inline bint _key_known(const u64[::1] keys, u64 key) nogil:
    cdef Py_ssize_t lo = 0, hi = keys.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo < keys.shape[0] and keys[lo] == key


def transe_sgd_epoch(float[:, ::1] ent, float[:, ::1] rel,
                     long long[::1] heads, long long[::1] rels, long long[::1] tails,
                     const u64[::1] true_keys, long long n_entities,
                     double margin, double lr, int norm_order, int negatives,
                     u64 seed):
    cdef Py_ssize_t n_pos = heads.shape[0]
    cdef Py_ssize_t dim = ent.shape[1]
    cdef u64 n_rel_vocab = <u64> rel.shape[0]
    cdef u64 state = seed
    cdef u64 z, key
    cdef double total = 0.0
    cdef long long count = 0
    cdef Py_ssize_t idx, k
    cdef int neg_i, attempt
    cdef bint corrupt_head
    cdef long long h, r, t, cand, nh, nt
    cdef double d_pos, d_neg, loss, dp, dn, gp, gn
    cdef double[::1] diff_pos = np.empty(dim, dtype=np.float64)
    cdef double[::1] diff_neg = np.empty(dim, dtype=np.float64)

    with nogil:
        for idx in range(n_pos):
            h = heads[idx]
            r = rels[idx]
            t = tails[idx]
            for neg_i in range(negatives):
                z = _splitmix64_next(&state)
                corrupt_head = (z & 1) == 0
                cand = h if corrupt_head else t
                for attempt in range(64):
                    z = _splitmix64_next(&state)
                    cand = <long long> (z % <u64> n_entities)
                    if corrupt_head:
                        key = (<u64> cand * n_rel_vocab + <u64> r) * <u64> n_entities + <u64> t
                        if cand != h and not _key_known(true_keys, key):
                            break
                    else:
                        key = (<u64> h * n_rel_vocab + <u64> r) * <u64> n_entities + <u64> cand
                        if cand != t and not _key_known(true_keys, key):
                            break
                if corrupt_head:
                    nh = cand
                    nt = t
                else:
                    nh = h
                    nt = cand

                d_pos = 0.0
                d_neg = 0.0
                if norm_order == 1:
                    for k in range(dim):
                        dp = (<double> ent[h, k] + <double> rel[r, k]) - <double> ent[t, k]
                        dn = (<double> ent[nh, k] + <double> rel[r, k]) - <double> ent[nt, k]
                        diff_pos[k] = dp
                        diff_neg[k] = dn
                        d_pos += fabs(dp)
                        d_neg += fabs(dn)
                else:
                    for k in range(dim):
                        dp = (<double> ent[h, k] + <double> rel[r, k]) - <double> ent[t, k]
                        dn = (<double> ent[nh, k] + <double> rel[r, k]) - <double> ent[nt, k]
                        diff_pos[k] = dp
                        diff_neg[k] = dn
                        d_pos += dp * dp
                        d_neg += dn * dn
                    d_pos = sqrt(d_pos)
                    d_neg = sqrt(d_neg)

                loss = margin + d_pos - d_neg
                count += 1
                if loss > 0.0:
                    total += loss
                    for k in range(dim):
                        if norm_order == 1:
                            gp = 1.0 if diff_pos[k] > 0 else (-1.0 if diff_pos[k] < 0 else 0.0)
                            gn = 1.0 if diff_neg[k] > 0 else (-1.0 if diff_neg[k] < 0 else 0.0)
                        else:
                            gp = diff_pos[k] / d_pos if d_pos > 0 else 0.0
                            gn = diff_neg[k] / d_neg if d_neg > 0 else 0.0
                        ent[h, k] = ent[h, k] - <float> (lr * gp)
                        ent[t, k] = ent[t, k] + <float> (lr * gp)
                        ent[nh, k] = ent[nh, k] + <float> (lr * gn)
                        ent[nt, k] = ent[nt, k] - <float> (lr * gn)
                        rel[r, k] = rel[r, k] - <float> (lr * (gp - gn))
    return total / count if count else 0.0
