"""Forward and forward-backward kernels over batches of encoded strings.

Strings arrive as one flat ``codes`` array of machine symbol indices plus an
``offsets`` array (string ``u`` is ``codes[offsets[u]:offsets[u+1]]``).  A
symbol index of -1 means "not emittable by this machine".

Both recursions are scaled: the state vector is renormalised at every
position and the log of each scale factor is accumulated, so long strings
never underflow.  Each kernel has a numba version and a numpy version with
identical results up to rounding; ``_settings`` picks one.
"""

import math

import numpy as np

from . import _settings

# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if _settings.HAS_NUMBA:
    from numba import njit

    @njit(**_settings.numba_default)
    def _forward_nb(codes, offsets, init, final, sym_ptr, e_src, e_dst, e_prob):
        n = offsets.shape[0] - 1
        m = init.shape[0]
        out = np.empty(n)
        alpha = np.empty(m)
        nxt = np.empty(m)
        for u in range(n):
            for q in range(m):
                alpha[q] = init[q]
            logp = 0.0
            dead = False
            for pos in range(offsets[u], offsets[u + 1]):
                s = codes[pos]
                if s < 0:
                    dead = True
                    break
                for q in range(m):
                    nxt[q] = 0.0
                for e in range(sym_ptr[s], sym_ptr[s + 1]):
                    nxt[e_dst[e]] += alpha[e_src[e]] * e_prob[e]
                c = 0.0
                for q in range(m):
                    c += nxt[q]
                if c <= 0.0:
                    dead = True
                    break
                logp += math.log(c)
                for q in range(m):
                    alpha[q] = nxt[q] / c
            if dead:
                out[u] = -np.inf
                continue
            c = 0.0
            for q in range(m):
                c += alpha[q] * final[q]
            out[u] = logp + math.log(c) if c > 0.0 else -np.inf
        return out

    @njit(**_settings.numba_default)
    def _counts_nb(codes, offsets, weights, init, final, sym_ptr, e_src, e_dst,
                   e_prob, cnt_edge, cnt_final, cnt_init):
        n = offsets.shape[0] - 1
        m = init.shape[0]
        beta = np.empty(m)
        prev = np.empty(m)
        for u in range(n):
            w = weights[u]
            if w == 0.0:
                continue
            start = offsets[u]
            length = offsets[u + 1] - start
            alphas = np.empty((length + 1, m))
            scales = np.empty(length + 1)
            for q in range(m):
                alphas[0, q] = init[q]
            dead = False
            for l in range(1, length + 1):
                s = codes[start + l - 1]
                if s < 0:
                    dead = True
                    break
                for q in range(m):
                    alphas[l, q] = 0.0
                for e in range(sym_ptr[s], sym_ptr[s + 1]):
                    alphas[l, e_dst[e]] += alphas[l - 1, e_src[e]] * e_prob[e]
                c = 0.0
                for q in range(m):
                    c += alphas[l, q]
                if c <= 0.0:
                    dead = True
                    break
                scales[l] = c
                for q in range(m):
                    alphas[l, q] /= c
            if dead:
                continue
            c_fin = 0.0
            for q in range(m):
                c_fin += alphas[length, q] * final[q]
            if c_fin <= 0.0:
                continue
            for q in range(m):
                beta[q] = final[q] / c_fin
                cnt_final[q] += w * alphas[length, q] * beta[q]
            for l in range(length, 0, -1):
                s = codes[start + l - 1]
                c = scales[l]
                for q in range(m):
                    prev[q] = 0.0
                for e in range(sym_ptr[s], sym_ptr[s + 1]):
                    tb = e_prob[e] * beta[e_dst[e]]
                    cnt_edge[e] += w * alphas[l - 1, e_src[e]] * tb / c
                    prev[e_src[e]] += tb
                for q in range(m):
                    beta[q] = prev[q] / c
            for q in range(m):
                cnt_init[q] += w * init[q] * beta[q]


# ---------------------------------------------------------------------------
# numpy kernels
# ---------------------------------------------------------------------------

def _length_order(offsets):
    lengths = np.diff(offsets)
    order = np.argsort(-lengths, kind="stable")
    sorted_len = lengths[order]
    max_len = int(sorted_len[0]) if sorted_len.size else 0
    # n_ge[l] = number of strings with length >= l; they form a prefix of order
    n_ge = np.searchsorted(-sorted_len, -np.arange(max_len + 2), side="right")
    return lengths, order, max_len, n_ge


def _grouped_step(vectors, syms, dense):
    """Row-wise ``vectors[i] @ dense[syms[i]]``; rows with sym < 0 become 0."""
    out = np.zeros_like(vectors)
    if syms.size == 0:
        return out
    idx = np.argsort(syms, kind="stable")
    uniq, starts = np.unique(syms[idx], return_index=True)
    bounds = np.append(starts, idx.size)
    for s, a, b in zip(uniq, bounds[:-1], bounds[1:]):
        if s < 0:
            continue
        rows = idx[a:b]
        out[rows] = vectors[rows] @ dense[s]
    return out


def _forward_np_passes(codes, offsets, init, dense):
    lengths, order, max_len, n_ge = _length_order(offsets)
    n = order.size
    alphas = [np.tile(init, (n, 1))]
    scales = [np.ones(n)]
    dead = np.zeros(n, dtype=bool)
    for l in range(1, max_len + 1):
        k = n_ge[l]
        syms = codes[offsets[order[:k]] + l - 1]
        nxt = _grouped_step(alphas[-1][:k], syms, dense)
        c = nxt.sum(axis=1)
        bad = c <= 0.0
        dead[:k] |= bad
        c = np.where(bad, 1.0, c)
        alphas.append(nxt / c[:, None])
        scales.append(c)
    return lengths, order, max_len, n_ge, alphas, scales, dead


def _forward_np(codes, offsets, init, final, dense):
    lengths, order, max_len, n_ge, alphas, scales, dead = _forward_np_passes(
        codes, offsets, init, dense)
    n = order.size
    logp = np.zeros(n)
    for l in range(1, max_len + 1):
        k = n_ge[l]
        logp[:k] += np.log(scales[l])
    c_fin = np.empty(n)
    for l in range(max_len + 1):
        a, b = n_ge[l + 1], n_ge[l]
        c_fin[a:b] = alphas[l][a:b] @ final
    with np.errstate(divide="ignore"):
        logp += np.log(c_fin)
    logp[dead | (c_fin <= 0.0)] = -np.inf
    out = np.empty(n)
    out[order] = logp
    return out


def _counts_np(codes, offsets, weights, init, final, dense):
    lengths, order, max_len, n_ge, alphas, scales, dead = _forward_np_passes(
        codes, offsets, init, dense)
    n = order.size
    m = init.shape[0]
    c_fin = np.empty(n)
    for l in range(max_len + 1):
        a, b = n_ge[l + 1], n_ge[l]
        c_fin[a:b] = alphas[l][a:b] @ final
    w = weights[order].astype(float)
    w[dead | (c_fin <= 0.0)] = 0.0
    c_fin = np.where(w == 0.0, 1.0, c_fin)

    acc = np.zeros_like(dense)
    cnt_final = np.zeros(m)
    beta = None
    for l in range(max_len, -1, -1):
        a, b = n_ge[l + 1], n_ge[l]
        ending = np.outer(1.0 / c_fin[a:b], final)
        cnt_final += (w[a:b, None] * alphas[l][a:b] * ending).sum(axis=0)
        if beta is None:
            beta = ending
        else:
            k = n_ge[l + 1]
            syms = codes[offsets[order[:k]] + l]
            c = scales[l + 1]
            wb = beta * (w[:k] / c)[:, None]
            idx = np.argsort(syms, kind="stable")
            uniq, starts = np.unique(syms[idx], return_index=True)
            bounds = np.append(starts, idx.size)
            prev = np.zeros((k, m))
            for s, lo, hi in zip(uniq, bounds[:-1], bounds[1:]):
                if s < 0:
                    continue
                rows = idx[lo:hi]
                acc[s] += (alphas[l][rows].T @ wb[rows]) * dense[s]
                prev[rows] = beta[rows] @ dense[s].T
            beta = np.vstack([prev / c[:, None], ending])
    cnt_init = (w[:, None] * init[None, :] * beta).sum(axis=0)
    return acc, cnt_final, cnt_init


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def forward_logprob(km, codes, offsets, backend=None):
    """Log-probability of every encoded string under one compiled machine."""
    backend = backend or _settings.get_backend()
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    if offsets.size <= 1:
        return np.empty(0)
    if backend == "numba":
        return _forward_nb(codes, offsets, km.init, km.final, km.sym_ptr,
                           km.e_src, km.e_dst, km.e_prob)
    return _forward_np(codes, offsets, km.init, km.final, km.dense())


def expected_counts(km, codes, offsets, weights, backend=None):
    """Weighted posterior expected usage of each transition, stop and start.

    Returns ``(edge_counts, final_counts, init_counts)`` where edge counts are
    in the machine's own transition order.  A string with probability zero
    contributes nothing.
    """
    backend = backend or _settings.get_backend()
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    m = km.init.shape[0]
    edges = km.e_src.shape[0]
    if offsets.size <= 1:
        return np.zeros(edges), np.zeros(m), np.zeros(m)
    if backend == "numba":
        cnt_edge = np.zeros(edges)
        cnt_final = np.zeros(m)
        cnt_init = np.zeros(m)
        _counts_nb(codes, offsets, weights, km.init, km.final, km.sym_ptr,
                   km.e_src, km.e_dst, km.e_prob, cnt_edge, cnt_final, cnt_init)
    else:
        acc, cnt_final, cnt_init = _counts_np(codes, offsets, weights, km.init,
                                              km.final, km.dense())
        cnt_edge = acc[km.e_sym, km.e_src, km.e_dst]
    out = np.empty(edges)
    out[km.perm] = cnt_edge
    return out, cnt_final, cnt_init
