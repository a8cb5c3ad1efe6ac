"""Compiled inner loops for split and surrogate search.

Class counts are kept as integers and sums of squared counts are updated
incrementally, so the impurity arithmetic is exact up to the final divisions.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def best_cut(X, y, idx, features, k, tie_tol):
    """Return ``(feature, threshold, gain, n_left)``; feature is -1 when no split gains.

    ``features`` must be sorted ascending.  Among cuts whose gain is within
    ``tie_tol`` of the maximum, the lowest feature and then the lowest
    threshold wins.
    """
    n = idx.size
    nf = features.size
    gains = np.full((nf, max(n - 1, 1)), -np.inf)
    sorted_x = np.empty((nf, n))
    parent = np.zeros(k, np.int64)
    for i in range(n):
        parent[y[idx[i]]] += 1
    parent_sq = 0
    for c in range(k):
        parent_sq += parent[c] * parent[c]
    parent_gini = 1.0 - parent_sq / (n * n)
    best = -np.inf
    xs = np.empty(n)
    left = np.zeros(k, np.int64)
    for a in range(nf):
        f = features[a]
        for i in range(n):
            xs[i] = X[idx[i], f]
        order = np.argsort(xs, kind="mergesort")
        for i in range(n):
            sorted_x[a, i] = xs[order[i]]
        left[:] = 0
        sq_l = 0
        sq_r = parent_sq
        for i in range(n - 1):
            c = y[idx[order[i]]]
            sq_l += 2 * left[c] + 1
            sq_r -= 2 * (parent[c] - left[c]) - 1
            left[c] += 1
            if sorted_x[a, i] < sorted_x[a, i + 1]:
                nl = i + 1.0
                nr = n - nl
                g = parent_gini - ((nl - sq_l / nl) + (nr - sq_r / nr)) / n
                gains[a, i] = g
                if g > best:
                    best = g
    if best <= tie_tol:
        return -1, 0.0, 0.0, 0
    for a in range(nf):
        for i in range(n - 1):
            if gains[a, i] >= best - tie_tol:
                lo = sorted_x[a, i]
                hi = sorted_x[a, i + 1]
                mid = (lo + hi) / 2.0
                if mid <= lo:
                    mid = hi
                return features[a], mid, gains[a, i], i + 1
    return -1, 0.0, 0.0, 0


@njit(cache=True)
def best_surrogate(x, goes_left):
    """Best PMOA split of ``x`` against the boolean routing ``goes_left``.

    Returns ``(threshold, flipped, pmoa)``.  Unflipped splits send
    ``x < threshold`` left; flipped ones send ``x >= threshold`` left.
    Ties prefer unflipped, then the lower threshold.  A constant ``x`` yields
    the better of all-right (threshold = the constant, unflipped) and
    all-left (flipped).
    """
    n = x.size
    n_left = 0
    for i in range(n):
        if goes_left[i]:
            n_left += 1
    n_right = n - n_left
    min_side = min(n_left, n_right)
    order = np.argsort(x, kind="mergesort")
    best_plain = -np.inf
    pos_plain = -1
    best_flip = -np.inf
    pos_flip = -1
    cum_l = 0
    for i in range(n - 1):
        if goes_left[order[i]]:
            cum_l += 1
        if x[order[i]] < x[order[i + 1]]:
            cum_r = i + 1 - cum_l
            plain = (min_side - n + cum_l + (n_right - cum_r)) / min_side
            flip = (min_side - n + (n_left - cum_l) + cum_r) / min_side
            if plain > best_plain:
                best_plain = plain
                pos_plain = i
            if flip > best_flip:
                best_flip = flip
                pos_flip = i
    if pos_plain < 0:
        plain = (min_side - n_left) / min_side
        flip = (min_side - n_right) / min_side
        if flip > plain:
            return x[0], True, flip
        return x[0], False, plain
    if best_flip > best_plain:
        pos, flipped, value = pos_flip, True, best_flip
    else:
        pos, flipped, value = pos_plain, False, best_plain
    lo = x[order[pos]]
    hi = x[order[pos + 1]]
    mid = (lo + hi) / 2.0
    if mid <= lo:
        mid = hi
    return mid, flipped, value


@njit(cache=True)
def grow(X, y, samples, k, m, keys, with_surrogates, tie_tol):
    """Grow a whole tree over ``samples``; nodes are numbered in pre-order.

    Node ``t`` draws its candidate features as the ``m`` smallest entries of
    ``keys[t]``.  Returns flat arrays: split feature (-1 for leaves),
    threshold, gain, left fraction, child ids, class counts and, per node and
    feature, the surrogate threshold / orientation / PMOA.
    """
    n = samples.size
    n_feat = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    gain = np.zeros(cap)
    left_frac = np.zeros(cap)
    left_child = np.full(cap, -1, np.int64)
    right_child = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, k), np.int64)
    sur_thr = np.zeros((cap, n_feat))
    sur_flip = np.zeros((cap, n_feat), np.bool_)
    sur_pmoa = np.full((cap, n_feat), np.nan)

    work = samples.copy()
    buf = np.empty(n, np.int64)
    # stack rows: start, end, parent id, is-left flag
    stack = np.empty((cap, 4), np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = -1
    stack[0, 3] = 0
    top = 1
    n_nodes = 0
    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        parent = stack[top, 2]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if stack[top, 3] == 1:
                left_child[parent] = node
            else:
                right_child[parent] = node
        size = end - start
        nonzero = 0
        for i in range(start, end):
            counts[node, y[work[i]]] += 1
        for c in range(k):
            if counts[node, c] > 0:
                nonzero += 1
        if size < 2 or nonzero <= 1:
            continue
        feats = np.sort(np.argsort(keys[node])[:m])
        seg = work[start:end]
        f, thr, g, n_left = best_cut(X, y, seg, feats, k, tie_tol)
        if f < 0:
            continue
        feature[node] = f
        threshold[node] = thr
        gain[node] = g
        left_frac[node] = n_left / size
        # stable partition: left samples first
        lo = 0
        hi = 0
        for i in range(size):
            s = seg[i]
            if X[s, f] < thr:
                work[start + lo] = s
                lo += 1
            else:
                buf[hi] = s
                hi += 1
        for i in range(hi):
            work[start + lo + i] = buf[i]
        if with_surrogates:
            go = np.empty(size, np.bool_)
            for i in range(size):
                go[i] = i < lo
            col = np.empty(size)
            for gf in range(n_feat):
                if gf == f:
                    continue
                for i in range(size):
                    col[i] = X[work[start + i], gf]
                st, sf, sp = best_surrogate(col, go)
                sur_thr[node, gf] = st
                sur_flip[node, gf] = sf
                sur_pmoa[node, gf] = sp
        # right pushed first so the left subtree is numbered next
        stack[top, 0] = start + lo
        stack[top, 1] = end
        stack[top, 2] = node
        stack[top, 3] = 0
        top += 1
        stack[top, 0] = start
        stack[top, 1] = start + lo
        stack[top, 2] = node
        stack[top, 3] = 1
        top += 1
    return (
        feature[:n_nodes],
        threshold[:n_nodes],
        gain[:n_nodes],
        left_frac[:n_nodes],
        left_child[:n_nodes],
        right_child[:n_nodes],
        counts[:n_nodes],
        sur_thr[:n_nodes],
        sur_flip[:n_nodes],
        sur_pmoa[:n_nodes],
    )
