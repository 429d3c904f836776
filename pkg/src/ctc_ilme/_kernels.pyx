# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Same contracts and operation order as _kernels_py."""

from libc.math cimport exp, log1p, fabs, INFINITY

import numpy as np

cdef double NEG_INF = -INFINITY


cdef inline double _log_add(double a, double b) nogil:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def log_add(double a, double b):
    return _log_add(a, b)


def max_abs_diff_rows(a, b):
    cdef const double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t T = A.shape[0], N = A.shape[1], t, n
    cdef double best, x, y, d
    out = np.zeros(T, dtype=np.float64)
    cdef double[::1] O = out
    with nogil:
        for t in range(T):
            best = 0.0
            for n in range(N):
                x = A[t, n]
                y = B[t, n]
                if x == y:
                    continue
                d = fabs(x - y)
                if d > best:
                    best = d
            O[t] = best
    return [float(v) for v in out]


def ctc_forward(scores, labels, int blank):
    cdef const double[:, ::1] Sc = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t T = Sc.shape[0], L = len(labels)
    cdef Py_ssize_t S = 2 * L + 1, t, s, i
    ext_arr = np.full(S, blank, dtype=np.int64)
    for i in range(L):
        ext_arr[2 * i + 1] = labels[i]
    cdef long long[::1] ext = ext_arr
    buf_arr = np.full((2, S), NEG_INF)
    cdef double[:, ::1] buf = buf_arr
    cdef double acc
    cdef int p = 0, q = 1
    buf[0, 0] = Sc[0, blank]
    if S > 1:
        buf[0, 1] = Sc[0, ext[1]]
    with nogil:
        for t in range(1, T):
            for s in range(S):
                acc = buf[p, s]
                if s >= 1:
                    acc = _log_add(acc, buf[p, s - 1])
                if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                    acc = _log_add(acc, buf[p, s - 2])
                if acc != NEG_INF:
                    buf[q, s] = acc + Sc[t, ext[s]]
                else:
                    buf[q, s] = NEG_INF
            p, q = q, p
    if S == 1:
        return buf[p, 0]
    return _log_add(buf[p, S - 1], buf[p, S - 2])


cdef inline double _rank_score(double acoustic, double lm_total, Py_ssize_t length,
                               double lm_weight, double bonus):
    cdef double score = acoustic
    if lm_weight != 0.0:
        score += lm_weight * lm_total
    if bonus != 0.0:
        score += bonus * length
    return score


cdef tuple _prefix_of(Py_ssize_t node, const long[::1] parent, const long[::1] token, const long[::1] length):
    cdef Py_ssize_t L = length[node], i
    cdef list out = [0] * L
    for i in range(L - 1, -1, -1):
        out[i] = token[node]
        node = parent[node]
    return tuple(out)


def prefix_beam_search(scores, int blank, int beam_size, double prune_threshold,
                       double bonus, double lm_weight, lm_init, lm_step, lm_final):
    """Same search as the Python kernel, with prefixes held as trie node ids.

    Per-node blank/non-blank log-sums live in C arrays; the child lookup is
    a dict keyed by ``parent * N + token``. Accumulation order matches the
    Python kernel, so scores agree bit for bit.
    """
    cdef const double[:, ::1] Sc = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t T = Sc.shape[0], N = Sc.shape[1], t, n, c, i, j, k, p, child, run_end
    cdef Py_ssize_t cap = 1024, n_nodes = 1, n_beam = 1, n_touched, n_cands, n_ranked
    cdef bint use_lm = lm_step is not None
    cdef bint prune = prune_threshold != INFINITY
    cdef double pb, pnb, ptot, sc, s_blank, ac, floor, rowmax

    parent_a = np.full(cap, -1, dtype=np.int_)
    token_a = np.full(cap, -1, dtype=np.int_)
    length_a = np.zeros(cap, dtype=np.int_)
    stamp_a = np.full(cap, -1, dtype=np.int_)
    lmtot_a = np.zeros(cap, dtype=np.float64)
    pb_a = np.full(cap, NEG_INF)
    pnb_a = np.full(cap, NEG_INF)
    npb_a = np.full(cap, NEG_INF)
    npnb_a = np.full(cap, NEG_INF)
    cdef long[::1] parent = parent_a, token = token_a, length = length_a, stamp = stamp_a
    cdef double[::1] lmtot = lmtot_a, PB = pb_a, PNB = pnb_a, NPB = npb_a, NPNB = npnb_a
    cdef list lmstate = [lm_init]
    cdef dict children = {}

    beam_a = np.zeros(max(beam_size, 1), dtype=np.int_)
    cdef long[::1] beam = beam_a
    cands_a = np.zeros(N, dtype=np.int_)
    cdef long[::1] cands = cands_a
    cdef list touched
    cdef long[::1] nodes_v
    cdef double[::1] keys_v
    beam[0] = 0
    PB[0] = 0.0

    for t in range(T):
        n_cands = 0
        if prune:
            rowmax = Sc[t, 0]
            for n in range(1, N):
                if Sc[t, n] > rowmax:
                    rowmax = Sc[t, n]
            floor = rowmax - prune_threshold
        for n in range(N):
            if n != blank and Sc[t, n] != NEG_INF and (not prune or Sc[t, n] >= floor):
                cands[n_cands] = n
                n_cands += 1
        s_blank = Sc[t, blank]
        touched = []
        for i in range(n_beam):
            p = beam[i]
            pb = PB[p]
            pnb = PNB[p]
            ptot = _log_add(pb, pnb)
            if stamp[p] != t:
                stamp[p] = t
                NPB[p] = NEG_INF
                NPNB[p] = NEG_INF
                touched.append(p)
            if s_blank != NEG_INF:
                NPB[p] = _log_add(NPB[p], ptot + s_blank)
            for j in range(n_cands):
                c = cands[j]
                sc = Sc[t, c]
                found = children.get(p * N + c)
                if found is None:
                    if n_nodes == cap:
                        cap *= 2
                        parent_a = np.resize(parent_a, cap)
                        token_a = np.resize(token_a, cap)
                        length_a = np.resize(length_a, cap)
                        stamp_a = np.concatenate([stamp_a, np.full(cap - n_nodes, -1, dtype=np.int_)])
                        lmtot_a = np.resize(lmtot_a, cap)
                        pb_a = np.resize(pb_a, cap)
                        pnb_a = np.resize(pnb_a, cap)
                        npb_a = np.resize(npb_a, cap)
                        npnb_a = np.resize(npnb_a, cap)
                        parent = parent_a
                        token = token_a
                        length = length_a
                        stamp = stamp_a
                        lmtot = lmtot_a
                        PB = pb_a
                        PNB = pnb_a
                        NPB = npb_a
                        NPNB = npnb_a
                    child = n_nodes
                    n_nodes += 1
                    children[p * N + c] = child
                    parent[child] = p
                    token[child] = c
                    length[child] = length[p] + 1
                    if use_lm:
                        st2, lp = lm_step(lmstate[p], c)
                        lmstate.append(st2)
                        lmtot[child] = lmtot[p] + lp
                    else:
                        lmstate.append(None)
                        lmtot[child] = 0.0
                else:
                    child = found
                if stamp[child] != t:
                    stamp[child] = t
                    NPB[child] = NEG_INF
                    NPNB[child] = NEG_INF
                    touched.append(child)
                if c == token[p]:
                    NPNB[p] = _log_add(NPNB[p], pnb + sc)
                    NPNB[child] = _log_add(NPNB[child], pb + sc)
                else:
                    NPNB[child] = _log_add(NPNB[child], ptot + sc)

        n_touched = len(touched)
        nodes_a = np.fromiter(touched, dtype=np.int_, count=n_touched)
        keys_a = np.empty(n_touched, dtype=np.float64)
        nodes_v = nodes_a
        keys_v = keys_a
        n_ranked = 0
        for i in range(n_touched):
            k = nodes_v[i]
            ac = _log_add(NPB[k], NPNB[k])
            if ac == NEG_INF:
                continue
            nodes_v[n_ranked] = k
            keys_v[n_ranked] = -_rank_score(ac, lmtot[k], length[k], lm_weight, bonus)
            n_ranked += 1
        if n_ranked == 0:
            n_beam = 0
            break
        nodes_a = nodes_a[:n_ranked]
        keys_a = keys_a[:n_ranked]
        order = _ranked_order(nodes_a, keys_a, min(beam_size, n_ranked), parent, token, length)
        n_beam = len(order)
        for i in range(n_beam):
            k = order[i]
            beam[i] = k
            PB[k] = NPB[k]
            PNB[k] = NPNB[k]

    results = []
    for i in range(n_beam):
        k = beam[i]
        ac = _log_add(PB[k], PNB[k])
        tot = lmtot[k]
        if use_lm:
            tot += lm_final(lmstate[k])
        results.append((-_rank_score(ac, tot, length[k], lm_weight, bonus),
                        _prefix_of(k, parent, token, length), ac, tot))
    results.sort()
    return [(pr, ac_, tot_) for _, pr, ac_, tot_ in results]


cdef list _ranked_order(nodes, keys, Py_ssize_t keep, const long[::1] parent,
                        const long[::1] token, const long[::1] length):
    """Top ``keep`` nodes by key, exact ties broken by the prefix tuple."""
    idx = np.argsort(keys, kind="stable")
    cdef const double[::1] K = keys
    cdef list out = []
    cdef Py_ssize_t n = idx.shape[0], i = 0, j
    while i < n and len(out) < keep:
        j = i + 1
        while j < n and K[idx[j]] == K[idx[i]]:
            j += 1
        if j - i == 1:
            out.append(nodes[idx[i]])
        else:
            group = sorted((_prefix_of(nodes[idx[m]], parent, token, length), nodes[idx[m]])
                           for m in range(i, j))
            out.extend(g[1] for g in group)
        i = j
    return out[:keep]


def edit_counts(ref, hyp):
    cdef Py_ssize_t R = len(ref), H = len(hyp), i, j
    cdef list refl = list(ref), hypl = list(hyp)
    # three parallel rows: total, insertions, deletions
    cdef long[:] ptot, pins, pdel, ctot, cins, cdel, sw
    ptot = np.arange(H + 1, dtype=np.int_)
    pins = np.arange(H + 1, dtype=np.int_)
    pdel = np.zeros(H + 1, dtype=np.int_)
    ctot = np.zeros(H + 1, dtype=np.int_)
    cins = np.zeros(H + 1, dtype=np.int_)
    cdel = np.zeros(H + 1, dtype=np.int_)
    cdef long bt, bi, bd, xt, xi, xd
    # hyp tokens as ids compared via Python equality; map to ints once
    ids = {}
    cdef long[:] rid = np.array([ids.setdefault(w, len(ids)) for w in refl] or [0], dtype=np.int_)
    cdef long[:] hid = np.array([ids.setdefault(w, len(ids)) for w in hypl] or [0], dtype=np.int_)
    for i in range(1, R + 1):
        ctot[0] = i
        cins[0] = 0
        cdel[0] = i
        for j in range(1, H + 1):
            bt = ptot[j - 1]
            bi = pins[j - 1]
            bd = pdel[j - 1]
            if hid[j - 1] != rid[i - 1]:
                bt += 1
            xt = ptot[j] + 1
            xi = pins[j]
            xd = pdel[j] + 1
            if xt < bt or (xt == bt and (xi < bi or (xi == bi and xd < bd))):
                bt = xt; bi = xi; bd = xd
            xt = ctot[j - 1] + 1
            xi = cins[j - 1] + 1
            xd = cdel[j - 1]
            if xt < bt or (xt == bt and (xi < bi or (xi == bi and xd < bd))):
                bt = xt; bi = xi; bd = xd
            ctot[j] = bt
            cins[j] = bi
            cdel[j] = bd
        sw = ptot; ptot = ctot; ctot = sw
        sw = pins; pins = cins; cins = sw
        sw = pdel; pdel = cdel; cdel = sw
    return (int(ptot[H] - pins[H] - pdel[H]), int(pdel[H]), int(pins[H]))
