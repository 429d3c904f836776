"""Pure-Python kernels. Reference behaviour for the compiled twin in _kernels.pyx."""

import math

import numpy as np

NEG_INF = float("-inf")


def log_add(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def max_abs_diff_rows(a, b):
    """Per-row max |a - b|; equal entries (including two -inf) differ by 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        diff = np.where(a == b, 0.0, np.abs(a - b))
    return diff.max(axis=1).tolist()


def ctc_forward(scores, labels, blank):
    """Log path-sum of all frame alignments collapsing to ``labels``."""
    if hasattr(scores, "tolist"):
        scores = scores.tolist()
    T = len(scores)
    L = len(labels)
    S = 2 * L + 1
    ext = [blank] * S
    for i in range(L):
        ext[2 * i + 1] = labels[i]
    prev = [NEG_INF] * S
    prev[0] = scores[0][blank]
    if S > 1:
        prev[1] = scores[0][ext[1]]
    for t in range(1, T):
        row = scores[t]
        cur = [NEG_INF] * S
        for s in range(S):
            acc = prev[s]
            if s >= 1:
                acc = log_add(acc, prev[s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                acc = log_add(acc, prev[s - 2])
            if acc != NEG_INF:
                cur[s] = acc + row[ext[s]]
        prev = cur
    if S == 1:
        return prev[0]
    return log_add(prev[S - 1], prev[S - 2])


def _rank_score(acoustic, lm_total, length, lm_weight, bonus):
    score = acoustic
    if lm_weight != 0.0:
        score += lm_weight * lm_total
    if bonus != 0.0:
        score += bonus * length
    return score


def prefix_beam_search(scores, blank, beam_size, prune_threshold, bonus,
                       lm_weight, lm_init, lm_step, lm_final):
    """CTC prefix beam search with optional shallow fusion.

    ``scores`` is a list of per-frame lists. ``lm_init`` is the LM state
    before the first token, ``lm_step(state, token)`` returns
    ``(next_state, natural_log_prob)`` and ``lm_final(state)`` the
    end-of-sentence log-prob. ``lm_step`` is None when no LM is active.

    Returns a list of ``(prefix, acoustic_logsum, lm_total)`` ranked best
    first, ties broken by lexicographic prefix order.
    """
    if hasattr(scores, "tolist"):
        scores = scores.tolist()
    use_lm = lm_step is not None
    # prefix -> [p_blank, p_nonblank]
    beams = {(): [0.0, NEG_INF]}
    lm_states = {(): (lm_init, 0.0)}
    N = len(scores[0]) if scores else 0
    for row in scores:
        if prune_threshold == math.inf:
            cands = [c for c in range(N) if c != blank and row[c] != NEG_INF]
        else:
            floor = max(row) - prune_threshold
            cands = [c for c in range(N) if c != blank and row[c] >= floor and row[c] != NEG_INF]
        s_blank = row[blank]
        nxt = {}
        for prefix, (pb, pnb) in beams.items():
            ptot = log_add(pb, pnb)
            entry = nxt.get(prefix)
            if entry is None:
                entry = nxt[prefix] = [NEG_INF, NEG_INF]
            if s_blank != NEG_INF:
                entry[0] = log_add(entry[0], ptot + s_blank)
            last = prefix[-1] if prefix else -1
            for c in cands:
                sc = row[c]
                new = prefix + (c,)
                ne = nxt.get(new)
                if ne is None:
                    ne = nxt[new] = [NEG_INF, NEG_INF]
                if c == last:
                    entry[1] = log_add(entry[1], pnb + sc)
                    ne[1] = log_add(ne[1], pb + sc)
                else:
                    ne[1] = log_add(ne[1], ptot + sc)
                if new not in lm_states:
                    st, tot = lm_states[prefix]
                    if use_lm:
                        st2, lp = lm_step(st, c)
                        lm_states[new] = (st2, tot + lp)
                    else:
                        lm_states[new] = (None, 0.0)
        ranked = []
        for prefix, (pb, pnb) in nxt.items():
            ac = log_add(pb, pnb)
            if ac == NEG_INF:
                continue
            ranked.append((-_rank_score(ac, lm_states[prefix][1], len(prefix), lm_weight, bonus), prefix))
        ranked.sort()
        beams = {p: nxt[p] for _, p in ranked[:beam_size]}
        if not beams:
            break
        lm_states = {p: lm_states[p] for p in beams}

    results = []
    for prefix, (pb, pnb) in beams.items():
        ac = log_add(pb, pnb)
        st, tot = lm_states[prefix]
        if use_lm:
            tot += lm_final(st)
        results.append((-_rank_score(ac, tot, len(prefix), lm_weight, bonus), prefix, ac, tot))
    results.sort()
    return [(p, ac, tot) for _, p, ac, tot in results]


def edit_counts(ref, hyp):
    """(S, D, I) of a minimum-cost alignment, preferring fewer insertions, then fewer deletions."""
    R = len(ref)
    H = len(hyp)
    # cell = (total edits, insertions, deletions)
    prev = [(j, j, 0) for j in range(H + 1)]
    for i in range(1, R + 1):
        cur = [(i, 0, i)] + [None] * H
        r = ref[i - 1]
        for j in range(1, H + 1):
            d = prev[j - 1]
            if hyp[j - 1] == r:
                best = d
            else:
                best = (d[0] + 1, d[1], d[2])
            up = prev[j]
            cand = (up[0] + 1, up[1], up[2] + 1)
            if cand < best:
                best = cand
            left = cur[j - 1]
            cand = (left[0] + 1, left[1] + 1, left[2])
            if cand < best:
                best = cand
            cur[j] = best
        prev = cur
    total, ins, dels = prev[H]
    return total - ins - dels, dels, ins
