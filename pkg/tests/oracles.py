"""Slow reference implementations used only by the tests."""

import itertools
import math

import mpmath


def lse(xs):
    xs = [x for x in xs if x != -math.inf]
    if not xs:
        return -math.inf
    m = max(xs)
    return m + math.log(sum(math.exp(x - m) for x in xs))


def collapse(path, blank):
    out, prev = [], None
    for p in path:
        if p != prev and p != blank:
            out.append(p)
        prev = p
    return tuple(out)


def brute_force_label_sums(scores, blank):
    """Log path-sum per collapsed label sequence, by enumerating all N^T paths."""
    T, N = len(scores), len(scores[0])
    acc = {}
    for path in itertools.product(range(N), repeat=T):
        s = sum(scores[t][k] for t, k in enumerate(path))
        acc.setdefault(collapse(path, blank), []).append(s)
    return {lab: lse(v) for lab, v in acc.items()}


def brute_force_best(scores, blank, lm_score=None, lm_weight=1.0):
    sums = brute_force_label_sums(scores, blank)
    ranked = []
    for lab, ac in sums.items():
        total = ac + (lm_weight * lm_score(lab) if lm_score else 0.0)
        ranked.append((-total, lab, ac))
    ranked.sort()
    _, lab, ac = ranked[0]
    return lab, ac, -ranked[0][0]


def levenshtein(ref, hyp):
    """Plain textbook DP; returns the minimum number of edits."""
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, 1):
        cur = [i]
        for j, h in enumerate(hyp, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (r != h)))
        prev = cur
    return prev[-1]


def naive_oov_f1(refs, hyps, terms):
    tp = hc = rc = 0
    for ref, hyp in zip(refs, hyps):
        for w in terms:
            r, h = ref.count(w), hyp.count(w)
            tp += min(r, h)
            hc += h
            rc += r
    p = tp / hc if hc else 0.0
    rcl = tp / rc if rc else 0.0
    return 0.0 if p + rcl == 0 else 2 * p * rcl / (p + rcl)


def mp_log_sum_exp(xs):
    mpmath.mp.dps = 50
    return float(mpmath.log(mpmath.fsum(mpmath.exp(x) for x in xs)))
