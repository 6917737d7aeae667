"""Independent brute-force reference implementations used by the tests.

These deliberately avoid numpy vectorization tricks and share no code with
the package paths they check.
"""

import numpy as np

from deathcast import match_data as md


def brute_force_labels(m, window):
    """Double loop over frames x deaths."""
    labels = np.zeros((m.n_frames, md.N_HEROES), dtype=bool)
    for i in range(m.n_frames):
        t = float(m.game_time[i])
        for d in m.deaths:
            if t < d.time <= t + window:
                labels[i, d.slot] = True
    return labels


def brute_force_pr(scores, labels):
    """Recount TP/FP at every distinct threshold, descending."""
    thresholds = sorted(set(scores), reverse=True)
    pts = []
    pos = sum(labels)
    for th in thresholds:
        tp = sum(1 for s, y in zip(scores, labels) if s >= th and y)
        fp = sum(1 for s, y in zip(scores, labels) if s >= th and not y)
        pts.append((th, tp / (tp + fp), tp / pos))
    return pts


def brute_force_ap(scores, labels):
    pts = brute_force_pr(scores, labels)
    ap = 0.0
    prev_r = 0.0
    for _, p, r in pts:
        ap += (r - prev_r) * p
        prev_r = r
    return ap


def brute_force_spearman_rho(x, y):
    def ranks(v):
        out = [0.0] * len(v)
        for i, vi in enumerate(v):
            less = sum(1 for u in v if u < vi)
            equal = sum(1 for u in v if u == vi)
            out[i] = less + (equal + 1) / 2.0
        return out

    rx, ry = ranks(x), ranks(y)
    mx = sum(rx) / len(rx)
    my = sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = (sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry)) ** 0.5
    return num / den
