"""Independent reference implementations used by the tests.

Everything here works on plain Python sets and lists, or on scipy's adaptive
quadrature. None of it shares code with the package under test.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate


def points(pairs) -> set[int]:
    return {p for s, e in pairs for p in range(s, e + 1)}


def pairs_from_points(pts) -> list[tuple[int, int]]:
    out = []
    for p in sorted(pts):
        if out and p == out[-1][1] + 1:
            out[-1] = (out[-1][0], p)
        else:
            out.append((p, p))
    return out


def confusion(pred, gt) -> tuple[int, int, int]:
    """Interval TP/FP/FN written from the textual rules, one interval at a time.

    * A ground-truth interval is a TP if any prediction shares a point with it.
      It is credited once, however many predictions touch it.
    * A prediction that shares no point with any ground-truth interval is an FP.
    * A ground-truth interval touched by no prediction is an FN.
    """
    gsets = [points([g]) for g in gt]
    psets = [points([p]) for p in pred]
    tp = sum(1 for g in gsets if any(g & p for p in psets))
    fp = sum(1 for p in psets if not any(p & g for g in gsets))
    fn = sum(1 for g in gsets if not any(g & p for p in psets))
    return tp, fp, fn


def confusion_table(sets) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """TP/FP/FN for every (gt, pred) pair of ``sets`` at once, as [gt, pred] arrays.

    The same rules as :func:`confusion`, with each interval as a bitmask of its
    points. "Shares a point with some prediction" means the interval's mask ANDs
    non-zero with the OR of all prediction masks.
    """
    width = max((len(s) for s in sets), default=0)
    masks = np.zeros((len(sets), max(width, 1)), dtype=np.int64)
    valid = np.zeros_like(masks, dtype=bool)
    for i, st in enumerate(sets):
        for k, (s, e) in enumerate(st):
            masks[i, k] = sum(1 << p for p in range(s, e + 1))
            valid[i, k] = True
    union = np.bitwise_or.reduce(masks, axis=1)
    n = len(sets)
    tp = np.zeros((n, n), dtype=np.int64)
    fp = np.zeros((n, n), dtype=np.int64)
    for k in range(masks.shape[1]):
        # gt interval k of row i touched by the union of predictions in column j
        tp += valid[:, k, None] & ((masks[:, k, None] & union[None, :]) != 0)
        # prediction k of column j touching nothing in the union of gt row i
        fp += valid[None, :, k] & ((masks[None, :, k] & union[:, None]) == 0)
    fn = valid.sum(axis=1)[:, None] - tp
    return tp, fp, fn


def overlap(pred, gt) -> float:
    a, b = points(pred), points(gt)
    if not a and not b:
        return 1.0
    return len(a & b) / max(len(a), len(b))


def range_f1(pred, gt) -> float:
    a, b = points(pred), points(gt)
    if not a and not b:
        return 1.0
    if not a or not b or not (a & b):
        return 0.0
    p = len(a & b) / len(a)
    r = len(a & b) / len(b)
    return 2 * p * r / (p + r)


def normalized_sets(n_points: int, max_intervals: int):
    """Every sorted, non-overlapping, non-adjacent interval set on 1..n_points."""
    result = [()]

    def extend(prefix, next_min, remaining):
        for s in range(next_min, n_points + 1):
            for e in range(s, n_points + 1):
                cur = prefix + ((s, e),)
                result.append(cur)
                if remaining > 1:
                    extend(cur, e + 2, remaining - 1)

    extend((), 1, max_intervals)
    return result


def brute_matrix_profile(x, m: int, exclusion: int) -> np.ndarray:
    """All-pairs z-normalized distance profile with an explicit double loop."""
    x = [float(v) for v in x]
    k = len(x) - m + 1

    def znorm(seq):
        mu = sum(seq) / m
        sd = math.sqrt(sum((v - mu) ** 2 for v in seq) / m)
        if sd < 1e-12:
            return None
        return [(v - mu) / sd for v in seq]

    subs = [znorm(x[i : i + m]) for i in range(k)]
    out = np.empty(k)
    for i in range(k):
        best = math.inf
        for j in range(k):
            if abs(i - j) < exclusion:
                continue
            a, b = subs[i], subs[j]
            if a is None and b is None:
                d = 0.0
            elif a is None or b is None:
                d = math.sqrt(m)
            else:
                d = math.sqrt(sum((u - v) ** 2 for u, v in zip(a, b)))
            best = min(best, d)
        out[i] = best
    return out


def spread_max(profile, m: int, n: int) -> list[float]:
    return [max(profile[j] for j in range(max(0, t - m + 1), min(t, len(profile) - 1) + 1)) for t in range(n)]


# -- affiliation ------------------------------------------------------------


def _dist(x: float, spans) -> float:
    return min(max(a - x, 0.0, x - b) for a, b in spans)


def _uniform_mass(pred_fn, lo: float, hi: float, breaks) -> float:
    pts = sorted(p for p in breaks if lo < p < hi)
    val, _ = integrate.quad(pred_fn, lo, hi, points=pts or None, limit=200, epsabs=1e-13, epsrel=1e-13)
    return val


def affiliation_oracle(pred_pairs, gt_pairs, length: int) -> tuple[float, float]:
    """Affiliation precision/recall by nested numerical quadrature.

    Point i occupies [i-1, i). Zones split the timeline at midpoints between
    consecutive events.
    """
    gt = [(s - 1.0, float(e)) for s, e in gt_pairs]
    pred = [(s - 1.0, float(e)) for s, e in pred_pairs]
    cuts = [0.0] + [(gt[i][1] + gt[i + 1][0]) / 2 for i in range(len(gt) - 1)] + [float(length)]
    precs, recs = [], []
    for event, z0, z1 in zip(gt, cuts, cuts[1:]):
        zone_w = z1 - z0
        inside = [(max(a, z0), min(b, z1)) for a, b in pred if min(b, z1) > max(a, z0)]
        a, b = event

        def surv_event(d):
            # P(dist(Z, event) >= d), Z ~ U[z0, z1], by integrating the indicator
            if d <= 0:
                return 1.0
            return _uniform_mass(lambda z: 1.0 if _dist(z, [event]) >= d else 0.0, z0, z1,
                                 [a - d, b + d, a, b]) / zone_w

        if inside:
            num = sum(
                integrate.quad(lambda x: surv_event(_dist(x, [event])), p, q, limit=200,
                               points=[v for v in (a, b) if p < v < q] or None, epsabs=1e-11)[0]
                for p, q in inside
            )
            precs.append(num / sum(q - p for p, q in inside))
            edges = [v for p, q in inside for v in (p, q)]

            def surv_point(y):
                d = _dist(y, inside)
                if d <= 0:
                    return 1.0
                return _uniform_mass(lambda z: 1.0 if abs(z - y) >= d else 0.0, z0, z1, [y - d, y + d]) / zone_w

            rec, _ = integrate.quad(surv_point, a, b, limit=400, points=[v for v in edges if a < v < b] or None,
                                    epsabs=1e-11)
            recs.append(rec / (b - a))
        else:
            recs.append(0.0)
    precision = sum(precs) / len(precs) if precs else math.nan
    return precision, sum(recs) / len(recs)

