"""Brute-force reference implementations used to cross-check the library.

Everything here is written as directly from the defining formulas as
possible (explicit pair enumeration, naive sorting) and deliberately shares
no code with the package.
"""

from __future__ import annotations

import numpy as np


def ccc_direct(x, y):
    """CCC by direct evaluation of the formula with explicit loops."""
    x = list(map(float, x))
    y = list(map(float, y))
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        return 1.0
    return 2.0 * cov / denom


def recalls_direct(refs, preds, n_classes):
    """(UR, WR) by per-class counting, no matrix algebra."""
    per_class = []
    for c in range(n_classes):
        idx = [i for i, r in enumerate(refs) if r == c]
        if not idx:
            continue
        hit = sum(1 for i in idx if preds[i] == c)
        per_class.append(hit / len(idx))
    ur = sum(per_class) / len(per_class)
    wr = sum(1 for r, p in zip(refs, preds) if r == p) / len(refs)
    return ur, wr


def krippendorff_alpha_pairs(grid, level="interval"):
    """Alpha by exhaustive enumeration of ordered rating pairs.

    grid: items x raters array with NaN for missing.
    """
    if level == "interval":
        delta = lambda a, b: (a - b) ** 2
    else:
        delta = lambda a, b: float(a != b)
    grid = np.asarray(grid, dtype=float)
    units = [row[~np.isnan(row)] for row in grid]
    units = [u for u in units if len(u) >= 2]
    n = sum(len(u) for u in units)

    d_obs = 0.0
    for u in units:
        m = len(u)
        s = 0.0
        for i in range(m):
            for j in range(m):
                if i != j:
                    s += delta(u[i], u[j])
        d_obs += s / (m - 1)
    d_obs /= n

    pooled = [v for u in units for v in u]
    d_exp = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                d_exp += delta(pooled[i], pooled[j])
    d_exp /= n * (n - 1)

    if d_exp == 0.0:
        return 1.0
    return 1.0 - d_obs / d_exp


def fleiss_kappa_direct(counts):
    """Fleiss' kappa straight from the textbook definition."""
    counts = np.asarray(counts, dtype=float)
    n_items, n_cats = counts.shape
    n = counts[0].sum()
    total = counts.sum()
    p_j = [counts[:, j].sum() / total for j in range(n_cats)]
    p_e = sum(p * p for p in p_j)
    p_i = [
        (sum(counts[i, j] * (counts[i, j] - 1) for j in range(n_cats)))
        / (n * (n - 1))
        for i in range(n_items)
    ]
    p_bar = sum(p_i) / n_items
    if p_e == 1.0:
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)


def gaussian_decisions_direct(means, covs, priors, queries, use_prior=False):
    """Argmax of the multivariate normal density, evaluated from the pdf formula."""
    out = []
    k = len(means)
    d = len(means[0])
    for q in queries:
        best, best_score = 0, -np.inf
        for c in range(k):
            diff = np.asarray(q) - np.asarray(means[c])
            cov = np.asarray(covs[c])
            dens = (
                np.exp(-0.5 * diff @ np.linalg.inv(cov) @ diff)
                / np.sqrt((2 * np.pi) ** d * np.linalg.det(cov))
            )
            score = np.log(max(dens, 1e-300))
            if use_prior:
                score += np.log(priors[c])
            if score > best_score:
                best, best_score = c, score
        out.append(best)
    return out


def knn_decisions_direct(points, labels, k, queries, n_classes):
    """KNN by full sort; ties on distance broken by insertion order, vote ties
    by summed inverse distance then lowest class index."""
    points = np.asarray(points, dtype=float)
    out = []
    for q in queries:
        dists = [(float(np.linalg.norm(points[i] - q)), i) for i in range(len(points))]
        dists.sort()  # (distance, insertion order)
        nearest = dists[:k]
        votes = [0] * n_classes
        inv = [0.0] * n_classes
        for dist, i in nearest:
            votes[labels[i]] += 1
            inv[labels[i]] += 1.0 / max(dist, 1e-12)
        top = max(votes)
        tied = [c for c in range(n_classes) if votes[c] == top]
        if len(tied) == 1:
            out.append(tied[0])
        else:
            best_inv = max(inv[c] for c in tied)
            out.append(min(c for c in tied if inv[c] == best_inv))
    return out
