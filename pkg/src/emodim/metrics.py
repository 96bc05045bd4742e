"""Evaluation statistics: CCC, confusion-matrix recalls, inter-annotator agreement."""

from __future__ import annotations

import numpy as np


def ccc(x, y) -> float:
    """Concordance correlation coefficient between two series.

    Uses population moments: 2*cov(x,y) / (var(x) + var(y) + (mean(x)-mean(y))^2).
    Penalizes both decorrelation and mean/scale shift.  If both series are
    constant and equal the denominator vanishes and the agreement is perfect,
    so 1.0 is returned.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 1 or x.size < 2:
        raise ValueError("need two 1-d series of length >= 2")
    mx, my = x.mean(), y.mean()
    vx, vy = x.var(), y.var()
    cov = ((x - mx) * (y - my)).mean()
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        return 1.0
    return float(2.0 * cov / denom)


def confusion(refs, preds, n_classes: int) -> np.ndarray:
    """K x K count matrix; rows are reference classes, columns predictions."""
    refs = np.asarray(refs, dtype=int)
    preds = np.asarray(preds, dtype=int)
    if refs.shape != preds.shape:
        raise ValueError(f"length mismatch: {len(refs)} refs vs {len(preds)} preds")
    if refs.size and (refs.min() < 0 or refs.max() >= n_classes
                      or preds.min() < 0 or preds.max() >= n_classes):
        raise ValueError(f"labels out of range for {n_classes} classes")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (refs, preds), 1)
    return cm


def unweighted_recall(cm: np.ndarray) -> float:
    """Mean of per-class recalls; classes with zero reference support are excluded."""
    cm = np.asarray(cm)
    support = cm.sum(axis=1)
    if cm.sum() == 0:
        raise ValueError("empty confusion matrix")
    present = support > 0
    recalls = np.diag(cm)[present] / support[present]
    return float(recalls.mean())


def weighted_recall(cm: np.ndarray) -> float:
    """Support-weighted recall; equals overall accuracy (trace / total)."""
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm) / total)


def per_class_precision_recall(cm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-class (precision, recall); 0/0 cells are reported as nan."""
    cm = np.asarray(cm, dtype=float)
    diag = np.diag(cm)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = diag / cm.sum(axis=0)
        recall = diag / cm.sum(axis=1)
    return precision, recall


def krippendorff_alpha(data, level: str = "interval") -> float:
    """Krippendorff's alpha over an items x raters grid with missing entries.

    ``data`` is a 2-d array (items x raters) with NaN (or None) marking
    missing ratings.  ``level`` selects the difference metric: "interval"
    uses squared differences, "nominal" uses 0/1 disagreement.

    Standard coincidence formulation: observed disagreement averages the
    within-item pairwise differences (each item's pairs weighted by
    1/(m_u - 1)), expected disagreement averages over all pairable values
    pooled across items.  Items with fewer than two ratings are ignored.
    The pair sums are evaluated in closed form (moments for interval data,
    coincidence counts for nominal data).
    """
    if level not in ("interval", "nominal"):
        raise ValueError(f"unknown level {level!r}")

    grid = np.asarray(
        [[np.nan if v is None else float(v) for v in row] for row in data], dtype=float
    )
    if grid.ndim != 2:
        raise ValueError("data must be items x raters")

    units = []  # per item: array of present ratings, len >= 2
    for row in grid:
        vals = row[~np.isnan(row)]
        if len(vals) >= 2:
            units.append(vals)
    if not units:
        raise ValueError("no item has two or more ratings")

    n = sum(len(u) for u in units)
    pooled = np.concatenate(units)

    if level == "interval":
        # sum over ordered pairs of (a-b)^2 equals 2*(m*sum(x^2) - sum(x)^2)
        d_obs = sum(
            2.0 * (len(u) * np.dot(u, u) - u.sum() ** 2) / (len(u) - 1) for u in units
        ) / n
        d_exp = 2.0 * (n * np.dot(pooled, pooled) - pooled.sum() ** 2) / (n * (n - 1))
    else:
        values, pooled_counts = np.unique(pooled, return_counts=True)
        index = {v: k for k, v in enumerate(values)}
        d_obs = 0.0
        for u in units:
            m = len(u)
            counts = np.zeros(len(values))
            for v in u:
                counts[index[v]] += 1
            disagreeing = m * (m - 1) - (counts * (counts - 1)).sum()
            d_obs += disagreeing / (m - 1)
        d_obs /= n
        d_exp = (n * (n - 1) - (pooled_counts * (pooled_counts - 1)).sum()) / (n * (n - 1))

    if d_exp == 0.0:
        return 1.0
    return float(1.0 - d_obs / d_exp)


def fleiss_kappa(counts) -> float:
    """Fleiss' kappa from an items x categories matrix of rating counts.

    Every item must carry the same number of ratings n >= 2.  Returns 1.0
    when expected agreement is already perfect (single category used).
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 2 or counts.size == 0:
        raise ValueError("counts must be a non-empty items x categories matrix")
    if (counts < 0).any():
        raise ValueError("counts must be non-negative")
    per_item = counts.sum(axis=1)
    n = per_item[0]
    if not np.all(per_item == n):
        raise ValueError("every item must have the same number of ratings")
    if n < 2:
        raise ValueError("need at least 2 ratings per item")

    p_j = counts.sum(axis=0) / counts.sum()
    p_e = float(np.dot(p_j, p_j))
    p_i = ((counts * counts).sum(axis=1) - n) / (n * (n - 1))
    p_bar = float(p_i.mean())
    if p_e == 1.0:
        return 1.0
    return (p_bar - p_e) / (1.0 - p_e)
