"""Mapping from AVD space to categorical labels, plus the dummy baselines.

Three mappers define emotion categories as regions of the 3-d AVD cube:
a per-class Gaussian maximum-likelihood classifier, K-nearest neighbors
(default K=50), and a small 3->5->5->K network ("2LP").  All tie-breaking
rules are deterministic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .nn import TrainConfig, train

COV_REGULARIZER = 1e-6


@dataclass
class GaussianMapper:
    """Per-class Gaussian densities over AVD space.

    The headline configuration is full covariance without priors; the
    diagonal and prior options cover the naive-Bayes ablation.
    """

    means: np.ndarray          # (K, 3)
    covs: np.ndarray           # (K, 3, 3)
    priors: np.ndarray         # (K,)
    use_prior: bool = False
    _inv: np.ndarray = field(default=None, repr=False)
    _logdet: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self._inv is None:
            self._inv = np.stack([np.linalg.inv(c) for c in self.covs])
            self._logdet = np.array([np.linalg.slogdet(c)[1] for c in self.covs])

    @property
    def n_classes(self) -> int:
        return len(self.means)

    def log_likelihood(self, queries: np.ndarray) -> np.ndarray:
        """Per-class Gaussian log density for each query, (n, K)."""
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        out = np.empty((len(q), self.n_classes))
        for c in range(self.n_classes):
            diff = q - self.means[c]
            maha = np.einsum("ni,ij,nj->n", diff, self._inv[c], diff)
            out[:, c] = -0.5 * (maha + self._logdet[c] + 3 * np.log(2 * np.pi))
        return out

    def predict(self, queries) -> np.ndarray:
        scores = self.log_likelihood(queries)
        if self.use_prior:
            scores = scores + np.log(self.priors)
        # argmax already resolves ties toward the lowest class index
        return scores.argmax(axis=1)


def fit_gaussian(points, labels, n_classes: int, diagonal: bool = False,
                 use_prior: bool = False) -> GaussianMapper:
    """Maximum-likelihood per-class mean and (population) covariance.

    Covariances get +1e-6*I regularization; the diagonal option zeroes the
    off-diagonal terms.  Every class needs at least two points.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if not np.all(np.isfinite(points)):
        raise ValueError("non-finite AVD points")
    means, covs, counts = [], [], []
    for c in range(n_classes):
        cls = points[labels == c]
        if len(cls) < 2:
            raise ValueError(f"class {c} has {len(cls)} points, need at least 2")
        mu = cls.mean(axis=0)
        centered = cls - mu
        cov = centered.T @ centered / len(cls)
        if diagonal:
            cov = np.diag(np.diag(cov))
        cov = cov + COV_REGULARIZER * np.eye(3)
        if np.linalg.det(cov) <= 0:
            raise ValueError(f"class {c}: covariance singular after regularization")
        means.append(mu)
        covs.append(cov)
        counts.append(len(cls))
    priors = np.array(counts, dtype=float)
    priors /= priors.sum()
    return GaussianMapper(np.stack(means), np.stack(covs), priors, use_prior)


@dataclass
class KnnMapper:
    """K-nearest-neighbor vote in normalized AVD space.

    Distance ties resolve by training-point insertion order; vote ties by
    summed inverse distance, then by lowest class index.
    """

    points: np.ndarray  # (n, 3)
    labels: np.ndarray  # (n,)
    n_classes: int
    k: int = 50

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.k < 1:
            raise ValueError("k must be at least 1")

    def predict(self, queries) -> np.ndarray:
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if len(self.points) < self.k:
            raise ValueError(
                f"training set of {len(self.points)} smaller than k={self.k}"
            )
        out = np.empty(len(q), dtype=int)
        for i, query in enumerate(q):
            d = np.linalg.norm(self.points - query, axis=1)
            # stable sort on distance preserves insertion order among ties
            nearest = np.argsort(d, kind="stable")[:self.k]
            votes = np.bincount(self.labels[nearest], minlength=self.n_classes)
            top = votes.max()
            tied = np.flatnonzero(votes == top)
            if len(tied) == 1:
                out[i] = tied[0]
                continue
            inv = np.zeros(self.n_classes)
            for j in nearest:
                inv[self.labels[j]] += 1.0 / max(d[j], 1e-12)
            best = inv[tied].max()
            out[i] = tied[np.flatnonzero(inv[tied] == best)[0]]
        return out


def fit_knn(points, labels, n_classes: int, k: int = 50) -> KnnMapper:
    return KnnMapper(np.asarray(points, dtype=float), np.asarray(labels, dtype=int),
                     n_classes, k)


class TlpMapper:
    """Two hidden layers of 5 units each on the 3-d AVD input."""

    def __init__(self, model, n_classes: int):
        self.model = model
        self.n_classes = n_classes

    def predict(self, queries) -> np.ndarray:
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        logits = self.model.forward(q, train=False)
        return logits.argmax(axis=1)


def fit_2lp(points, labels, n_classes: int, seed: int = 0,
            cfg: TrainConfig | None = None) -> TlpMapper:
    """Train the 3->5->5->K mapper with cross-entropy.

    A 10% tail of the (seed-shuffled) data is held out for early stopping.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    for c in range(n_classes):
        if not np.any(labels == c):
            raise ValueError(f"class {c} has no points")
    model = _build_tlp(n_classes, seed)
    cfg = cfg or TrainConfig(max_epochs=200, patience=10, batch_size=32, seed=seed)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(points))
    cut = max(1, int(0.9 * len(points))) if len(points) > 10 else len(points)
    tr, dv = order[:cut], order[cut:]
    train(model, points[tr], labels[tr],
          points[dv] if len(dv) else None, labels[dv] if len(dv) else None, cfg)
    return TlpMapper(model, n_classes)


def _build_tlp(n_classes: int, seed: int):
    from .nn.layers import Linear, ReLU, Sequential
    from .nn.models import Model, ModelSpec as _Spec

    class _Tlp(Model):
        def __init__(self):
            spec = _Spec(architecture="mlp", head="classification",
                         input_dims=2, n_outputs=n_classes, mlp_widths=(5, 5))
            super().__init__(spec)
            rng = np.random.default_rng(seed)
            self.net = Sequential(
                Linear(3, 5, rng), ReLU(), Linear(5, 5, rng), ReLU(),
                Linear(5, n_classes, rng),
            )

        @property
        def params(self):
            return self.net.params

        def forward(self, x, train=False):
            x = np.asarray(x, dtype=float)
            if x.ndim != 2 or x.shape[1] != 3:
                raise ValueError(f"2LP expects (n, 3) AVD input, got {x.shape}")
            return self.net.forward(x, train)

        def backward(self, dy):
            return self.net.backward(dy)

    return _Tlp()


@dataclass
class DummyMapper:
    """The three chance baselines: Random, Prob. Random, Major Class."""

    kind: str  # random | prob_random | major_class
    priors: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("random", "prob_random", "major_class"):
            raise ValueError(f"unknown dummy kind {self.kind!r}")
        if self.kind != "random":
            if self.priors is None:
                raise ValueError(f"{self.kind} needs class priors")
            p = np.asarray(self.priors, dtype=float)
            if abs(p.sum() - 1.0) > 1e-9 or (p < 0).any():
                raise ValueError("priors must be non-negative and sum to 1")
            self.priors = p

    def predict_n(self, n: int, n_classes: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if self.kind == "random":
            return rng.integers(0, n_classes, size=n)
        if self.kind == "prob_random":
            return rng.choice(len(self.priors), size=n, p=self.priors)
        return np.full(n, int(np.argmax(self.priors)))


def save_mapper(mapper, path) -> None:
    """Serialize a fitted Gaussian or KNN mapper as JSON at full precision."""
    if isinstance(mapper, GaussianMapper):
        doc = {
            "type": "gaussian",
            "means": mapper.means.tolist(),
            "covs": mapper.covs.tolist(),
            "priors": mapper.priors.tolist(),
            "use_prior": mapper.use_prior,
        }
    elif isinstance(mapper, KnnMapper):
        doc = {
            "type": "knn",
            "points": mapper.points.tolist(),
            "labels": mapper.labels.tolist(),
            "n_classes": mapper.n_classes,
            "k": mapper.k,
        }
    else:
        raise TypeError(f"cannot serialize {type(mapper).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_mapper(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc["type"] == "gaussian":
        return GaussianMapper(
            np.array(doc["means"]), np.array(doc["covs"]),
            np.array(doc["priors"]), doc["use_prior"],
        )
    if doc["type"] == "knn":
        return KnnMapper(np.array(doc["points"]), np.array(doc["labels"]),
                         doc["n_classes"], doc["k"])
    raise ValueError(f"unknown mapper type {doc['type']!r}")
