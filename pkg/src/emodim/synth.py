"""Synthetic emotion corpus generator.

Stands in for the licensed corpora: each class is a Gaussian blob in
normalized AVD space, annotators are noisy copies of the true rating, and
frame features are an affine map of the true AVD vector plus noise, so the
whole classification-via-regression pipeline is learnable end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Corpus, aggregate_corpus, load_manifest
from .features import write_feature_file


@dataclass
class SynthClass:
    name: str
    prior: float
    mean: tuple[float, float, float]  # in normalized [0,1] AVD space
    cov: tuple  # 3x3, normalized units


@dataclass
class SynthSpec:
    classes: list[SynthClass]
    n_samples: int = 1000
    n_annotators: int = 3
    avd_noise: float | tuple = 0.05  # annotator rating noise, normalized units;
                                     # a 3-tuple sets it per dimension
    label_noise: float = 0.1     # chance a non-anchor annotator votes off-class
    tie_rate: float = 0.0        # fraction of samples with a forced vote tie
    scale: tuple[float, float] = (1.0, 5.0)
    feature_dims: int = 16
    feature_frames: int = 50
    feature_noise: float = 0.1
    name: str = "synth"

    def __post_init__(self):
        priors = np.array([c.prior for c in self.classes])
        if abs(priors.sum() - 1.0) > 1e-9:
            raise ValueError(f"class priors sum to {priors.sum()}, expected 1")
        for c in self.classes:
            cov = np.asarray(c.cov, dtype=float)
            if cov.shape != (3, 3):
                raise ValueError(f"class {c.name!r}: covariance must be 3x3")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError as e:
                raise ValueError(
                    f"class {c.name!r}: covariance not positive definite"
                ) from e


def default_spec(n_samples: int = 1000, tie_rate: float = 0.0,
                 **overrides) -> SynthSpec:
    """Four well-separated classes with realistically imbalanced priors."""
    iso = ((0.004, 0, 0), (0, 0.004, 0), (0, 0, 0.004))
    classes = [
        SynthClass("neutral", 0.309, (0.5, 0.5, 0.5), iso),
        SynthClass("happy", 0.296, (0.7, 0.85, 0.6), iso),
        SynthClass("angry", 0.199, (0.85, 0.2, 0.8), iso),
        SynthClass("sad", 0.196, (0.25, 0.2, 0.3), iso),
    ]
    return SynthSpec(classes=classes, n_samples=n_samples, tie_rate=tie_rate,
                     **overrides)


def _draw_votes(rng, true_class: int, n_classes: int, n_annotators: int,
                label_noise: float, force_tie: bool) -> list[int | None]:
    """Categorical votes per annotator; None means the annotator gave no label.

    Tied samples split their votes evenly between the true class and one
    other (an odd last annotator abstains).  Untied samples anchor the first
    annotator on the true class and redraw until a strict plurality exists.
    """
    if force_tie:
        other = int((true_class + 1 + rng.integers(0, n_classes - 1)) % n_classes)
        votes: list[int | None] = []
        for i in range(n_annotators):
            if n_annotators % 2 == 1 and i == n_annotators - 1:
                votes.append(None)
            else:
                votes.append(true_class if i % 2 == 0 else other)
        if n_annotators < 2:
            votes = [true_class, other]
        return votes

    while True:
        votes = [true_class]
        for _ in range(n_annotators - 1):
            if rng.random() < label_noise:
                votes.append(int(rng.integers(0, n_classes)))
            else:
                votes.append(true_class)
        counts = np.bincount(votes, minlength=n_classes)
        top = counts.max()
        if (counts == top).sum() == 1:
            return votes


def synth_corpus(spec: SynthSpec, seed: int, out_dir) -> Corpus:
    """Generate a corpus: manifest + one feature file per sample.

    Deterministic given (spec, seed): identical manifests byte for byte.
    Returns the corpus re-loaded from the written manifest, with both
    aggregation passes applied.
    """
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    k = len(spec.classes)
    priors = np.array([c.prior for c in spec.classes])
    means = np.array([c.mean for c in spec.classes])
    chols = [np.linalg.cholesky(np.asarray(c.cov, dtype=float)) for c in spec.classes]
    lo, hi = spec.scale

    # fixed affine feature map for the whole corpus
    w = rng.normal(size=(spec.feature_dims, 3))
    b = rng.normal(size=spec.feature_dims)
    noise_scale = np.zeros(3) + np.asarray(spec.avd_noise, dtype=float)

    lines = [json.dumps({
        "corpus": spec.name,
        "vocabulary": [c.name for c in spec.classes],
        "avd_scale": {"min": lo, "max": hi},
    })]

    for i in range(spec.n_samples):
        c = int(rng.choice(k, p=priors))
        true_avd = np.clip(means[c] + chols[c] @ rng.normal(size=3), 0.0, 1.0)

        force_tie = rng.random() < spec.tie_rate
        votes = _draw_votes(rng, c, k, spec.n_annotators, spec.label_noise, force_tie)

        annotations = []
        for a, vote in enumerate(votes):
            rated = true_avd if np.all(noise_scale == 0) else np.clip(
                true_avd + noise_scale * rng.normal(size=3), 0.0, 1.0
            )
            raw = lo + rated * (hi - lo)
            ann = {"annotator": f"a{a}", "avd": [float(v) for v in raw]}
            if vote is not None:
                ann["label"] = spec.classes[vote].name
            annotations.append(ann)

        frames = (
            w @ true_avd + b
            + spec.feature_noise * rng.normal(size=(spec.feature_frames, spec.feature_dims))
        ).astype(np.float32)
        fname = f"features/s{i:06d}.fea"
        write_feature_file(frames, out_dir / fname)

        lines.append(json.dumps({
            "id": f"s{i:06d}",
            "feature_path": fname,
            "split": "train" if i % 10 < 8 else ("dev" if i % 10 == 8 else "test"),
            "annotations": annotations,
        }))

    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return aggregate_corpus(load_manifest(manifest))
