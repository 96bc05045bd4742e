"""Corpus data model: manifest ingestion, annotation aggregation, splits, priors.

A corpus ties together samples, per-annotator categorical and dimensional
(arousal/valence/dominance) annotations, a label vocabulary, and the native
rating scale.  Aggregation follows the usual protocol: strict-plurality
majority vote for categorical labels (ties are discarded) and the mean of
raw ratings, min-max normalized to [0,1], for dimensional ones.  Samples
without an agreed label stay in the corpus; regression training can still
use them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ManifestError(Exception):
    """Malformed or inconsistent corpus manifest."""


@dataclass(frozen=True)
class EmotionLabel:
    index: int
    name: str


@dataclass(frozen=True)
class AVDVector:
    """Arousal/valence/dominance on the normalized [0,1] scale."""

    arousal: float
    valence: float
    dominance: float

    def as_array(self) -> np.ndarray:
        return np.array([self.arousal, self.valence, self.dominance])

    @staticmethod
    def from_array(a) -> "AVDVector":
        a = np.asarray(a, dtype=float)
        if a.shape != (3,) or not np.all(np.isfinite(a)):
            raise ValueError("AVD vector must be 3 finite values")
        return AVDVector(float(a[0]), float(a[1]), float(a[2]))


@dataclass
class AnnotationRecord:
    """One annotator's opinion: a categorical label and/or a raw AVD rating."""

    annotator_id: str
    label: EmotionLabel | None = None
    avd_raw: np.ndarray | None = None  # on the corpus's native scale

    def __post_init__(self):
        if self.label is None and self.avd_raw is None:
            raise ValueError("annotation needs a label or an AVD rating")
        if self.avd_raw is not None:
            self.avd_raw = np.asarray(self.avd_raw, dtype=float)
            if self.avd_raw.shape != (3,):
                raise ValueError("AVD rating must have 3 components")


@dataclass
class Sample:
    id: str
    feature_path: str | None = None
    audio_path: str | None = None
    split_tag: str | None = None
    annotations: list[AnnotationRecord] = field(default_factory=list)
    aggregated_label: EmotionLabel | None = None
    aggregated_avd: AVDVector | None = None


@dataclass
class Corpus:
    name: str
    vocabulary: list[EmotionLabel]
    samples: list[Sample]
    avd_scale: tuple[float, float] = (0.0, 1.0)

    def label_by_name(self, name: str) -> EmotionLabel:
        for lab in self.vocabulary:
            if lab.name == name:
                return lab
        raise KeyError(name)


@dataclass
class SplitPlan:
    """Assignment of every sample id to a fold (kfold) or partition (fixed)."""

    scheme: str  # "kfold" or "fixed"
    n_folds: int | None
    assignments: dict[str, str]  # sample id -> "0".."k-1" or "train"/"dev"/"test"

    def members(self, part: str) -> list[str]:
        return [sid for sid, p in self.assignments.items() if p == part]


def load_manifest(path) -> Corpus:
    """Read a JSON-lines manifest into an unaggregated Corpus.

    The first line is a header object with the corpus name, vocabulary and
    native AVD scale; each following line describes one sample.  Feature and
    audio paths are resolved relative to the manifest's directory.
    """
    path = Path(path)
    base = path.parent
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty manifest, header line required")

    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}:1: malformed header: {e}") from e
    for key in ("corpus", "vocabulary", "avd_scale"):
        if key not in header:
            raise ManifestError(f"{path}:1: header missing {key!r}")
    names = header["vocabulary"]
    if len(set(names)) != len(names):
        raise ManifestError(f"{path}:1: duplicate label names in vocabulary")
    vocabulary = [EmotionLabel(i, n) for i, n in enumerate(names)]
    by_name = {lab.name: lab for lab in vocabulary}
    scale = (float(header["avd_scale"]["min"]), float(header["avd_scale"]["max"]))
    if scale[1] <= scale[0]:
        raise ManifestError(f"{path}:1: avd_scale max must exceed min")

    samples: list[Sample] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ManifestError(f"{path}:{lineno}: malformed line: {e}") from e
        try:
            sid = rec["id"]
            if sid in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate sample id {sid!r}")
            seen.add(sid)
            annotations = []
            for ann in rec.get("annotations", []):
                label = None
                if "label" in ann and ann["label"] is not None:
                    if ann["label"] not in by_name:
                        raise ManifestError(
                            f"{path}:{lineno}: unknown label {ann['label']!r}"
                        )
                    label = by_name[ann["label"]]
                avd = ann.get("avd")
                annotations.append(
                    AnnotationRecord(ann["annotator"], label=label, avd_raw=avd)
                )
            feature_path = rec.get("feature_path")
            audio_path = rec.get("audio_path")
            if feature_path is None and audio_path is None:
                raise ManifestError(
                    f"{path}:{lineno}: sample {sid!r} has neither feature_path nor audio_path"
                )
            samples.append(
                Sample(
                    id=sid,
                    feature_path=str(base / feature_path) if feature_path else None,
                    audio_path=str(base / audio_path) if audio_path else None,
                    split_tag=rec.get("split"),
                    annotations=annotations,
                )
            )
        except ManifestError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"{path}:{lineno}: malformed record: {e}") from e

    return Corpus(name=header["corpus"], vocabulary=vocabulary, samples=samples,
                  avd_scale=scale)


def write_manifest(corpus: Corpus, path, feature_paths: dict | None = None) -> None:
    """Serialize a corpus back to a JSON-lines manifest.

    feature_paths optionally overrides per-sample feature paths (given
    relative to the manifest's directory); stored paths are kept otherwise.
    """
    lines = [json.dumps({
        "corpus": corpus.name,
        "vocabulary": [lab.name for lab in corpus.vocabulary],
        "avd_scale": {"min": corpus.avd_scale[0], "max": corpus.avd_scale[1]},
    })]
    for s in corpus.samples:
        rec = {"id": s.id}
        fp = feature_paths.get(s.id) if feature_paths else s.feature_path
        if fp:
            rec["feature_path"] = fp
        if s.audio_path:
            rec["audio_path"] = s.audio_path
        if s.split_tag:
            rec["split"] = s.split_tag
        anns = []
        for a in s.annotations:
            ann = {"annotator": a.annotator_id}
            if a.label is not None:
                ann["label"] = a.label.name
            if a.avd_raw is not None:
                ann["avd"] = [float(v) for v in a.avd_raw]
            anns.append(ann)
        rec["annotations"] = anns
        lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def aggregate_categorical(sample: Sample) -> EmotionLabel | None:
    """Majority vote with a strict-plurality rule.

    Returns the label voted strictly more often than any other, or None when
    the top count is shared (the sample is then discarded for classification).
    """
    votes = [a.label for a in sample.annotations if a.label is not None]
    if not votes:
        raise ValueError(f"sample {sample.id!r} has no categorical annotations")
    counts: dict[int, int] = {}
    for lab in votes:
        counts[lab.index] = counts.get(lab.index, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: -kv[1])
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return None
    winner = ranked[0][0]
    return next(lab for lab in votes if lab.index == winner)


def aggregate_dimensional(sample: Sample, scale: tuple[float, float]) -> AVDVector:
    """Mean of raw AVD ratings, min-max normalized by the native scale."""
    raws = [a.avd_raw for a in sample.annotations if a.avd_raw is not None]
    if not raws:
        raise ValueError(f"sample {sample.id!r} has no dimensional annotations")
    lo, hi = scale
    stacked = np.stack(raws)
    if stacked.min() < lo or stacked.max() > hi:
        raise ValueError(
            f"sample {sample.id!r}: AVD rating outside native scale [{lo}, {hi}]"
        )
    mean = stacked.mean(axis=0)
    return AVDVector.from_array((mean - lo) / (hi - lo))


def aggregate_corpus(corpus: Corpus) -> Corpus:
    """Run both aggregation passes in place and return the corpus."""
    for s in corpus.samples:
        if any(a.label is not None for a in s.annotations):
            s.aggregated_label = aggregate_categorical(s)
        if any(a.avd_raw is not None for a in s.annotations):
            s.aggregated_avd = aggregate_dimensional(s, corpus.avd_scale)
    return corpus


def discard_rate(corpus: Corpus) -> float:
    """Fraction of samples without an agreed categorical label."""
    if not corpus.samples:
        raise ValueError("empty corpus")
    n_discarded = sum(1 for s in corpus.samples if s.aggregated_label is None)
    return n_discarded / len(corpus.samples)


def make_splits(corpus: Corpus, scheme: str = "kfold", k: int = 5,
                seed: int = 0) -> SplitPlan:
    """Build a split plan.

    kfold: deterministic seeded shuffle, then round-robin fold assignment
    (fold sizes differ by at most one).  fixed: partitions copied from each
    sample's split tag.
    """
    if scheme == "kfold":
        rng = np.random.default_rng(seed)
        order = rng.permutation(len(corpus.samples))
        assignments = {
            corpus.samples[idx].id: str(pos % k) for pos, idx in enumerate(order)
        }
        return SplitPlan("kfold", k, assignments)
    if scheme == "fixed":
        assignments = {}
        for s in corpus.samples:
            if not s.split_tag:
                raise ValueError(f"fixed split scheme but sample {s.id!r} has no split tag")
            assignments[s.id] = s.split_tag
        return SplitPlan("fixed", None, assignments)
    raise ValueError(f"unknown split scheme {scheme!r}")


def class_priors(corpus: Corpus, sample_ids=None) -> np.ndarray:
    """Per-class relative frequencies of aggregated labels over a subset.

    Samples without an agreed label are ignored; the subset must contain at
    least one labeled sample.
    """
    wanted = None if sample_ids is None else set(sample_ids)
    counts = np.zeros(len(corpus.vocabulary))
    for s in corpus.samples:
        if wanted is not None and s.id not in wanted:
            continue
        if s.aggregated_label is not None:
            counts[s.aggregated_label.index] += 1
    total = counts.sum()
    if total == 0:
        raise ValueError("no labeled samples in the selected subset")
    return counts / total
