"""Experiment orchestration: the feature x architecture grid, the mapping
upper bound, density maps, the novel-class experiment, and report emission.

The protocol for each grid cell: direct classification trains on hard
labels only (vote-tie samples excluded), while regression trains on the
mean AVD of every sample, including the discarded ones.  Mappers are
fitted per fold on the training set's ground-truth AVD and hard labels,
then applied to the regressor's test predictions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import Corpus, aggregate_corpus, load_manifest, make_splits
from .features import (
    FrameConfig,
    mel_spectrogram,
    pad_truncate,
    read_feature_file,
    summarize_mean_var,
)
from .mapping import DummyMapper, fit_2lp, fit_gaussian, fit_knn
from .metrics import ccc, confusion, per_class_precision_recall, unweighted_recall, weighted_recall
from .nn import ModelSpec, TrainConfig, build_model, train

AVD_DIMS = ("arousal", "valence", "dominance")
MAPPER_NAMES = ("gaussian", "knn", "2lp")
DUMMY_NAMES = ("random", "prob_random", "major_class")


@dataclass
class ExperimentConfig:
    manifest: str
    feature_kind: str = "precomputed"  # precomputed | mel
    architectures: tuple = ("mlp",)
    approaches: tuple = ("classification", "regression")
    mappers: tuple = MAPPER_NAMES
    split_scheme: str = "kfold"  # kfold | fixed
    n_folds: int = 5
    dev_fraction: float = 0.1
    target_frames: int = 500
    knn_k: int = 50
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    out_dir: str = "."

    def __post_init__(self):
        if self.feature_kind not in ("precomputed", "mel"):
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if not self.approaches:
            raise ValueError("at least one approach required")
        for a in self.approaches:
            if a not in ("classification", "regression"):
                raise ValueError(f"unknown approach {a!r}")
        for a in self.architectures:
            if a not in ("mlp", "cnn", "cnn_trans"):
                raise ValueError(f"unknown architecture {a!r}")
        for m in self.mappers:
            if m not in MAPPER_NAMES:
                raise ValueError(f"unknown mapper {m!r}")


@dataclass
class ResultTable:
    """Rows keyed by a pair of strings; every cell is a float or an error."""

    key_names: tuple = ("feature", "architecture")
    columns: list = field(default_factory=list)
    rows: dict = field(default_factory=dict)    # key -> {column: float}
    errors: dict = field(default_factory=dict)  # key -> {column: message}
    config_echo: str = ""

    def set_value(self, key, column, value):
        if column not in self.columns:
            self.columns.append(column)
        self.rows.setdefault(key, {})[column] = float(value)

    def set_error(self, key, column, message):
        if column not in self.columns:
            self.columns.append(column)
        self.rows.setdefault(key, {})
        self.errors.setdefault(key, {})[column] = str(message)

    def has_errors(self) -> bool:
        return bool(self.errors)


def load_features(corpus: Corpus, cfg: ExperimentConfig) -> dict:
    """Frame matrices per sample id: read from feature files or computed
    as mel spectrograms from audio."""
    feats = {}
    if cfg.feature_kind == "precomputed":
        for s in corpus.samples:
            if s.feature_path is None:
                raise ValueError(f"sample {s.id!r} has no feature file")
            feats[s.id] = read_feature_file(s.feature_path)
        return feats
    from scipy.io import wavfile

    fc = FrameConfig()
    for s in corpus.samples:
        if s.audio_path is None:
            raise ValueError(f"sample {s.id!r} has no audio file")
        rate, wav = wavfile.read(s.audio_path)
        scale = 32768.0 if np.issubdtype(wav.dtype, np.integer) else 1.0
        wav = np.asarray(wav, dtype=float) / scale
        if wav.ndim == 2:
            wav = wav.mean(axis=1)
        feats[s.id] = mel_spectrogram(wav, rate, replace(fc, sample_rate=rate))
    return feats


def _fold_parts(corpus: Corpus, splits, cfg: ExperimentConfig, fold: int):
    """(train_ids, dev_ids, test_ids) for one fold, disjointness asserted."""
    if splits.scheme == "fixed":
        tr, dv, te = splits.members("train"), splits.members("dev"), splits.members("test")
    else:
        te = splits.members(str(fold))
        te_set = set(te)
        tr = [s.id for s in corpus.samples if s.id not in te_set]
        rng = np.random.default_rng(cfg.seed * 7919 + fold)
        order = rng.permutation(len(tr))
        n_dev = int(cfg.dev_fraction * len(tr))
        dv = [tr[i] for i in order[:n_dev]]
        dv_set = set(dv)
        tr = [i for i in tr if i not in dv_set]
    if set(tr) & set(te) or set(dv) & set(te):
        raise RuntimeError(f"fold {fold}: train/dev overlap test")
    if not tr or not te:
        raise ValueError(f"fold {fold}: empty train or test partition")
    return tr, dv, te


def _inputs_for(arch: str, ids, feats, pooled, cfg: ExperimentConfig):
    if arch == "mlp":
        return np.stack([pooled[i] for i in ids])
    return np.stack([pad_truncate(feats[i], cfg.target_frames) for i in ids])


def _fit_mapper(name: str, points, labels, n_classes: int, cfg: ExperimentConfig,
                seed: int):
    if name == "gaussian":
        return fit_gaussian(points, labels, n_classes)
    if name == "knn":
        return fit_knn(points, labels, n_classes, k=cfg.knn_k)
    return fit_2lp(points, labels, n_classes, seed=seed)


def _run_cell_fold(corpus, by_id, feats, pooled, arch, parts, cfg, fold):
    """One (architecture, fold) run; returns {column: value}."""
    tr, dv, te = parts
    n_classes = len(corpus.vocabulary)
    input_dims = next(iter(feats.values())).shape[1]
    out = {}
    seed = cfg.seed * 1000 + fold
    tcfg = replace(cfg.train_cfg, seed=seed)

    labeled = lambda ids: [i for i in ids if by_id[i].aggregated_label is not None]
    with_avd = lambda ids: [i for i in ids if by_id[i].aggregated_avd is not None]
    labels_of = lambda ids: np.array([by_id[i].aggregated_label.index for i in ids])
    avd_of = lambda ids: np.stack([by_id[i].aggregated_avd.as_array() for i in ids])

    if "classification" in cfg.approaches:
        tr_l, dv_l, te_l = labeled(tr), labeled(dv), labeled(te)
        spec = ModelSpec(architecture=arch, head="classification",
                         input_dims=input_dims, n_outputs=n_classes)
        model = build_model(spec, seed)
        train(model, _inputs_for(arch, tr_l, feats, pooled, cfg), labels_of(tr_l),
              _inputs_for(arch, dv_l, feats, pooled, cfg) if dv_l else None,
              labels_of(dv_l) if dv_l else None, tcfg)
        preds = model.predict(_inputs_for(arch, te_l, feats, pooled, cfg))
        cm = confusion(labels_of(te_l), preds, n_classes)
        out["clf_ur"] = unweighted_recall(cm)
        out["clf_wr"] = weighted_recall(cm)

    if "regression" in cfg.approaches:
        tr_r, dv_r, te_r = with_avd(tr), with_avd(dv), with_avd(te)
        spec = ModelSpec(architecture=arch, head="regression",
                         input_dims=input_dims, n_outputs=3)
        model = build_model(spec, seed + 1)
        train(model, _inputs_for(arch, tr_r, feats, pooled, cfg), avd_of(tr_r),
              _inputs_for(arch, dv_r, feats, pooled, cfg) if dv_r else None,
              avd_of(dv_r) if dv_r else None, tcfg)
        pred_avd = model.predict(_inputs_for(arch, te_r, feats, pooled, cfg))
        ref_avd = avd_of(te_r)
        for d, name in enumerate(AVD_DIMS):
            out[f"ccc_{name}"] = ccc(ref_avd[:, d], pred_avd[:, d])

        tr_l, te_l = labeled(tr), labeled(te)
        te_l_pos = {i: p for p, i in enumerate(te_r)}
        te_eval = [i for i in te_l if i in te_l_pos]
        for m in cfg.mappers:
            mapper = _fit_mapper(m, avd_of(tr_l), labels_of(tr_l), n_classes,
                                 cfg, seed)
            mapped = mapper.predict(pred_avd[[te_l_pos[i] for i in te_eval]])
            cm = confusion(labels_of(te_eval), mapped, n_classes)
            out[f"map_{m}_ur"] = unweighted_recall(cm)
            out[f"map_{m}_wr"] = weighted_recall(cm)

    return out


def run_grid(cfg: ExperimentConfig, corpus: Corpus | None = None) -> ResultTable:
    """Run the full grid; failures are recorded per cell, not raised."""
    if corpus is None:
        corpus = aggregate_corpus(load_manifest(cfg.manifest))
    by_id = {s.id: s for s in corpus.samples}
    splits = make_splits(corpus, cfg.split_scheme, cfg.n_folds, cfg.seed)
    feats = load_features(corpus, cfg)
    pooled = {i: summarize_mean_var(f) for i, f in feats.items()}
    folds = range(cfg.n_folds) if splits.scheme == "kfold" else (0,)

    table = ResultTable(config_echo=repr(cfg))
    for arch in cfg.architectures:
        key = (cfg.feature_kind, arch)
        try:
            per_fold = [
                _run_cell_fold(corpus, by_id, feats, pooled, arch,
                               _fold_parts(corpus, splits, cfg, f), cfg, f)
                for f in folds
            ]
            for col in per_fold[0]:
                table.set_value(key, col, np.mean([r[col] for r in per_fold]))
        except Exception as e:  # noqa: BLE001 - partial tables are useful
            table.set_error(key, "cell", f"{type(e).__name__}: {e}")
    return table


def mapping_upper_bound(corpus: Corpus, splits, mappers=MAPPER_NAMES,
                        knn_k: int = 50, seed: int = 0) -> ResultTable:
    """Label prediction from ground-truth AVD: the ceiling for
    classification via regression, plus the three dummy baselines."""
    by_id = {s.id: s for s in corpus.samples}
    n_classes = len(corpus.vocabulary)
    cfg = ExperimentConfig(manifest="", knn_k=knn_k, seed=seed)
    cfg = replace(cfg, split_scheme=splits.scheme, n_folds=splits.n_folds or 1)
    folds = range(cfg.n_folds) if splits.scheme == "kfold" else (0,)

    ok = lambda i: (by_id[i].aggregated_label is not None
                    and by_id[i].aggregated_avd is not None)
    table = ResultTable(key_names=("input", "mapper"))
    accum: dict = {}
    for fold in folds:
        tr, dv, te = _fold_parts(corpus, splits, cfg, fold)
        tr = [i for i in tr + dv if ok(i)]
        te = [i for i in te if ok(i)]
        if not tr or not te:
            raise ValueError("missing categorical or dimensional annotations")
        tr_avd = np.stack([by_id[i].aggregated_avd.as_array() for i in tr])
        tr_lab = np.array([by_id[i].aggregated_label.index for i in tr])
        te_avd = np.stack([by_id[i].aggregated_avd.as_array() for i in te])
        te_lab = np.array([by_id[i].aggregated_label.index for i in te])
        priors = np.bincount(tr_lab, minlength=n_classes) / len(tr_lab)

        for m in mappers:
            mapper = _fit_mapper(m, tr_avd, tr_lab, n_classes, cfg,
                                 seed * 1000 + fold)
            cm = confusion(te_lab, mapper.predict(te_avd), n_classes)
            accum.setdefault(("ground_truth", m), []).append(
                (unweighted_recall(cm), weighted_recall(cm)))
        for d in DUMMY_NAMES:
            dummy = DummyMapper(d, None if d == "random" else priors)
            preds = dummy.predict_n(len(te), n_classes, seed=seed * 1000 + fold)
            cm = confusion(te_lab, preds, n_classes)
            accum.setdefault(("dummy", d), []).append(
                (unweighted_recall(cm), weighted_recall(cm)))

    for key, vals in accum.items():
        table.set_value(key, "ur", np.mean([v[0] for v in vals]))
        table.set_value(key, "wr", np.mean([v[1] for v in vals]))
    return table


def density_map(corpus: Corpus, g: int = 50, out_dir=None) -> dict:
    """Per-class G x G count grids over normalized arousal (columns) and
    valence (rows); optionally written as CSV plus an SVG heatmap each."""
    grids = {lab.name: np.zeros((g, g), dtype=int) for lab in corpus.vocabulary}
    n_labeled = 0
    for s in corpus.samples:
        if s.aggregated_label is None or s.aggregated_avd is None:
            continue
        n_labeled += 1
        ix = min(int(s.aggregated_avd.arousal * g), g - 1)
        iy = min(int(s.aggregated_avd.valence * g), g - 1)
        grids[s.aggregated_label.name][iy, ix] += 1
    if n_labeled == 0:
        raise ValueError("no labeled samples with dimensional annotations")

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, grid in grids.items():
            rows = "\n".join(",".join(str(v) for v in row) for row in grid)
            (out_dir / f"density_{name}.csv").write_text(rows + "\n")
            (out_dir / f"density_{name}.svg").write_text(_svg_heatmap(grid, name))
    return grids


def _svg_heatmap(grid: np.ndarray, title: str, cell: int = 8) -> str:
    g = len(grid)
    top = max(int(grid.max()), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{g * cell}" '
        f'height="{g * cell + 20}">',
        f'<text x="4" y="14" font-size="12">{title}</text>',
    ]
    for iy in range(g):
        for ix in range(g):
            if grid[iy, ix] == 0:
                continue
            shade = 255 - int(200 * grid[iy, ix] / top)
            # valence grows upward: row 0 is the bottom of the plot
            y = 20 + (g - 1 - iy) * cell
            parts.append(
                f'<rect x="{ix * cell}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},255)"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)


def novel_class_eval(cfg: ExperimentConfig, held_out_class: str,
                     corpus: Corpus | None = None) -> ResultTable:
    """Train the regressor without ever seeing one class, map its test
    predictions with a Gaussian mapper fitted on ground truth including
    that class, and report per-class precision/recall."""
    if corpus is None:
        corpus = aggregate_corpus(load_manifest(cfg.manifest))
    try:
        held = corpus.label_by_name(held_out_class)
    except KeyError:
        raise ValueError(f"class {held_out_class!r} not in vocabulary") from None
    by_id = {s.id: s for s in corpus.samples}
    n_classes = len(corpus.vocabulary)

    splits = make_splits(corpus, cfg.split_scheme, cfg.n_folds, cfg.seed)
    tr, dv, te = _fold_parts(corpus, splits, cfg, 0)
    feats = load_features(corpus, cfg)
    pooled = {i: summarize_mean_var(f) for i, f in feats.items()}
    input_dims = next(iter(feats.values())).shape[1]
    arch = cfg.architectures[0]

    def keep(i):  # regressor never sees the held-out class
        s = by_id[i]
        return (s.aggregated_avd is not None
                and (s.aggregated_label is None or s.aggregated_label != held))

    tr_r = [i for i in tr if keep(i)]
    dv_r = [i for i in dv if keep(i)]
    avd_of = lambda ids: np.stack([by_id[i].aggregated_avd.as_array() for i in ids])
    spec = ModelSpec(architecture=arch, head="regression",
                     input_dims=input_dims, n_outputs=3)
    model = build_model(spec, cfg.seed)
    train(model, _inputs_for(arch, tr_r, feats, pooled, cfg), avd_of(tr_r),
          _inputs_for(arch, dv_r, feats, pooled, cfg) if dv_r else None,
          avd_of(dv_r) if dv_r else None, replace(cfg.train_cfg, seed=cfg.seed))

    tr_l = [i for i in tr if by_id[i].aggregated_label is not None
            and by_id[i].aggregated_avd is not None]
    if not any(by_id[i].aggregated_label == held for i in tr_l):
        raise ValueError(f"class {held_out_class!r} has no labeled train samples")
    labels_of = lambda ids: np.array([by_id[i].aggregated_label.index for i in ids])
    mapper = fit_gaussian(avd_of(tr_l), labels_of(tr_l), n_classes)

    te_l = [i for i in te if by_id[i].aggregated_label is not None
            and by_id[i].aggregated_avd is not None]
    preds = mapper.predict(model.predict(_inputs_for(arch, te_l, feats, pooled, cfg)))
    cm = confusion(labels_of(te_l), preds, n_classes)
    prec, rec = per_class_precision_recall(cm)

    table = ResultTable(key_names=("corpus", "class"),
                        config_echo=f"held_out={held_out_class!r}")
    for lab in corpus.vocabulary:
        key = ("novel" if lab == held else "seen", lab.name)
        table.set_value(key, "precision", np.nan_to_num(prec[lab.index]))
        table.set_value(key, "recall", np.nan_to_num(rec[lab.index]))
    return table


def agreement_stats(corpus: Corpus) -> ResultTable:
    """Inter-annotator agreement over a corpus: Krippendorff's alpha per
    AVD dimension (interval, raw ratings) and Fleiss' kappa over the
    categorical votes, computed on the samples sharing the modal number
    of votes (kappa requires equal rating counts)."""
    from .corpus import discard_rate
    from .metrics import fleiss_kappa, krippendorff_alpha

    annotators = sorted({a.annotator_id for s in corpus.samples
                         for a in s.annotations})
    col = {a: j for j, a in enumerate(annotators)}

    table = ResultTable(key_names=("kind", "metric"))
    for d, name in enumerate(AVD_DIMS):
        grid = []
        for s in corpus.samples:
            row = [np.nan] * len(annotators)
            for a in s.annotations:
                if a.avd_raw is not None:
                    row[col[a.annotator_id]] = a.avd_raw[d]
            grid.append(row)
        table.set_value(("alpha", name), "value",
                        krippendorff_alpha(grid, level="interval"))

    vote_counts = [sum(1 for a in s.annotations if a.label is not None)
                   for s in corpus.samples]
    usable = [c for c in vote_counts if c >= 2]
    if usable:
        modal = int(np.bincount(usable).argmax())
        counts = []
        for s, c in zip(corpus.samples, vote_counts):
            if c != modal:
                continue
            row = np.zeros(len(corpus.vocabulary))
            for a in s.annotations:
                if a.label is not None:
                    row[a.label.index] += 1
            counts.append(row)
        table.set_value(("kappa", "categorical"), "value", fleiss_kappa(counts))
        table.set_value(("kappa", "n_items"), "value", len(counts))
    table.set_value(("discard", "rate"), "value", discard_rate(corpus))
    return table


def emit_report(table: ResultTable, out_dir, name: str = "results",
                formats=("csv", "markdown")) -> list:
    """Write the table as CSV and/or markdown; byte output is a pure
    function of the table.  Floats are written with repr so the CSV
    re-parses to exactly the same values."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / f"{name}.csv"
        path.write_text(render_csv(table), encoding="utf-8")
        written.append(path)
    if "markdown" in formats:
        path = out_dir / f"{name}.md"
        path.write_text(render_markdown(table), encoding="utf-8")
        written.append(path)
    return written


def _cell_text(table: ResultTable, key, col) -> str:
    err = table.errors.get(key, {})
    if col in err:
        return f"FAILED: {err[col]}"
    if col in table.rows.get(key, {}):
        return repr(table.rows[key][col])
    return ""


def render_csv(table: ResultTable) -> str:
    lines = [f"# version: {__version__}"]
    if table.config_echo:
        lines.append(f"# config: {table.config_echo}")
    lines.append(",".join(list(table.key_names) + list(table.columns)))
    for key in table.rows:
        cells = [_cell_text(table, key, c) for c in table.columns]
        lines.append(",".join(list(key) + cells))
    return "\n".join(lines) + "\n"


def render_markdown(table: ResultTable) -> str:
    header = list(table.key_names) + list(table.columns)
    lines = [
        f"version: {__version__}",
        "",
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    for key in table.rows:
        cells = [_cell_text(table, key, c) for c in table.columns]
        lines.append("| " + " | ".join(list(key) + cells) + " |")
    if table.config_echo:
        lines += ["", f"config: `{table.config_echo}`"]
    return "\n".join(lines) + "\n"
