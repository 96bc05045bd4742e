"""Command-line entry point.

One binary with subcommands for each experiment stage: corpus synthesis,
feature extraction, single-cell training, the full grid, the mapping
upper bound, density maps, the novel-class experiment, and annotator
agreement.  Exit codes: 0 success, 1 hard error, 2 partial grid failure.
"""

from __future__ import annotations

import sys
from dataclasses import fields
from pathlib import Path

import click
import numpy as np

from .corpus import aggregate_corpus, load_manifest, make_splits, write_manifest
from .harness import (
    ExperimentConfig,
    agreement_stats,
    density_map,
    emit_report,
    mapping_upper_bound,
    novel_class_eval,
    render_markdown,
    run_grid,
)
from .nn import TrainConfig
from .synth import default_spec, synth_corpus


class ConfigError(Exception):
    """Bad key=value config file."""


def parse_config(path) -> dict:
    """Flat key=value config: one pair per line, # comments, typed values.

    Values become int/float/bool when they parse as one; comma-separated
    values become tuples.
    """
    conf = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        conf[key.strip()] = _convert(value.strip())
    return conf


def _convert(text: str):
    if "," in text:
        return tuple(_convert(v.strip()) for v in text.split(",") if v.strip())
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


TRAIN_KEYS = {f.name for f in fields(TrainConfig)}
EXPERIMENT_KEYS = {f.name for f in fields(ExperimentConfig)} - {"train_cfg"}
TUPLE_KEYS = ("architectures", "approaches", "mappers")


def experiment_config(conf: dict, seed: int, out_dir: str,
                      extra_keys=()) -> ExperimentConfig:
    if "manifest" not in conf:
        raise ConfigError("config needs a manifest=... entry")
    exp, tr = {}, {}
    for key, value in conf.items():
        if key in EXPERIMENT_KEYS:
            exp[key] = value
        elif key in TRAIN_KEYS:
            tr[key] = value
        elif key not in extra_keys:
            raise ConfigError(f"unknown config key {key!r}")
    for key in TUPLE_KEYS:
        if key in exp and not isinstance(exp[key], tuple):
            exp[key] = (exp[key],)
    exp.pop("seed", None)
    exp.pop("out_dir", None)
    tr["seed"] = seed
    return ExperimentConfig(train_cfg=TrainConfig(**tr), seed=seed,
                            out_dir=out_dir, **exp)


def common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="key=value config file")(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True)(fn)
    fn = click.option("--out-dir", default=".", show_default=True)(fn)
    return fn


@click.group()
def cli():
    """Emotion recognition via dimensional regression: experiment toolkit."""


@cli.command()
@common_options
def synth(config_path, seed, out_dir):
    """Generate a synthetic corpus (manifest + feature files)."""
    conf = parse_config(config_path)
    spec_keys = {"n_samples", "n_annotators", "avd_noise", "label_noise",
                 "tie_rate", "feature_dims", "feature_frames", "feature_noise",
                 "name"}
    unknown = set(conf) - spec_keys
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    spec = default_spec(**conf)
    corpus = synth_corpus(spec, seed=seed, out_dir=out_dir)
    click.echo(f"wrote {len(corpus.samples)} samples to {out_dir}/manifest.jsonl")


@cli.command()
@common_options
def extract(config_path, seed, out_dir):
    """Compute mel-spectrogram features for a manifest's audio files."""
    del seed  # extraction is deterministic
    conf = parse_config(config_path)
    if "manifest" not in conf:
        raise ConfigError("config needs a manifest=... entry")
    corpus = load_manifest(conf["manifest"])
    cfg = ExperimentConfig(manifest=conf["manifest"], feature_kind="mel")
    from .features import write_feature_file
    from .harness import load_features

    feats = load_features(corpus, cfg)
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    rel_paths = {}
    for sid, frames in feats.items():
        rel = f"features/{sid}.fea"
        write_feature_file(frames.astype(np.float32), out / rel)
        rel_paths[sid] = rel
    write_manifest(corpus, out / "manifest.jsonl", feature_paths=rel_paths)
    click.echo(f"extracted {len(feats)} feature files to {out}/features")


@cli.command()
@common_options
def train(config_path, seed, out_dir):
    """Train and evaluate one grid cell (single architecture)."""
    conf = parse_config(config_path)
    cfg = experiment_config(conf, seed, out_dir)
    if len(cfg.architectures) != 1:
        raise ConfigError("train runs exactly one architecture")
    table = run_grid(cfg)
    emit_report(table, out_dir, name="train")
    click.echo(render_markdown(table))
    if table.has_errors():
        sys.exit(1)


@cli.command()
@common_options
def grid(config_path, seed, out_dir):
    """Run the full feature x architecture x approach grid."""
    conf = parse_config(config_path)
    cfg = experiment_config(conf, seed, out_dir)
    table = run_grid(cfg)
    emit_report(table, out_dir, name="grid")
    click.echo(render_markdown(table))
    if table.has_errors():
        sys.exit(2)


@cli.command(name="upper-bound")
@common_options
def upper_bound(config_path, seed, out_dir):
    """Score the mappers on ground-truth AVD (the mapping upper bound)."""
    conf = parse_config(config_path)
    cfg = experiment_config(conf, seed, out_dir)
    corpus = aggregate_corpus(load_manifest(cfg.manifest))
    splits = make_splits(corpus, cfg.split_scheme, cfg.n_folds, seed)
    table = mapping_upper_bound(corpus, splits, mappers=cfg.mappers,
                                knn_k=cfg.knn_k, seed=seed)
    emit_report(table, out_dir, name="upper_bound")
    click.echo(render_markdown(table))


@cli.command()
@common_options
@click.option("--grid-size", type=int, default=50, show_default=True)
def density(config_path, seed, out_dir, grid_size):
    """Emit per-class arousal/valence density grids (CSV + SVG)."""
    del seed  # histogramming is deterministic
    conf = parse_config(config_path)
    if "manifest" not in conf:
        raise ConfigError("config needs a manifest=... entry")
    corpus = aggregate_corpus(load_manifest(conf["manifest"]))
    grids = density_map(corpus, g=grid_size, out_dir=out_dir)
    click.echo(f"wrote {len(grids)} density grids to {out_dir}")


@cli.command(name="novel-class")
@common_options
def novel_class(config_path, seed, out_dir):
    """Evaluate recognizing a class the regressor never trained on."""
    conf = parse_config(config_path)
    held = conf.get("held_out_class")
    if not held:
        raise ConfigError("config needs a held_out_class=... entry")
    cfg = experiment_config(conf, seed, out_dir, extra_keys=("held_out_class",))
    table = novel_class_eval(cfg, held)
    emit_report(table, out_dir, name="novel_class")
    click.echo(render_markdown(table))


@cli.command()
@common_options
def agreement(config_path, seed, out_dir):
    """Annotator agreement: alpha per AVD dimension, Fleiss' kappa."""
    del seed  # agreement statistics are deterministic
    conf = parse_config(config_path)
    if "manifest" not in conf:
        raise ConfigError("config needs a manifest=... entry")
    corpus = aggregate_corpus(load_manifest(conf["manifest"]))
    table = agreement_stats(corpus)
    emit_report(table, out_dir, name="agreement")
    click.echo(render_markdown(table))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except SystemExit as e:  # explicit exit codes from commands
        return int(e.code or 0)
    except click.exceptions.Exit as e:  # --help and friends
        return e.exit_code
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        return 1
    except Exception as e:  # noqa: BLE001 - hard errors map to exit 1
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
