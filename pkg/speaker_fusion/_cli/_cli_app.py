import functools
import logging
import sys
from pathlib import Path
from typing import Optional, Tuple

import click

from speaker_fusion import (
    FEATURE_SETS,
    SYSTEMS,
    FeatureKind,
    SpeakerFusionError,
    ToolkitConfig,
    generate_synthetic_corpus,
)
from speaker_fusion._experiment._tables import TABLE_FORMATS

from . import _stages


def _parse_feature_list(value: str) -> Tuple[str, ...]:
    """Parse a comma-separated list of feature sets.

    Args:
        value: e.g. "F1,F2,F5" (case-insensitive, spaces allowed)

    Returns:
        The feature sets in canonical order without duplicates

    Raises:
        ValueError: If a name is unknown or the list is empty
    """
    names = {part.strip().upper() for part in value.split(",") if part.strip()}
    unknown = sorted(names - set(FEATURE_SETS))
    if unknown:
        raise ValueError(f"Unknown feature set: {', '.join(unknown)}")
    if not names:
        raise ValueError("At least one feature set is required")
    return tuple(f for f in FEATURE_SETS if f in names)


def _parse_system_list(value: str) -> Tuple[int, ...]:
    """Parse a comma-separated list of system numbers such as "1,3"."""
    try:
        numbers = {int(part) for part in value.split(",") if part.strip()}
    except ValueError as e:
        raise ValueError(f"Invalid system list: {value}") from e
    unknown = sorted(numbers - set(SYSTEMS))
    if unknown:
        raise ValueError(f"Unknown system: {', '.join(map(str, unknown))}")
    if not numbers:
        raise ValueError("At least one system is required")
    return tuple(s for s in SYSTEMS if s in numbers)


def _as_callback(parser):
    def callback(ctx, param, value):
        try:
            return parser(value)
        except ValueError as e:
            raise click.BadParameter(str(e)) from e

    return callback


def _load_config(config_path: Optional[str], seed: Optional[int]) -> ToolkitConfig:
    config = ToolkitConfig.from_file(config_path) if config_path else ToolkitConfig()
    return config if seed is None else config.with_seed(seed)


def _exits_on_error(command):
    """Report library errors on stderr and exit with the code of their family."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except SpeakerFusionError as e:
            click.echo(f"An error occurred: {e}", err=True)
            sys.exit(e.exit_code)
        except OSError as e:
            click.echo(f"An I/O error occurred: {e}", err=True)
            sys.exit(4)

    return wrapper


_manifest_option = click.option(
    "--manifest",
    "manifest_path",
    required=True,
    type=click.Path(dir_okay=False, path_type=Path),
    help="JSON-lines corpus manifest",
)
_seed_option = click.option(
    "--seed", type=int, default=None, help="Seed for EM, SMO and the train/test split"
)
_config_option = click.option(
    "--config",
    "config_path",
    default=None,
    type=click.Path(dir_okay=False),
    help="JSON configuration file overriding the defaults",
)
_out_option = click.option(
    "--out",
    default="out",
    type=click.Path(file_okay=False, path_type=Path),
    help="Output directory. Default: out",
)
_kind_option = click.option(
    "--kind",
    required=True,
    type=click.Choice([k.value for k in FeatureKind]),
    help="Feature stream kind",
)
_feature_option = click.option(
    "--feature",
    "feature_set",
    required=True,
    type=click.Choice(list(FEATURE_SETS), case_sensitive=False),
    callback=lambda ctx, param, value: value.upper(),
    help="Feature set",
)


@click.group()
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for every decision")
def main(verbose: int):
    """Text-independent speaker identification with GMM supervectors and fusion"""
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@main.command()
@_manifest_option
@_seed_option
@_config_option
@_out_option
@_exits_on_error
def extract(manifest_path: Path, seed: Optional[int], config_path: Optional[str], out: Path):
    """Compute feature archives for every utterance with audio"""
    config = _load_config(config_path, seed)
    manifest = _stages.load_split_manifest(manifest_path, config)
    derived = _stages.extract_features(manifest, config, out)
    click.echo(f"Feature archives written; use {derived} as the manifest of later stages")


@main.command("train-ubm")
@_manifest_option
@_kind_option
@_seed_option
@_config_option
@_out_option
@_exits_on_error
def train_ubm(
    manifest_path: Path, kind: str, seed: Optional[int], config_path: Optional[str], out: Path
):
    """Train the background model of one feature kind"""
    config = _load_config(config_path, seed)
    manifest = _stages.load_split_manifest(manifest_path, config)
    path = _stages.train_ubm(manifest, config, FeatureKind(kind), out)
    click.echo(f"UBM written: {path}")


@main.command()
@_manifest_option
@_kind_option
@_seed_option
@_config_option
@_out_option
@_exits_on_error
def adapt(
    manifest_path: Path, kind: str, seed: Optional[int], config_path: Optional[str], out: Path
):
    """MAP-adapt one model per utterance and store the supervectors"""
    config = _load_config(config_path, seed)
    manifest = _stages.load_split_manifest(manifest_path, config)
    path = _stages.adapt(manifest, config, FeatureKind(kind), out)
    click.echo(f"Supervectors written: {path}")


@main.command()
@_manifest_option
@click.option("--system", required=True, type=click.Choice(["svm", "nb"]), help="Back-end")
@_feature_option
@_seed_option
@_config_option
@_out_option
@_exits_on_error
def train(
    manifest_path: Path,
    system: str,
    feature_set: str,
    seed: Optional[int],
    config_path: Optional[str],
    out: Path,
):
    """Train the SVM or Naive Bayes back-end of one feature set"""
    config = _load_config(config_path, seed)
    manifest = _stages.load_split_manifest(manifest_path, config)
    path = _stages.train_classifier(manifest, config, system, feature_set, out)
    click.echo(f"Classifier written: {path}")


@main.command()
@_manifest_option
@_feature_option
@click.option("--system", required=True, type=click.IntRange(1, 3), help="System 1, 2 or 3")
@_seed_option
@_config_option
@_out_option
@_exits_on_error
def evaluate(
    manifest_path: Path,
    feature_set: str,
    system: int,
    seed: Optional[int],
    config_path: Optional[str],
    out: Path,
):
    """Identify every test utterance and report the identification rate"""
    config = _load_config(config_path, seed)
    manifest = _stages.load_split_manifest(manifest_path, config)
    rate, trials = _stages.evaluate(manifest, config, feature_set, system, out)
    click.echo(
        f"Feature {feature_set[1:]} System {system}: IR {rate.formatted()}% "
        f"({rate.correct}/{rate.total}); trials written to {trials}"
    )


@main.command("run-grid")
@_manifest_option
@click.option(
    "--features",
    default=",".join(FEATURE_SETS),
    callback=_as_callback(_parse_feature_list),
    help="Comma-separated feature sets. Default: F1,F2,F3,F4,F5",
)
@click.option(
    "--systems",
    default="1,2,3",
    callback=_as_callback(_parse_system_list),
    help="Comma-separated systems. Default: 1,2,3",
)
@click.option(
    "--format",
    "table_format",
    default="text",
    type=click.Choice(list(TABLE_FORMATS)),
    help="Output format of the results tables. Default: text",
)
@_seed_option
@_config_option
@_out_option
@_exits_on_error
def run_grid(
    manifest_path: Path,
    features: Tuple[str, ...],
    systems: Tuple[int, ...],
    table_format: str,
    seed: Optional[int],
    config_path: Optional[str],
    out: Path,
):
    """Evaluate the feature set x system grid and print the results tables"""
    config = _load_config(config_path, seed)
    manifest = _stages.load_split_manifest(manifest_path, config)
    rendered = _stages.run_full_grid(manifest, config, features, systems, table_format, out)
    click.echo(rendered, nl=False)


@main.command("synth-corpus")
@click.option("--seed", type=int, default=0, help="Corpus seed. Default: 0")
@click.option("--speakers", type=click.IntRange(2), default=10, help="Number of speakers")
@click.option("--utterances", type=click.IntRange(2), default=10, help="Utterances per speaker")
@click.option("--frames", type=click.IntRange(1), default=200, help="Frames per utterance")
@click.option("--n-train", type=click.IntRange(1), default=8, help="Train utterances per speaker")
@click.option("--n-test", type=click.IntRange(1), default=2, help="Test utterances per speaker")
@_out_option
@_exits_on_error
def synth_corpus(
    seed: int, speakers: int, utterances: int, frames: int, n_train: int, n_test: int, out: Path
):
    """Generate an artificial corpus of feature archives and its manifest"""
    manifest = generate_synthetic_corpus(
        out,
        seed=seed,
        n_speakers=speakers,
        n_utterances=utterances,
        n_frames=frames,
        n_train=n_train,
        n_test=n_test,
    )
    click.echo(f"Synthetic corpus of {len(manifest)} utterances written: {out / 'manifest.jsonl'}")
