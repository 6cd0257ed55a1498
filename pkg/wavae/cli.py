#!/usr/bin/env python3
"""
wavae command-line tool.

Usage:
    wavae synth --spec default --out data/
    wavae train --data data/series.csv --out runs/demo --seed 7
    wavae eval --out runs/demo
    wavae score --data other.csv --out runs/demo
    wavae sweep --data data/series.csv --out runs/beta --grid beta=1e-5,5e-5,1e-4,5e-4,1e-3
"""

import functools
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click

from . import checkpoint, detect
from .config_loader import ConfigError, get_config, load_run_config
from .data import SYNTH_PRESETS, SeriesFrame, load_csv, synth, synth_spec_from_preset
from .sweep import merge_grids, parse_grid, split_run_config, sweep
from .train import CHECKPOINT_FILE, SCORES_FILE, TrainConfig, evaluate_series, evaluation_split, score_series, train

logger = logging.getLogger(__name__)

RUN_FILE = Path("reports") / "run.json"
SERIES_FILE = "series.csv"

# Config keys that change how windows are built or what the model computes
MODEL_KEYS = ("seqlen", "zdim", "hidden", "recon", "aug", "norm_scope", "eps_norm", "train_ratio")

# CLI flag -> TrainConfig field
FLAG_FIELDS = {
    "mi": "mi_mode",
    "aug": "aug",
    "recon": "recon",
    "beta": "beta",
    "zdim": "zdim",
    "hidden": "hidden",
    "seqlen": "seqlen",
    "stride": "stride",
    "eval_stride": "eval_stride",
    "batch": "batch",
    "lr": "lr",
    "epochs": "epochs",
    "tau": "tau",
    "mi_weight": "mi_weight",
    "disc_layers": "disc_layers",
    "disc_steps": "disc_steps",
    "disc_separate": "disc_separate",
    "norm_scope": "norm_scope",
    "percentile": "percentile",
    "train_ratio": "train_ratio",
    "anomaly_classes": "anomaly_classes",
    "label_column": "label_column",
    "header": "header",
    "seed": "seed",
}


def setup_logging(verbose: bool = False, out_dir: Optional[Path] = None):
    """Setup logging configuration from settings.yaml."""
    config = get_config()
    level = logging.DEBUG if verbose else getattr(logging, str(config.log_level).upper(), logging.INFO)
    handlers = [logging.StreamHandler(sys.stderr)]
    if config.log_file and out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(out_dir / config.log_file))
    logging.basicConfig(level=level, format=config.log_format, handlers=handlers)


def handle_errors(func: Callable) -> Callable:
    """Turn library errors into a one-line diagnostic and exit code 1."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ValueError, ArithmeticError, FileNotFoundError, KeyError) as exc:
            logger.debug("Command failed", exc_info=True)
            message = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
            raise click.ClickException(message) from exc

    return wrapper


def training_options(func: Callable) -> Callable:
    """Flags shared by train and sweep; unset flags fall through to the config file."""
    options = [
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config (JSON or YAML)"),
        click.option("--mi", type=click.Choice(["contrast", "adversarial", "none"]), help="Mutual-information coupler"),
        click.option("--aug", type=click.Choice(["mm", "ms", "sm", "ss", "none"]), help="Raw/augmented normalization pair"),
        click.option("--recon", type=click.Choice(["mse", "bce", "robust1", "robust2"]), help="Reconstruction likelihood"),
        click.option("--beta", type=float, help="KL weight"),
        click.option("--zdim", type=int, help="Latent dimension"),
        click.option("--hidden", type=int, help="Hidden width"),
        click.option("--seqlen", type=int, help="Window length s"),
        click.option("--stride", type=int, help="Training window stride"),
        click.option("--eval-stride", type=int, help="Scoring window stride (default: seqlen)"),
        click.option("--batch", type=int, help="Batch size"),
        click.option("--lr", type=float, help="Adam learning rate"),
        click.option("--epochs", type=int, help="Training epochs"),
        click.option("--tau", type=float, help="infoNCE temperature"),
        click.option("--mi-weight", type=float, help="Weight of the MI term"),
        click.option("--disc-layers", type=int, help="Discriminator layer count"),
        click.option("--disc-steps", type=int, help="Discriminator steps per generator step"),
        click.option("--disc-separate/--disc-shared", default=None, help="Separate critic stacks for the two roles"),
        click.option("--norm-scope", type=click.Choice(["per-window", "per-series"]), help="Normalization statistics scope"),
        click.option("--percentile", type=float, help="Threshold quantile q"),
        click.option("--train-ratio", type=float, help="Fraction of the series used for training"),
        click.option("--anomaly-classes", help="Anomalous label values, e.g. 1,2 or a preset (gd, hss, s5, td, ecg)"),
        click.option("--label-column", help="Name of the label column, or its 0-based index without a header"),
        click.option("--header/--no-header", default=None, help="Whether the series file starts with a header row"),
        click.option("--seed", type=int, help="Master seed"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def resolve_config(
    config_path: Optional[str], flags: Dict[str, Any], allow_grid: bool = False
) -> Tuple[TrainConfig, Dict[str, List[Any]]]:
    """
    settings.yaml defaults < run-config file < command-line flags.

    List values in the run config are returned as a sweep grid; only the sweep
    command accepts them.
    """
    file_layer, file_grid = split_run_config(load_run_config(config_path)) if config_path else ({}, {})
    if file_grid and not allow_grid:
        keys = ", ".join(file_grid)
        raise ConfigError(f"{config_path}: list values ({keys}) describe a sweep grid; run `wavae sweep` with this config")
    flag_layer = {FLAG_FIELDS[name]: value for name, value in flags.items() if name in FLAG_FIELDS and value is not None}
    return TrainConfig.from_mapping(get_config().train_defaults, file_layer, flag_layer), file_grid


def resolve_out(out: Optional[str]) -> Path:
    return Path(out) if out else get_config().output_root


def load_series(path: str, config: TrainConfig) -> SeriesFrame:
    return load_csv(path, label_column=config.label_column, anomaly_classes=config.anomaly_classes, header=config.header)


def write_run_record(out_dir: Path, config: TrainConfig, data: str, wall_clock: float) -> Path:
    path = out_dir / RUN_FILE
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {
        "config": config.to_dict(),
        "data": str(Path(data).resolve()),
        "seed": config.seed,
        "wall_clock_seconds": wall_clock,
    }
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
    logger.info(f"Wrote run record to {path}")
    return path


def read_run_record(out_dir: Path) -> Dict[str, Any]:
    path = out_dir / RUN_FILE
    if not path.exists():
        raise FileNotFoundError(f"No run record at {path}; run `wavae train` with this --out first")
    return json.loads(path.read_text())


def _echo_metrics(summary: Dict[str, Any]) -> None:
    for key in ("roc_auc", "pr_auc", "precision", "recall", "f1", "kappa", "threshold", "flagged"):
        value = summary.get(key)
        click.echo(f"{key:>10}: {'n/a' if value is None else format(value, '.6g')}")


@click.group()
def main():
    """Weakly augmented VAE anomaly detection for multivariate time series."""


@main.command("synth")
@click.option("--spec", "preset", type=click.Choice(sorted(SYNTH_PRESETS)), default="default", show_default=True)
@click.option("--out", help="Output directory (default: output root from settings)")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--length", type=int, help="Series length T")
@click.option("--channels", type=int, help="Channel count c")
@click.option("--contamination", type=float, help="Fraction of anomalous points")
@click.option("--magnitude", type=float, help="Anomaly magnitude in noise sigmas")
@click.option("--kinds", help="Comma list of spike, level-shift, dropout")
@click.option("--verbose", "-v", is_flag=True)
@handle_errors
def synth_command(preset, out, seed, length, channels, contamination, magnitude, kinds, verbose):
    """Write a seeded synthetic series to <out>/series.csv."""
    out_dir = resolve_out(out)
    setup_logging(verbose, out_dir)
    overrides = {"length": length, "channels": channels, "contamination": contamination, "magnitude": magnitude}
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if kinds:
        overrides["anomaly_kinds"] = tuple(k.strip() for k in kinds.split(",") if k.strip())
    series = synth(synth_spec_from_preset(preset, seed=seed, **overrides))
    path = series.to_csv(out_dir / SERIES_FILE)
    logger.info(f"Wrote synthetic series to {path}")
    click.echo(f"{path} (T={series.length}, c={series.channels}, anomalous points={int(series.labels.sum())})")


@main.command("train")
@click.option("--data", required=True, type=click.Path(dir_okay=False), help="Labelled series CSV")
@click.option("--out", help="Run directory (default: output root from settings)")
@training_options
@click.option("--progress/--no-progress", default=False)
@click.option("--verbose", "-v", is_flag=True)
@handle_errors
def train_command(data, out, config_path, progress, verbose, **flags):
    """Train on the prefix of DATA and write the checkpoint and epoch log."""
    out_dir = resolve_out(out)
    setup_logging(verbose, out_dir)
    config, _ = resolve_config(config_path, flags)
    series = load_series(data, config)
    train_part, _, _ = evaluation_split(series, config)
    _, _, report = train(config, train_part, out_dir=out_dir, progress=progress)
    write_run_record(out_dir, config, data, report.wall_clock_seconds)
    final = report.epochs[-1]
    click.echo(f"{report.checkpoint_path} (epochs={len(report.epochs)}, final total={final.total:.6g})")


def _check_run_matches_checkpoint(record: Dict[str, Any], path: Path) -> None:
    stored = checkpoint.read_header(path).get("config", {})
    changed = [key for key in MODEL_KEYS if key in stored and stored[key] != record["config"].get(key)]
    if changed:
        raise ConfigError(f"Run record and checkpoint {path} disagree on {', '.join(changed)}; retrain this run")


def _load_trained(out_dir: Path, data: Optional[str], percentile: Optional[float]):
    record = read_run_record(out_dir)
    _check_run_matches_checkpoint(record, out_dir / CHECKPOINT_FILE)
    config = TrainConfig.from_mapping(record["config"], {"percentile": percentile} if percentile is not None else {})
    params, _, _ = checkpoint.load(out_dir / CHECKPOINT_FILE, hidden=config.hidden, zdim=config.zdim)
    return config, params, data or record["data"], record["data"]


@main.command("eval")
@click.option("--out", help="Run directory written by train")
@click.option("--data", type=click.Path(dir_okay=False), help="Series CSV (default: the one train used)")
@click.option("--percentile", type=float, help="Threshold quantile q")
@click.option("--verbose", "-v", is_flag=True)
@handle_errors
def eval_command(out, data, percentile, verbose):
    """Score the evaluation suffix and write scores.csv and metrics.json."""
    out_dir = resolve_out(out)
    setup_logging(verbose, out_dir)
    config, params, data, _ = _load_trained(out_dir, data, percentile)
    series = load_series(data, config)
    train_part, eval_part, eval_start = evaluation_split(series, config)
    report = evaluate_series(params, eval_part, config, out_dir=out_dir, offset_base=eval_start, reference=train_part)
    _echo_metrics(report.to_dict())


@main.command("score")
@click.option("--data", required=True, type=click.Path(dir_okay=False), help="Series CSV to score end to end")
@click.option("--out", help="Run directory written by train")
@click.option("--percentile", type=float, help="Threshold quantile q")
@click.option("--verbose", "-v", is_flag=True)
@handle_errors
def score_command(data, out, percentile, verbose):
    """Score every window of DATA with a trained checkpoint; writes reports/scores.csv."""
    out_dir = resolve_out(out)
    setup_logging(verbose, out_dir)
    config, params, data, trained_on = _load_trained(out_dir, data, percentile)
    series = load_series(data, config)
    reference = None
    if config.norm_scope == "per-series":
        reference, _, _ = evaluation_split(load_series(trained_on, config), config)
    scores, windows = score_series(params, series, config, reference)
    report = detect.evaluate(scores, windows.labels, config.percentile, windows.offsets)
    path = detect.write_scores_csv(report, out_dir / SCORES_FILE)
    click.echo(f"{path} (windows={len(scores)}, threshold={report.threshold:.6g}, flagged={report.flagged})")


@main.command("sweep")
@click.option("--data", required=True, type=click.Path(dir_okay=False), help="Labelled series CSV")
@click.option("--out", help="Sweep directory (default: output root from settings)")
@click.option("--grid", "grids", multiple=True, help="key=v1,v2,... or preset:<key>; repeatable")
@click.option("--workers", type=int, default=1, show_default=True, help="Settings run in parallel")
@training_options
@click.option("--progress/--no-progress", default=False)
@click.option("--verbose", "-v", is_flag=True)
@handle_errors
def sweep_command(data, out, grids, workers, config_path, progress, verbose, **flags):
    """One-factor-at-a-time sweep; writes metrics/sweep.csv. List values in --config add grid entries."""
    out_dir = resolve_out(out)
    setup_logging(verbose, out_dir)
    config, file_grid = resolve_config(config_path, flags, allow_grid=True)
    grid = merge_grids(file_grid, parse_grid(list(grids)))
    series = load_series(data, config)
    rows = sweep(config, grid, series, out_dir=out_dir, workers=workers, progress=progress)
    for row in rows:
        roc = row.metrics.get("roc_auc")
        click.echo(f"{row.label}: {row.status} roc_auc={'n/a' if roc is None else format(roc, '.6g')}")
    failed = [row.label for row in rows if row.status != "ok"]
    if failed and len(failed) == len(rows):
        raise ConfigError(f"every sweep setting failed ({', '.join(failed)})")


if __name__ == "__main__":
    main()
