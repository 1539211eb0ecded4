"""Command-line interface: train, predict, explain, check-invariance.

Exit codes: 0 success, 1 usage/config error, 2 data error (unreadable or
malformed files), 3 numerical failure (non-finite loss, invariance beyond
tolerance). Config files are flat ``key = value`` text with ``#`` comments;
every key must match a known configuration field — typos are errors, not
silently ignored defaults.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
from scipy.stats import special_ortho_group

from .encoder import ModelConfig
from .losses import LossConfig
from .metrics import metric_report
from .model import export_attribution, export_attribution_pdb
from .structio import ManifestError, ParseError, load_manifest, transform_complex
from .training import (
    NumericalError,
    TrainConfig,
    fit,
    load_model,
    load_prepared_dataset,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class UsageError(ValueError):
    """Bad flags or bad configuration values."""


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with its own status code."""

    def error(self, message: str):
        raise UsageError(message)


def parse_config_text(text: str) -> tuple[ModelConfig, TrainConfig, LossConfig]:
    """Parse flat key = value lines into the three config objects."""
    model_config = ModelConfig()
    train_config = TrainConfig()
    loss_config = LossConfig()
    owners: dict[str, object] = {}
    for config in (model_config, train_config, loss_config):
        for f in fields(config):  # type: ignore[arg-type]
            owners[f.name] = config

    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in owners:
            raise UsageError(f"config line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise UsageError(f"config line {lineno}: duplicate config key {key!r}")
        seen.add(key)
        target = owners[key]
        current = getattr(target, key)
        try:
            if type(current) is int:
                parsed: object = int(value)
            elif type(current) is float:
                parsed = float(value)
            else:
                parsed = value
        except ValueError:
            raise UsageError(f"config line {lineno}: cannot parse {value!r} for {key!r}") from None
        setattr(target, key, parsed)

    try:
        model_config.validate()
        train_config.validate()
        loss_config.validate()
    except ValueError as e:
        raise UsageError(str(e)) from e
    return model_config, train_config, loss_config


def load_config_file(path: str) -> tuple[ModelConfig, TrainConfig, LossConfig]:
    return parse_config_text(Path(path).read_text())


def cmd_train(args: argparse.Namespace) -> int:
    model_config, train_config, loss_config = load_config_file(args.config)
    if args.seed is not None:
        train_config.seed = args.seed
    manifest = load_manifest(args.manifest)
    checkpoint = fit(
        manifest,
        model_config,
        train_config,
        loss_config,
        Path(args.out_dir),
        resume_from=Path(args.checkpoint) if args.checkpoint else None,
    )
    print(f"best checkpoint: {checkpoint}")
    print(f"metrics: {Path(args.out_dir) / 'metrics.csv'}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace) -> int:
    model, model_config = load_model(Path(args.checkpoint))
    manifest = load_manifest(args.manifest)
    examples = load_prepared_dataset(manifest, args.split, model_config)
    if not examples:
        raise ManifestError(f"manifest has no {args.split!r} entries")

    rows = [(ex.complex_id, model.predict(ex.triple).affinity, ex.label) for ex in examples]
    any_labels = any(label is not None for _, _, label in rows)

    out_path = Path(args.out_dir) / "predictions.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "prediction", "label"] if any_labels else ["id", "prediction"])
        for complex_id, pred, label in rows:
            record = [complex_id, repr(pred)]
            if any_labels:
                record.append("" if label is None else repr(label))
            writer.writerow(record)
        if any_labels:
            labeled = [(p, l) for _, p, l in rows if l is not None]
            report = metric_report(
                np.array([p for p, _ in labeled]), np.array([l for _, l in labeled])
            )
            fh.write(f"# rmse = {report.rmse!r}\n")
            fh.write(f"# pearson = {report.pearson!r}\n")
            fh.write(f"# n = {report.n}\n")
    print(f"wrote {out_path} ({len(rows)} predictions)")
    return EXIT_OK


def cmd_explain(args: argparse.Namespace) -> int:
    model, model_config = load_model(Path(args.checkpoint))
    manifest = load_manifest(args.manifest)
    examples = load_prepared_dataset(manifest, args.split, model_config)
    if not examples:
        raise ManifestError(f"manifest has no {args.split!r} entries")

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for ex in examples:
        report = model.predict(ex.triple)
        (out_dir / f"{ex.complex_id}_attribution.csv").write_text(export_attribution(report, ex.pc))
        (out_dir / f"{ex.complex_id}_attribution.pdb").write_text(export_attribution_pdb(report, ex.pc))
        print(f"{ex.complex_id}: affinity {report.affinity!r}, {len(ex.pc.complex)} atoms")
    return EXIT_OK


def cmd_check_invariance(args: argparse.Namespace) -> int:
    model, model_config = load_model(Path(args.checkpoint))
    manifest = load_manifest(args.manifest)
    examples = load_prepared_dataset(manifest, args.split, model_config)
    if not examples:
        raise ManifestError(f"manifest has no {args.split!r} entries")

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    worst = 0.0
    for ex in examples:
        base = model.predict(ex.triple).affinity
        deltas = []
        for _ in range(args.trials):
            rotation = special_ortho_group.rvs(3, random_state=rng)
            translation = rng.normal(scale=10.0, size=3)
            moved = transform_complex(ex.pc, rotation, translation)
            deltas.append(abs(model.predict_complex(moved, model_config.rbf_cutoff).affinity - base))
        worst_here = max(deltas)
        worst = max(worst, worst_here)
        print(f"{ex.complex_id}: max |delta| = {worst_here:.3e} over {args.trials} motions")
    print(f"overall max |delta| = {worst:.3e} (tolerance {args.tolerance:.3e})")
    if not math.isfinite(worst) or worst > args.tolerance:
        print("invariance check FAILED", file=sys.stderr)
        return EXIT_NUMERICAL
    print("invariance check passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deltapot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="fit a model and track the best validation checkpoint")
    train.add_argument("--manifest", required=True, help="dataset CSV (id,protein,ligand,label,split)")
    train.add_argument("--config", required=True, help="key = value config file")
    train.add_argument("--out-dir", required=True, help="where checkpoints and metrics go")
    train.add_argument("--checkpoint", default=None, help="resume training from this checkpoint")
    train.add_argument("--seed", type=int, default=None, help="override the config's seed")
    train.set_defaults(func=cmd_train)

    predict = sub.add_parser("predict", help="write predictions for a manifest split")
    explain = sub.add_parser("explain", help="write per-atom attribution tables")
    for p in (predict, explain):
        p.add_argument("--manifest", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--split", default="test", choices=("train", "val", "test"))
    predict.set_defaults(func=cmd_predict)
    explain.set_defaults(func=cmd_explain)

    check = sub.add_parser("check-invariance", help="verify predictions under random rigid motions")
    check.add_argument("--manifest", required=True)
    check.add_argument("--checkpoint", required=True)
    check.add_argument("--split", default="test", choices=("train", "val", "test"))
    check.add_argument("--trials", type=int, default=20, help="rigid motions per complex")
    check.add_argument("--tolerance", type=float, default=1e-3, help="max allowed |delta affinity|")
    check.add_argument("--seed", type=int, default=None, help="seed for the random motions")
    check.set_defaults(func=cmd_check_invariance)
    return parser


def entrypoint(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ManifestError, FileNotFoundError, IsADirectoryError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(entrypoint())
