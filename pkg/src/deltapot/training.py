"""Training loop: AdamW, per-batch warmup + cosine schedule, checkpoints.

Everything is seeded and single-device; a fixed seed reproduces the loss
curves exactly, and a checkpoint restores the full optimization state (model,
optimizer moments, batch counter, shuffling RNG) so a resumed run continues
the learning-rate schedule at the exact batch where it stopped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .encoder import ModelConfig
from .graphs import GraphTriple, build_graph_triple
from .losses import LossConfig, initial_log_sigma2, total_loss
from .metrics import metric_report
from .model import AffinityModel, PreparedTriple, prepare_triple
from .structio import DatasetManifest, ManifestError, PocketComplex, load_complex

CHECKPOINT_VERSION = 1
CHECKPOINT_NAME = "best.pt"
METRICS_NAME = "metrics.csv"
METRICS_HEADER = ("epoch", "split", "loss", "rmse", "pearson", "lr")


class NumericalError(RuntimeError):
    """Training produced a non-finite quantity."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    peak_lr: float = 0.01
    init_lr: float = 1e-6
    warmup_epochs: int = 2
    weight_decay: float = 1e-4
    final_lr: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.init_lr <= self.peak_lr:
            raise ValueError("need 0 < init_lr <= peak_lr")
        if not 0 <= self.final_lr <= self.peak_lr:
            raise ValueError("need 0 <= final_lr <= peak_lr")
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError("need 0 <= warmup_epochs < epochs")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


def lr_schedule(batch_index: int, batches_per_epoch: int, config: TrainConfig) -> float:
    """Per-batch learning rate: linear warmup then cosine annealing.

    Warmup covers the first warmup_epochs * batches_per_epoch batches and
    hits init_lr and peak_lr exactly at its endpoints; the cosine leg decays
    from peak_lr to exactly final_lr at the last batch.
    """
    if batch_index < 0:
        raise ValueError("batch_index must be >= 0")
    warm = config.warmup_epochs * batches_per_epoch
    if batch_index < warm:
        s = batch_index / (warm - 1) if warm > 1 else 1.0
        return config.init_lr * (1.0 - s) + config.peak_lr * s
    total = config.epochs * batches_per_epoch
    remaining = total - warm
    if remaining <= 1:
        return config.peak_lr
    p = (batch_index - warm) / (remaining - 1)
    p = min(max(p, 0.0), 1.0)
    return config.final_lr + 0.5 * (config.peak_lr - config.final_lr) * (1.0 + math.cos(math.pi * p))


@dataclass
class PreparedExample:
    """One complex, fully preprocessed for repeated forward passes."""

    complex_id: str
    pc: PocketComplex
    triple: GraphTriple
    prepared: PreparedTriple
    label: float | None


def load_prepared_dataset(
    manifest: DatasetManifest,
    split: str,
    model_config: ModelConfig,
    dtype: torch.dtype = torch.float32,
    require_labels: bool = False,
) -> list[PreparedExample]:
    """Parse, crop, graph, and frame every entry of a manifest split."""
    examples = []
    for entry in manifest.split(split):
        if require_labels and entry.label is None:
            raise ManifestError(f"entry {entry.complex_id!r} in split {split!r} has no label")
        pc = load_complex(manifest, entry)
        triple = build_graph_triple(pc, model_config.rbf_cutoff)
        prepared = prepare_triple(triple, model_config.frame_mode, dtype)
        examples.append(
            PreparedExample(
                complex_id=entry.complex_id,
                pc=pc,
                triple=triple,
                prepared=prepared,
                label=entry.label,
            )
        )
    return examples


def build_optimizer(model: AffinityModel, config: TrainConfig) -> torch.optim.AdamW:
    """AdamW with decoupled weight decay; the noise variance is not decayed.

    Decaying log sigma^2 would pull the loss's noise scale toward 1
    regardless of the data, so it gets its own no-decay group.
    """
    decay, no_decay = [], []
    for name, param in model.named_parameters():
        (no_decay if name == "log_noise_sigma2" else decay).append(param)
    return torch.optim.AdamW(
        [
            {"params": decay, "weight_decay": config.weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=config.init_lr,
    )


@dataclass
class TrainState:
    model: AffinityModel
    optimizer: torch.optim.AdamW
    model_config: ModelConfig
    train_config: TrainConfig
    loss_config: LossConfig
    global_batch: int = 0
    epoch: int = 0
    best_val_pearson: float | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)


def init_train_state(
    model_config: ModelConfig, train_config: TrainConfig, loss_config: LossConfig
) -> TrainState:
    model_config.validate()
    train_config.validate()
    loss_config.validate()
    torch.manual_seed(train_config.seed)
    model = AffinityModel(model_config)
    with torch.no_grad():
        model.log_noise_sigma2.fill_(initial_log_sigma2(loss_config))
    return TrainState(
        model=model,
        optimizer=build_optimizer(model, train_config),
        model_config=model_config,
        train_config=train_config,
        loss_config=loss_config,
        rng=np.random.default_rng(train_config.seed),
    )


def _batch_forward(model: AffinityModel, examples: Sequence[PreparedExample]) -> torch.Tensor:
    return torch.stack([model(ex.prepared)[0] for ex in examples])


def train_epoch(state: TrainState, examples: Sequence[PreparedExample]) -> dict[str, float]:
    """One seeded-shuffle pass; returns loss/RMSE/Pearson over the epoch's predictions."""
    if not examples:
        raise ManifestError("empty training split")
    model = state.model
    cfg = state.train_config
    batches_per_epoch = math.ceil(len(examples) / cfg.batch_size)
    order = state.rng.permutation(len(examples))

    model.train()
    losses: list[float] = []
    preds_all: list[float] = []
    labels_all: list[float] = []
    lr = cfg.init_lr
    for start in range(0, len(examples), cfg.batch_size):
        batch = [examples[i] for i in order[start : start + cfg.batch_size]]
        lr = lr_schedule(state.global_batch, batches_per_epoch, cfg)
        for group in state.optimizer.param_groups:
            group["lr"] = lr
        preds = _batch_forward(model, batch)
        labels = torch.tensor([ex.label for ex in batch], dtype=preds.dtype)
        loss = total_loss(preds, labels, model.log_noise_sigma2, state.loss_config)
        if not torch.isfinite(loss):
            ids = ", ".join(ex.complex_id for ex in batch)
            raise NumericalError(f"non-finite loss on batch [{ids}] at global batch {state.global_batch}")
        state.optimizer.zero_grad()
        loss.backward()
        state.optimizer.step()
        state.global_batch += 1
        losses.append(float(loss.detach()))
        preds_all.extend(float(p) for p in preds.detach())
        labels_all.extend(float(ex.label) for ex in batch)

    report = metric_report(np.array(preds_all), np.array(labels_all))
    return {
        "loss": float(np.mean(losses)),
        "rmse": report.rmse,
        "pearson": report.pearson,
        "lr": lr,
    }


@torch.no_grad()
def evaluate(
    model: AffinityModel, examples: Sequence[PreparedExample], loss_config: LossConfig
) -> dict[str, float]:
    """Loss and metrics over a whole split (one loss batch, deterministic)."""
    if not examples:
        raise ManifestError("empty evaluation split")
    model.eval()
    preds = _batch_forward(model, examples)
    labels = torch.tensor([ex.label for ex in examples], dtype=preds.dtype)
    loss = total_loss(preds, labels, model.log_noise_sigma2, loss_config)
    report = metric_report(preds.numpy(), labels.numpy())
    return {"loss": float(loss), "rmse": report.rmse, "pearson": report.pearson}


def save_checkpoint(state: TrainState, path: Path) -> None:
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "model_config": asdict(state.model_config),
            "train_config": asdict(state.train_config),
            "loss_config": asdict(state.loss_config),
            "model_state": state.model.state_dict(),
            "optimizer_state": state.optimizer.state_dict(),
            "global_batch": state.global_batch,
            "epoch": state.epoch,
            "best_val_pearson": state.best_val_pearson,
            "rng_state": state.rng.bit_generator.state,
        },
        path,
    )


def load_train_state(path: Path) -> TrainState:
    data = torch.load(path, weights_only=False)
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
    model_config = ModelConfig(**data["model_config"])
    train_config = TrainConfig(**data["train_config"])
    loss_config = LossConfig(**data["loss_config"])
    model = AffinityModel(model_config)
    model.load_state_dict(data["model_state"])
    optimizer = build_optimizer(model, train_config)
    optimizer.load_state_dict(data["optimizer_state"])
    rng = np.random.default_rng()
    rng.bit_generator.state = data["rng_state"]
    return TrainState(
        model=model,
        optimizer=optimizer,
        model_config=model_config,
        train_config=train_config,
        loss_config=loss_config,
        global_batch=data["global_batch"],
        epoch=data["epoch"],
        best_val_pearson=data["best_val_pearson"],
        rng=rng,
    )


def load_model(path: Path) -> tuple[AffinityModel, ModelConfig]:
    """Model-only view of a checkpoint, in eval mode."""
    state = load_train_state(path)
    state.model.eval()
    return state.model, state.model_config


def _improved(best: float | None, current: float) -> bool:
    if best is None:
        return True
    if math.isnan(current):
        return False
    if math.isnan(best):
        return True
    return current > best


def fit(
    manifest: DatasetManifest,
    model_config: ModelConfig,
    train_config: TrainConfig,
    loss_config: LossConfig,
    out_dir: Path,
    resume_from: Path | None = None,
) -> Path:
    """Train on the manifest's train split, track best validation Pearson.

    Writes a metrics CSV row per epoch and split, and overwrites the best
    checkpoint on every validation improvement. Returns the checkpoint path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if resume_from is not None:
        state = load_train_state(Path(resume_from))
        state.train_config.epochs = train_config.epochs  # allow extending a run
    else:
        state = init_train_state(model_config, train_config, loss_config)

    train_examples = load_prepared_dataset(manifest, "train", state.model_config, require_labels=True)
    val_examples = load_prepared_dataset(manifest, "val", state.model_config, require_labels=True)
    if not train_examples:
        raise ManifestError("manifest has no train entries")
    if not val_examples:
        raise ManifestError("manifest has no val entries")

    checkpoint_path = out_dir / CHECKPOINT_NAME
    metrics_path = out_dir / METRICS_NAME
    mode = "a" if resume_from is not None and metrics_path.exists() else "w"
    with open(metrics_path, mode, newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if mode == "w":
            writer.writerow(METRICS_HEADER)
        for epoch in range(state.epoch + 1, state.train_config.epochs + 1):
            tm = train_epoch(state, train_examples)
            vm = evaluate(state.model, val_examples, state.loss_config)
            writer.writerow([epoch, "train", repr(tm["loss"]), repr(tm["rmse"]), repr(tm["pearson"]), repr(tm["lr"])])
            writer.writerow([epoch, "val", repr(vm["loss"]), repr(vm["rmse"]), repr(vm["pearson"]), repr(tm["lr"])])
            state.epoch = epoch
            if _improved(state.best_val_pearson, vm["pearson"]):
                state.best_val_pearson = vm["pearson"]
                save_checkpoint(state, checkpoint_path)
    return checkpoint_path
