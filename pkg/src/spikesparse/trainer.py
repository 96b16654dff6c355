"""Mini-batch training against the composite loss, evaluation and metrics CSVs."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tape
from .checkpoint import Checkpoint, CheckpointError, save_checkpoint
from .datasets import LabeledImageSet
from .optim import OPTIMIZERS, Optimizer, make_optimizer
from .snn import LifConfig, Network, build_network, encode_poisson, forward, parse_architecture
from .sparsity import (
    QUADRATIC_FORMS,
    ScheduleKind,
    SparsitySchedule,
    TrainPosition,
    sparsity_weight,
    total_loss,
)

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_loss", "class_loss", "sparsity_loss", "weight",
                  "val_accuracy", "val_avg_spikes", "seconds")


class DivergenceError(FloatingPointError):
    """Training produced a non-finite loss or gradient."""


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 10
    batch_size: int = 100
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    momentum: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    schedule: str = "none"
    sigma0: float = 0.0
    quadratic_form: str = "literal"
    timesteps: int = 25
    max_rate: float = 1.0
    architecture: str = "dense:128"
    beta: float = 0.9
    theta: float = 1.0
    gamma: float = 1.0
    reset: str = "subtract"
    beta_readout: float = 0.9
    init_gain: float = 1.0
    seed: int = 0
    eval_seed: int = 1234
    eval_batch_size: int = 500
    record_wall_time: bool = False

    def __post_init__(self):
        for name in ("epochs", "batch_size", "timesteps", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not 0 < self.max_rate <= 1:
            raise ValueError(f"max_rate must lie in (0, 1], got {self.max_rate}")
        if not self.beta_readout > 0:
            raise ValueError(f"beta_readout must be positive, got {self.beta_readout}")
        if self.quadratic_form not in QUADRATIC_FORMS:
            raise ValueError(f"quadratic_form must be one of {QUADRATIC_FORMS}")
        self.sparsity_schedule  # validates kind and sigma0
        self.lif_config
        parse_architecture(self.architecture)

    @property
    def sparsity_schedule(self) -> SparsitySchedule:
        return SparsitySchedule(ScheduleKind(self.schedule), self.sigma0, self.epochs, self.quadratic_form)

    @property
    def lif_config(self) -> LifConfig:
        return LifConfig(self.beta, self.theta, self.gamma, self.reset)

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)


@dataclass
class MetricsRecord:
    epoch: int
    train_loss: float
    class_loss: float
    sparsity_loss: float
    weight: float
    val_accuracy: float
    val_avg_spikes: float
    seconds: float = 0.0
    val_correct: int = 0
    val_total: int = 0

    def csv_row(self) -> list[str]:
        return [str(self.epoch)] + [repr(float(getattr(self, k))) for k in METRICS_HEADER[1:]]

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class EvalResult:
    accuracy: float
    avg_spikes: float
    correct: int
    total: int
    spike_count: int
    predictions: np.ndarray = field(repr=False, default=None)
    sample_spikes: np.ndarray = field(repr=False, default=None)


# ---------------------------------------------------------------- model plumbing

def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    init_seq, train_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_seq), np.random.default_rng(train_seq)


def make_network(config: TrainingConfig, input_shape, n_classes: int) -> Network:
    init_rng, _ = _streams(config.seed)
    return build_network(parse_architecture(config.architecture), tuple(input_shape), n_classes,
                         config.lif_config, config.timesteps, config.beta_readout,
                         init_rng, config.init_gain)


def network_from_checkpoint(ckpt: Checkpoint) -> Network:
    config = TrainingConfig.from_dict(ckpt.config)
    net = make_network(config, ckpt.input_shape, ckpt.n_classes)
    for name, param in net.named_parameters():
        if name not in ckpt.weights:
            raise CheckpointError(f"checkpoint lacks tensor {name!r} for architecture {config.architecture!r}")
        w = ckpt.weights[name]
        if w.shape != param.shape:
            raise CheckpointError(f"tensor {name!r}: checkpoint shape {w.shape} != architecture shape {param.shape}")
        param.data = np.array(w, dtype=np.float64)
    return net


def _make_optimizer(config: TrainingConfig, net: Network) -> Optimizer:
    return make_optimizer(config.optimizer, net.parameters(), config.learning_rate, config.momentum,
                          config.adam_beta1, config.adam_beta2, config.adam_eps)


def _snapshot(config, net, opt, rng, epoch, history, extra) -> Checkpoint:
    return Checkpoint(
        config=config.to_dict(), input_shape=net.input_shape,
        n_classes=net.readout.weights.shape[1], epoch=epoch,
        weights={name: p.data.copy() for name, p in net.named_parameters()},
        optimizer_steps=opt.steps,
        optimizer_state={k: v.copy() for k, v in opt.state_arrays().items()},
        rng_state=rng.bit_generator.state, history=[dict(h) for h in history], extra=dict(extra))


# ---------------------------------------------------------------- evaluation

def evaluate_network(net: Network, data: LabeledImageSet, max_rate: float = 1.0,
                     seed: int = 1234, batch_size: int = 500) -> EvalResult:
    """Accuracy and integer spike counts; no weight updates, no tape."""
    rng = np.random.default_rng(seed)
    n = len(data)
    preds = np.empty(n, dtype=np.int64)
    sample_spikes = np.empty(n, dtype=np.int64)
    total_spikes = 0
    with tape.no_grad():
        for start in range(0, n, batch_size):
            idx = np.arange(start, min(start + batch_size, n))
            x, _ = data.batch(idx)
            readout, record = forward(net, encode_poisson(x, net.timesteps, max_rate, rng))
            preds[idx] = readout.data.argmax(axis=1)
            sample_spikes[idx] = record.sample_counts
            total_spikes += record.total_count
    correct = int((preds == data.labels).sum())
    return EvalResult(
        accuracy=100.0 * correct / n if n else 0.0,
        avg_spikes=total_spikes / n if n else 0.0,
        correct=correct, total=n, spike_count=total_spikes,
        predictions=preds, sample_spikes=sample_spikes)


def evaluate(ckpt: Checkpoint, data: LabeledImageSet) -> EvalResult:
    """Evaluate a checkpoint with its own encoding settings and evaluation seed."""
    if tuple(data.image_shape) != tuple(ckpt.input_shape):
        raise ValueError(f"dataset images {data.image_shape} do not fit checkpoint input {ckpt.input_shape}")
    config = TrainingConfig.from_dict(ckpt.config)
    return evaluate_network(network_from_checkpoint(ckpt), data, config.max_rate,
                            config.eval_seed, config.eval_batch_size)


def write_predictions(path, result: EvalResult, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "predicted", "label", "spikes"])
        for i, (p, y, s) in enumerate(zip(result.predictions, labels, result.sample_spikes)):
            w.writerow([i, int(p), int(y), int(s)])


# ---------------------------------------------------------------- training

def _better(a: MetricsRecord, b: MetricsRecord | None) -> bool:
    """Higher accuracy, then fewer spikes; earlier epochs win remaining ties."""
    if b is None:
        return True
    if a.val_correct != b.val_correct:
        return a.val_correct > b.val_correct
    return a.val_avg_spikes < b.val_avg_spikes


def write_metrics_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in records:
            w.writerow(r.csv_row())


def _append_metrics(path, record: MetricsRecord) -> None:
    with open(path, "a", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(record.csv_row())


def train(config: TrainingConfig, train_set: LabeledImageSet, val_set: LabeledImageSet,
          resume: Checkpoint | None = None, metrics_path=None, checkpoint_path=None,
          on_epoch: Callable[[Checkpoint, MetricsRecord], None] | None = None,
          extra: dict | None = None) -> tuple[Checkpoint, list[MetricsRecord]]:
    """Train for ``config.epochs`` epochs and return the best-validation checkpoint.

    ``resume`` continues from a checkpoint written by a previous call with the
    same config; the continued run is bit-identical to an uninterrupted one.
    ``checkpoint_path`` receives the latest state (with the best state nested)
    after every epoch.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if train_set.image_shape != val_set.image_shape:
        raise ValueError("training and validation images differ in shape")

    net = make_network(config, train_set.image_shape, train_set.class_count)
    opt = _make_optimizer(config, net)
    _, rng = _streams(config.seed)
    history: list[MetricsRecord] = []
    best_ckpt: Checkpoint | None = None
    best_rec: MetricsRecord | None = None
    start_epoch = 1

    if resume is not None:
        if resume.config != config.to_dict():
            raise CheckpointError("resume checkpoint was written with a different config")
        net = network_from_checkpoint(resume)
        opt = _make_optimizer(config, net)
        opt.load_state(resume.optimizer_steps, resume.optimizer_state)
        rng.bit_generator.state = resume.rng_state
        history = [MetricsRecord(**h) for h in resume.history]
        for rec in history:
            if _better(rec, best_rec):
                best_rec = rec
        best_ckpt = resume.best if resume.best is not None else resume
        if best_rec is not None and best_ckpt.epoch != best_rec.epoch:
            raise CheckpointError("resume checkpoint lacks its best-epoch state")
        start_epoch = resume.epoch + 1

    if metrics_path is not None:
        write_metrics_csv(metrics_path, history)

    schedule = config.sparsity_schedule
    n = len(train_set)
    n_batches = math.ceil(n / config.batch_size)
    for epoch in range(start_epoch, config.epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        sums = np.zeros(4)
        for b in range(n_batches):
            idx = perm[b * config.batch_size:(b + 1) * config.batch_size]
            x, y = train_set.batch(idx)
            pos = TrainPosition(epoch, b, n_batches)
            try:
                readout, record = forward(net, encode_poisson(x, config.timesteps, config.max_rate, rng))
                loss, parts = total_loss(readout, y, record, schedule, pos)
                net.zero_grad()
                tape.backward(loss)
                opt.step()
            except tape.NonFiniteError as exc:
                raise DivergenceError(
                    f"non-finite values at epoch {epoch}, batch {b} "
                    f"(sparsity weight {sparsity_weight(schedule, pos):g}): {exc}; "
                    "try a smaller sigma0 or learning rate") from exc
            sums += (loss.item(), parts.class_part, parts.sparsity_part, parts.weight)
        ev = evaluate_network(net, val_set, config.max_rate, config.eval_seed, config.eval_batch_size)
        elapsed = time.perf_counter() - t0
        mean = sums / n_batches
        rec = MetricsRecord(epoch, *map(float, mean), ev.accuracy, ev.avg_spikes,
                            elapsed if config.record_wall_time else 0.0, ev.correct, ev.total)
        history.append(rec)
        log.info("epoch %d/%d loss=%.4f (class %.4f, sparsity %.4f, w=%.3g) val_acc=%.2f%% "
                 "spikes=%.1f [%.1fs]", epoch, config.epochs, rec.train_loss, rec.class_loss,
                 rec.sparsity_loss, rec.weight, rec.val_accuracy, rec.val_avg_spikes, elapsed)
        if metrics_path is not None:
            _append_metrics(metrics_path, rec)

        ckpt = _snapshot(config, net, opt, rng, epoch, [h.to_dict() for h in history], extra or {})
        if _better(rec, best_rec):
            best_rec, best_ckpt = rec, ckpt
        if best_ckpt is not ckpt:
            ckpt.best = best_ckpt
        if checkpoint_path is not None:
            save_checkpoint(ckpt, checkpoint_path)
        if on_epoch is not None:
            on_epoch(ckpt, rec)

    return best_ckpt, history

