"""Composite classification + spike-count loss and the sparsity-weight schedules.

The total loss is ``cross_entropy(readout, targets) + w * spikes_per_sample``
where the weight ``w`` depends on the schedule and the training position:

==================  ===================================
kind                weight at epoch n of N
==================  ===================================
none                0
constant            sigma0
linear              sigma0 * n / N
quadratic           sigma0 * n**2 / N   (``quadratic_form="literal"``)
                    sigma0 * (n / N)**2 (``quadratic_form="normalized"``)
alternating         A(n) * sigma0
alternating_linear  A(n) * sigma0 * n / N
==================  ===================================

``A`` is a per-batch gate whose duty cycle rises linearly from 0 in the first
epoch to 1 in the last.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tape
from .snn import SpikeRecord, count_spikes
from .tape import Tensor

QUADRATIC_FORMS = ("literal", "normalized")


class ScheduleKind(str, Enum):
    NONE = "none"
    CONSTANT = "constant"
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    ALTERNATING = "alternating"
    ALTERNATING_LINEAR = "alternating_linear"


SPARSE_KINDS = tuple(k for k in ScheduleKind if k is not ScheduleKind.NONE)


@dataclass(frozen=True)
class SparsitySchedule:
    kind: ScheduleKind = ScheduleKind.NONE
    sigma0: float = 0.0
    n_epochs_total: int = 1
    quadratic_form: str = "literal"

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not self.sigma0 >= 0:
            raise ValueError(f"sigma0 must be nonnegative, got {self.sigma0}")
        if self.n_epochs_total < 1:
            raise ValueError(f"n_epochs_total must be >= 1, got {self.n_epochs_total}")
        if self.quadratic_form not in QUADRATIC_FORMS:
            raise ValueError(f"quadratic_form must be one of {QUADRATIC_FORMS}")


@dataclass(frozen=True)
class TrainPosition:
    epoch: int                  # 1-based
    batch_index: int = 0        # 0-based
    batches_per_epoch: int = 1

    def __post_init__(self):
        if self.batches_per_epoch < 1:
            raise ValueError("batches_per_epoch must be positive")
        if not 0 <= self.batch_index < self.batches_per_epoch:
            raise ValueError(f"batch_index {self.batch_index} outside [0, {self.batches_per_epoch})")
        if self.epoch < 1:
            raise ValueError(f"epoch is 1-based, got {self.epoch}")


@dataclass(frozen=True)
class LossBreakdown:
    class_part: float
    sparsity_part: float
    weight: float


def classification_loss(readout: Tensor, targets) -> Tensor:
    """Batch-mean softmax cross-entropy of the readout rows."""
    return tape.softmax_cross_entropy(readout, np.asarray(targets, dtype=np.int64))


def alternating_gate(pos: TrainPosition, n_epochs_total: int) -> int:
    """Whether the sparsity term is switched on for this batch.

    The duty cycle of epoch n is d = (n-1)/(N-1).  Gated-on batches are spread
    evenly: batch b is on iff floor((b+1)*d + 1/2) > floor(b*d + 1/2), so an
    epoch of K batches has exactly round_half_up(d*K) of them on.
    """
    if n_epochs_total <= 1:
        return 1
    if pos.epoch > n_epochs_total:
        raise ValueError(f"epoch {pos.epoch} beyond horizon {n_epochs_total}")
    num, den = pos.epoch - 1, n_epochs_total - 1
    b = pos.batch_index
    # floor(k*num/den + 1/2) in exact integer arithmetic
    hi = (2 * (b + 1) * num + den) // (2 * den)
    lo = (2 * b * num + den) // (2 * den)
    return int(hi > lo)


def round_half_up(num: int, den: int) -> int:
    """round(num/den) with halves rounded up, exactly."""
    return (2 * num + den) // (2 * den)


def sparsity_weight(sched: SparsitySchedule, pos: TrainPosition) -> float:
    """Weight w such that the sparsity loss is w * spikeCount."""
    kind, s0 = sched.kind, sched.sigma0
    n, N = pos.epoch, sched.n_epochs_total
    if kind is ScheduleKind.NONE:
        return 0.0
    if kind is ScheduleKind.CONSTANT:
        return s0
    if kind is ScheduleKind.LINEAR:
        return s0 * n / N
    if kind is ScheduleKind.QUADRATIC:
        return s0 * n * n / N if sched.quadratic_form == "literal" else s0 * (n / N) ** 2
    gate = alternating_gate(pos, N)
    if kind is ScheduleKind.ALTERNATING:
        return gate * s0
    return gate * s0 * n / N


def total_loss(readout: Tensor, targets, record: SpikeRecord, sched: SparsitySchedule,
               pos: TrainPosition) -> tuple[Tensor, LossBreakdown]:
    """Classification loss plus weighted per-sample spike count.

    With a zero weight the returned tensor is the classification loss itself,
    so gradients are bit-identical to the baseline.
    """
    class_loss = classification_loss(readout, targets)
    weight = sparsity_weight(sched, pos)
    if weight == 0.0:
        return class_loss, LossBreakdown(class_loss.item(), 0.0, 0.0)
    spikes, _ = count_spikes(record)
    sparsity = tape.scale(spikes, weight / record.batch_size)
    return tape.add(class_loss, sparsity), LossBreakdown(class_loss.item(), sparsity.item(), weight)
