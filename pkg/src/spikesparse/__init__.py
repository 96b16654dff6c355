"""Spiking neural networks trained for accuracy and spiking sparsity.

Surrogate-gradient backpropagation through time on a small numpy autodiff
tape, with a loss that adds a scheduled, weighted spike count to the
cross-entropy.
"""

from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .datasets import LabeledImageSet, SplitSpec, load_cifar10, load_dataset, load_mnist, split
from .search import search_sigma0
from .snn import (
    LifConfig,
    LifLayer,
    Network,
    SpikeRecord,
    SpikeTrain,
    build_network,
    count_spikes,
    encode_poisson,
    forward,
    lif_step,
    parse_architecture,
)
from .sparsity import (
    ScheduleKind,
    SparsitySchedule,
    TrainPosition,
    alternating_gate,
    classification_loss,
    sparsity_weight,
    total_loss,
)
from .tape import Tensor, backward
from .trainer import MetricsRecord, TrainingConfig, evaluate, train

__version__ = "0.1.0"
