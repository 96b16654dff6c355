"""
Trading accuracy for silence
============================

Train the same spiking network twice on a small MNIST sample, without and with
the constant spike penalty, and compare validation accuracy and the average
number of spikes per image.

Set ``SPIKESPARSE_MNIST_DIR`` to a directory with the MNIST IDX files; without
it the 5,000 digits bundled with mlxtend are used.
"""

import logging
import os
import tempfile

import numpy as np

from spikesparse.datasets import LabeledImageSet, SplitSpec, load_dataset, split
from spikesparse.trainer import TrainingConfig, train

logging.basicConfig(level=logging.INFO, format="%(message)s")

root = os.environ.get("SPIKESPARSE_MNIST_DIR")
if root:
    data = load_dataset("mnist", root).head(5000)
else:
    from mlxtend.data import mnist_data

    X, y = mnist_data()
    order = np.random.default_rng(0).permutation(len(y))
    data = LabeledImageSet(X[order].reshape(-1, 1, 28, 28).astype(np.uint8), y[order], 10)

train_set, val_set = split(data, SplitSpec(0.2, seed=0))
print(f"{len(train_set)} training / {len(val_set)} validation images")

base = TrainingConfig(epochs=5, architecture="dense:128", timesteps=25, seed=0)
results = {}
for name, cfg in [("baseline", base), ("constant 1e-3", base.replace(schedule="constant", sigma0=1e-3))]:
    best, history = train(cfg, train_set, val_set)
    rec = history[best.epoch - 1]
    results[name] = rec
    print(f"{name}: best epoch {best.epoch}, {rec.val_accuracy:.1f}% accuracy, "
          f"{rec.val_avg_spikes:.1f} spikes per image")

b, c = results["baseline"], results["constant 1e-3"]
print(f"\nspike reduction {100 * (1 - c.val_avg_spikes / b.val_avg_spikes):.1f}% "
      f"for an accuracy change of {c.val_accuracy - b.val_accuracy:+.1f} points")
