"""
Leaky integrate-and-fire dynamics
=================================

Each step the membrane decays by ``beta``, integrates its input, emits a
spike on reaching ``theta`` and is then reset.  Subtractive reset keeps the
overshoot; zero reset discards it.
"""

import numpy as np

from spikesparse.snn import LifConfig, LifLayer, lif_step
from spikesparse.tape import Tensor


def trace(beta, drive, reset, steps=15):
    layer = LifLayer("dense", Tensor([[1.0]]), LifConfig(beta=beta, theta=1.0, reset=reset))
    out = []
    for _ in range(steps):
        s, v = lif_step(layer, Tensor([[drive]]))
        out.append((int(s.data.item()), v.data.item()))
    return out


# a perfect integrator fed 0.4 per step fires at t = 3, 5, 8, 10, 13, 15
for reset in ("subtract", "zero"):
    t = trace(1.0, 0.4, reset)
    print(f"{reset:>8}: spikes at", [i + 1 for i, (s, _) in enumerate(t) if s])

# leak slows the rate; with beta = 0.6 the membrane creeps towards 0.4/(1 - 0.6) = 1 and never fires
for beta in (1.0, 0.9, 0.75, 0.6):
    n = sum(s for s, _ in trace(beta, 0.4, "subtract", steps=100))
    print(f"beta={beta:4}: {n:3d} spikes in 100 steps")

# membrane trace for a leaky neuron
print("\n t  spike  membrane")
for i, (s, v) in enumerate(trace(0.9, 0.3, "subtract", steps=12), start=1):
    print(f"{i:2d}  {s:5d}  {v:8.4f}  " + "#" * int(np.clip(v, 0, 1) * 30))
