"""
Gradients through a spike
=========================

The tape records numpy operations and replays them backwards.  A spike is a
step function, so its true derivative is zero almost everywhere; the tape
substitutes a triangle of width ``gamma`` centred on the threshold.
"""

import numpy as np

from spikesparse import tape
from spikesparse.tape import Tensor

# a membrane sweep through the threshold theta = 1
u = Tensor(np.linspace(-0.5, 2.5, 13), requires_grad=True)
spikes = tape.spike_threshold(u, theta=1.0, gamma=1.0)
tape.backward(tape.sum(spikes))

print(" membrane  spike  surrogate")
for v, s, g in zip(u.data, spikes.data, u.grad):
    print(f"{v:9.2f}  {s:5.0f}  {g:9.3f}")

# the surrogate peaks at 1/gamma on the threshold and vanishes gamma away from it
assert u.grad.max() == 1.0

# ordinary ops compose with it: d/dw sum(spike(x @ w))
x = Tensor(np.array([[1.0, 0.0], [1.0, 1.0]]))
w = Tensor(np.array([[0.8], [0.5]]), requires_grad=True)
tape.backward(tape.sum(tape.spike_threshold(tape.matmul(x, w), 1.0, 1.0)))
print("\ngradient of the spike count w.r.t. w:", w.grad.ravel())
