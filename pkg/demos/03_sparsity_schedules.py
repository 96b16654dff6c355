"""
Sparsity-weight schedules
=========================

The spike-count penalty is scaled by a weight that may change over training.
Below, every schedule over a 20-epoch horizon with ``sigma0 = 1e-3`` and 100
batches per epoch.  The alternating kinds switch the penalty on for a growing
share of batches: none in the first epoch, all in the last.
"""

from spikesparse.sparsity import (
    ScheduleKind,
    SparsitySchedule,
    TrainPosition,
    alternating_gate,
    sparsity_weight,
)

N, K, s0 = 20, 100, 1e-3

print("epoch " + "".join(f"{k.value:>20}" for k in ScheduleKind) + "   gated-on batches")
for n in range(1, N + 1):
    # mean weight over the epoch's batches
    means = []
    for kind in ScheduleKind:
        sched = SparsitySchedule(kind, s0, N)
        means.append(sum(sparsity_weight(sched, TrainPosition(n, b, K)) for b in range(K)) / K)
    on = sum(alternating_gate(TrainPosition(n, b, K), N) for b in range(K))
    print(f"{n:5d} " + "".join(f"{m:20.3e}" for m in means) + f"   {on:3d}/{K}")

# the gate pattern itself for epoch 11 (53 of 100 on)
gate = "".join(str(alternating_gate(TrainPosition(11, b, K), N)) for b in range(K))
print("\nepoch 11 gate:", gate)

# the quadratic form n**2/N grows past sigma0; the normalized form (n/N)**2 ends at sigma0
lit = SparsitySchedule("quadratic", s0, N)
norm = SparsitySchedule("quadratic", s0, N, quadratic_form="normalized")
print("\nquadratic at n=N: literal", sparsity_weight(lit, TrainPosition(N)),
      "normalized", sparsity_weight(norm, TrainPosition(N)))
