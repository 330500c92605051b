"""The optimizer stack: AdamW, annealing schedules, zero-patience stopping.

Run from the repository root:  python demos/03_schedules_and_stopping.py
"""

import numpy as np

from tedb.optim import AdamW, EarlyStop, Schedule, early_stop_update, lr_at
from tedb.tensor import Parameter

# One AdamW step, by hand: w=1, g=0.5, lr=0.1 moves w to ~0.9 because the
# bias-corrected ratio m_hat/sqrt(v_hat) is exactly g/|g| on the first step.
p = Parameter("w", np.array([1.0]))
opt = AdamW([p], lr=0.1, weight_decay=0.0)
p.node.grad = np.array([0.5])
opt.step()
print("after one step:", float(p.value[0]))

# Decoupled decay subtracts lr * wd * w on top, independent of the gradient.
q = Parameter("w", np.array([1.0]))
opt = AdamW([q], lr=0.1, weight_decay=0.01)
q.node.grad = np.array([0.5])
opt.step()
print("with weight decay:", float(q.value[0]))

# Cosine annealing with restarts: five sweeps from lr_max to lr_min, with
# an exact reset at every cycle boundary. Linear just ramps to zero.
cosine = Schedule(kind="cosine_restarts", lr_max=2e-5, lr_min=0.0, total_steps=1000, cycles=5)
linear = Schedule(kind="linear", lr_max=2e-5, total_steps=1000)
for step in (0, 100, 199, 200, 500, 999):
    print(f"step {step:4d}  cosine {lr_at(cosine, step):.3e}  linear {lr_at(linear, step):.3e}")

# Zero patience: the first epoch that fails to improve by min_delta stops
# the run. The training loop feeds it end-of-epoch train metrics.
stopper = EarlyStop(metric="train_loss", min_delta=1e-4)
for epoch_loss in (1.0, 0.5, 0.499995):
    verdict = early_stop_update(stopper, epoch_loss)
    print(f"loss {epoch_loss} -> {verdict}")
print("stopped at epoch:", stopper.stopped_epoch)
