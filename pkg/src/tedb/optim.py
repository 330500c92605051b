"""AdamW with decoupled weight decay, annealing schedules, and the
zero-patience early-stopping controller."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError
from .tensor import Parameter


class AdamW:
    """Decoupled-weight-decay Adam over a list of Parameters.

    Per step, with bias-corrected moments m_hat and v_hat:

        w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * weight_decay * w

    where the decay term is skipped for Parameters with decay=False and for
    a Parameter's pinned zero_row. Both terms read the pre-update w.
    """

    def __init__(self, params: list[Parameter], lr: float = 2e-5,
                 betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names: {sorted(names)}")
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {p.name: np.zeros_like(p.node.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.node.value) for p in self.params}

    def zero_grad(self):
        for p in self.params:
            p.node.grad = None

    def step(self, lr: float | None = None):
        lr = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            g = p.node.grad
            if g is None:
                g = np.zeros_like(p.node.value)
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient in parameter {p.name!r}")
            if p.zero_row is not None:
                g = g.copy()
                g[p.zero_row] = 0.0
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            update = lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay != 0.0 and p.decay:
                decay = lr * self.weight_decay * p.node.value
                if p.zero_row is not None:
                    decay = decay.copy()
                    decay[p.zero_row] = 0.0
                update = update + decay
            p.node.value -= update.astype(p.node.value.dtype, copy=False)


def adamw_step(params: list[Parameter], state: AdamW, lr: float | None = None):
    """Single optimizer step; gradients must already be in the nodes."""
    state.step(lr=lr)
    return params, state


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule evaluated per optimizer step, warmup-free.

    linear decays from lr_max to zero over total_steps. cosine_restarts runs
    `cycles` half-cosine sweeps from lr_max down to lr_min, resetting to
    lr_max at each cycle boundary; when total_steps is not divisible by
    cycles the last cycle absorbs the remainder.
    """

    kind: str
    lr_max: float
    total_steps: int
    lr_min: float = 0.0
    cycles: int = 1

    def __post_init__(self):
        if self.kind not in ("linear", "cosine_restarts"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.total_steps < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.cycles < 1:
            raise ValueError(f"cycles must be >= 1, got {self.cycles}")


def lr_at(schedule: Schedule, step: int) -> float:
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(
            f"step {step} outside schedule range [0, {schedule.total_steps}]"
        )
    if schedule.kind == "linear":
        return schedule.lr_max * (1.0 - step / schedule.total_steps)
    cycles = min(schedule.cycles, schedule.total_steps)  # every cycle spans >= 1 step
    period = schedule.total_steps // cycles
    if schedule.total_steps % cycles == 0:
        c = step % period
        t = period
    else:
        cycle = min(step // period, cycles - 1)
        c = step - cycle * period
        t = period if cycle < cycles - 1 else schedule.total_steps - (cycles - 1) * period
    return schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + math.cos(math.pi * c / t))


@dataclass
class EarlyStop:
    """Zero-patience early stopping on a training metric.

    Stops at the first epoch whose improvement over the best seen value is
    below min_delta. For train_loss lower is better; for train_f1 higher is.
    The first observed epoch always continues.
    """

    metric: str = "train_loss"
    min_delta: float = 1e-4
    best: float | None = None
    stopped_epoch: int | None = None
    epochs_seen: int = 0

    def __post_init__(self):
        if self.metric not in ("train_loss", "train_f1"):
            raise ValueError(f"unknown early-stop metric {self.metric!r}")


def early_stop_update(es: EarlyStop, epoch_metric: float) -> str:
    """Feed one epoch-end metric; returns "continue" or "stop"."""
    es.epochs_seen += 1
    if es.best is None:
        es.best = epoch_metric
        return "continue"
    if es.metric == "train_loss":
        improvement = es.best - epoch_metric
    else:
        improvement = epoch_metric - es.best
    if improvement >= es.min_delta:
        es.best = epoch_metric
        return "continue"
    es.stopped_epoch = es.epochs_seen
    return "stop"
