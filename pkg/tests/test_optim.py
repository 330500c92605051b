import math

import numpy as np
import pytest

from tedb.errors import NumericError
from tedb.optim import AdamW, EarlyStop, Schedule, adamw_step, early_stop_update, lr_at
from tedb.tensor import Parameter


def scalar_param(value=1.0, **kw):
    return Parameter("w", np.array([value], dtype=np.float64), **kw)


# ---------------------------------------------------------------------------
# AdamW


def test_adamw_hand_oracle_no_decay():
    # m_hat = 0.5, v_hat = 0.25 after the first step
    p = scalar_param(1.0)
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    p.node.grad = np.array([0.5])
    opt.step()
    assert opt.t == 1
    assert abs(float(p.value[0]) - 0.9) < 1e-6


def test_adamw_hand_oracle_with_decay():
    p = scalar_param(1.0)
    opt = AdamW([p], lr=0.1, weight_decay=0.01)
    p.node.grad = np.array([0.5])
    opt.step()
    assert abs(float(p.value[0]) - 0.899) < 1e-6


def test_adamw_zero_grad_keeps_params():
    p = scalar_param(1.0)
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    for _ in range(5):
        p.node.grad = np.array([0.0])
        opt.step()
    assert float(p.value[0]) == 1.0


def test_adamw_nonfinite_grad():
    p = scalar_param(1.0)
    opt = AdamW([p], lr=0.1)
    p.node.grad = np.array([np.nan])
    with pytest.raises(NumericError, match="'w'"):
        opt.step()


def test_adamw_matches_adam_when_decay_zero():
    # hand-stepped scalar Adam oracle over ten steps
    gen = np.random.default_rng(4)
    grads = gen.normal(size=10)
    p = scalar_param(0.7)
    opt = AdamW([p], lr=0.01, weight_decay=0.0)
    w, m, v = 0.7, 0.0, 0.0
    for t, g in enumerate(grads, start=1):
        p.node.grad = np.array([g])
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh = m / (1 - 0.9 ** t)
        vh = v / (1 - 0.999 ** t)
        w = w - 0.01 * mh / (math.sqrt(vh) + 1e-8)
        assert float(p.value[0]) == pytest.approx(w, abs=1e-12)


def test_adamw_first_step_magnitude():
    for g in [0.003, 1.0, 250.0, -42.0]:
        p = scalar_param(0.0)
        opt = AdamW([p], lr=0.1, weight_decay=0.0)
        p.node.grad = np.array([g])
        opt.step()
        delta = abs(float(p.value[0]))
        assert 0.999 * 0.1 <= delta <= 0.1


def test_adamw_decay_exemptions():
    exempt = scalar_param(1.0, decay=False)
    table = Parameter("emb", np.ones((3, 2)), zero_row=0)
    opt = AdamW([exempt, table], lr=0.1, weight_decay=0.5)
    exempt.node.grad = np.array([0.0])
    table.node.grad = np.zeros((3, 2))
    opt.step()
    assert float(exempt.value[0]) == 1.0  # no decay on exempt params
    assert (table.value[0] == 1.0).all()  # pinned row untouched
    assert (table.value[1:] < 1.0).all()  # everything else decayed


def test_adamw_step_functional_wrapper():
    p = scalar_param(1.0)
    opt = AdamW([p], lr=0.1, weight_decay=0.0)
    p.node.grad = np.array([0.5])
    adamw_step([p], opt)
    assert opt.t == 1


def test_adamw_duplicate_names_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        AdamW([scalar_param(), scalar_param()])


# ---------------------------------------------------------------------------
# schedules


def test_linear_schedule_closed_form():
    s = Schedule(kind="linear", lr_max=2e-5, total_steps=100)
    assert lr_at(s, 0) == 2e-5
    assert lr_at(s, 50) == pytest.approx(1e-5, abs=0)
    assert lr_at(s, 100) == 0.0
    for step in range(101):
        assert lr_at(s, step) == pytest.approx(2e-5 * (1 - step / 100), abs=1e-18)


def test_cosine_schedule_examples():
    s = Schedule(kind="cosine_restarts", lr_max=2e-5, lr_min=0.0, total_steps=100, cycles=5)
    assert lr_at(s, 10) == pytest.approx(1e-5, abs=1e-18)  # cycle midpoint
    assert lr_at(s, 20) == 2e-5  # restart
    assert lr_at(s, 0) == 2e-5


def test_cosine_schedule_sweep_1000_5():
    s = Schedule(kind="cosine_restarts", lr_max=2e-5, lr_min=0.0, total_steps=1000, cycles=5)
    for step in range(1001):
        c = step % 200
        expected = 0.5 * 2e-5 * (1 + math.cos(math.pi * c / 200))
        assert abs(lr_at(s, step) - expected) <= 1e-12
    for k in range(6):
        assert lr_at(s, 200 * k) == 2e-5


def test_cosine_lr_min():
    s = Schedule(kind="cosine_restarts", lr_max=1e-3, lr_min=1e-5, total_steps=40, cycles=2)
    assert lr_at(s, 0) == 1e-3
    vals = [lr_at(s, t) for t in range(20)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert min(vals) >= 1e-5


def test_cosine_remainder_absorbed_by_last_cycle():
    s = Schedule(kind="cosine_restarts", lr_max=1.0, lr_min=0.0, total_steps=10, cycles=3)
    # boundaries at 0, 3, 6; last cycle spans 6..10
    assert lr_at(s, 0) == 1.0
    assert lr_at(s, 3) == 1.0
    assert lr_at(s, 6) == 1.0
    assert lr_at(s, 10) == pytest.approx(0.0, abs=1e-15)


def test_schedule_range_check():
    s = Schedule(kind="linear", lr_max=1.0, total_steps=10)
    with pytest.raises(ValueError):
        lr_at(s, 11)
    with pytest.raises(ValueError):
        lr_at(s, -1)


def test_schedule_kind_check():
    with pytest.raises(ValueError):
        Schedule(kind="polynomial", lr_max=1.0, total_steps=10)


# ---------------------------------------------------------------------------
# early stopping


def test_early_stop_loss_stream():
    es = EarlyStop(metric="train_loss", min_delta=1e-4)
    assert early_stop_update(es, 1.0) == "continue"
    assert early_stop_update(es, 0.5) == "continue"
    assert early_stop_update(es, 0.499995) == "stop"
    assert es.stopped_epoch == 3


def test_early_stop_strictly_improving_never_stops():
    es = EarlyStop(metric="train_loss", min_delta=1e-4)
    for loss in np.linspace(1.0, 0.0, 50):
        assert early_stop_update(es, float(loss)) == "continue"
    assert es.stopped_epoch is None


def test_early_stop_f1_plateau():
    es = EarlyStop(metric="train_f1", min_delta=1e-4)
    assert early_stop_update(es, 0.8) == "continue"
    assert early_stop_update(es, 0.8) == "stop"
    assert es.stopped_epoch == 2


def test_early_stop_zero_delta_ties_continue():
    es = EarlyStop(metric="train_loss", min_delta=0.0)
    assert early_stop_update(es, 1.0) == "continue"
    assert early_stop_update(es, 1.0) == "continue"  # zero improvement passes eps=0
    assert early_stop_update(es, 1.1) == "stop"  # strictly worse stops


def test_early_stop_unknown_metric():
    with pytest.raises(ValueError):
        EarlyStop(metric="val_loss")
