import itertools
import math

import numpy as np
import pytest

from morphmlp import tensor as T
from morphmlp.data import (
    DatasetSpec,
    batches,
    chunk_parity_batch,
    frame_order_batch,
    read_dataset,
    write_dataset,
)
from morphmlp.gradcheck import finite_diff_check
from morphmlp.losses import accuracy, cross_entropy
from morphmlp.model import build_model, custom_config
from morphmlp.nn import Parameter
from morphmlp.optim import AdamW, Schedule, adamw_step, cosine_lr
from morphmlp.tensor import Tensor, backward
from morphmlp.train import (
    DivergenceError,
    StepRecord,
    read_metrics,
    tail_accuracy,
    train_loop,
    write_metrics,
)


# ---- optimizer ----------------------------------------------------------------

def test_zero_grads_without_decay_leave_params_unchanged():
    p = Parameter(np.array([1.0, -2.0, 3.0]))
    opt = AdamW([("p", p)], lr=0.1, weight_decay=0.0)
    p.grad = np.zeros(3)
    adamw_step(opt)
    np.testing.assert_array_equal(p.data, [1.0, -2.0, 3.0])


def test_first_step_closed_form():
    p = Parameter(np.array([0.5]))
    opt = AdamW([("p", p)], lr=0.1, betas=(0.9, 0.999), weight_decay=0.0)
    p.grad = np.array([1.0])
    opt.step()
    assert p.data[0] - 0.5 == pytest.approx(-0.1 / (1.0 + 1e-8), abs=1e-15)


def _scalar_adamw(p0, a, c, lr, b1, b2, eps, wd, steps):
    p, m, v, out = p0, 0.0, 0.0, []
    for t in range(1, steps + 1):
        g = a * (p - c)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p * (1 - lr * wd)
        p = p - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
        out.append(p)
    return out


def test_ten_step_quadratic_trajectory_matches_scalar_oracle():
    a, c, lr, wd = 3.0, 0.7, 0.05, 0.1
    p = Parameter(np.array([2.0]))
    opt = AdamW([("p", p)], lr=lr, betas=(0.9, 0.999), eps=1e-8, weight_decay=wd)
    ref = _scalar_adamw(2.0, a, c, lr, 0.9, 0.999, 1e-8, wd, 10)
    for t in range(10):
        opt.zero_grad()
        loss = T.scale(T.mul(T.add(p, Tensor(np.array([-c]))), T.add(p, Tensor(np.array([-c])))),
                       a / 2)
        backward(T.sum_(loss))
        opt.step()
        assert abs(p.data[0] - ref[t]) < 1e-12
    assert opt.state.step == 10
    assert opt.state.exp_avg[0].shape == p.shape


def test_decay_skips_flagged_parameters():
    w, b = Parameter(np.ones(2)), Parameter(np.ones(2), decay=False)
    opt = AdamW([("w", w), ("b", b)], lr=0.1, weight_decay=0.5)
    w.grad, b.grad = np.zeros(2), np.zeros(2)
    opt.step()
    np.testing.assert_allclose(w.data, 0.95)
    np.testing.assert_array_equal(b.data, 1.0)


def test_non_finite_gradient_names_parameter():
    p = Parameter(np.ones(2))
    opt = AdamW([("stages.0.0.mlp.fc1.weight", p)])
    p.grad = np.array([1.0, np.nan])
    with pytest.raises(FloatingPointError, match="stages.0.0.mlp.fc1.weight"):
        opt.step()
    np.testing.assert_array_equal(p.data, 1.0)


# ---- schedule -------------------------------------------------------------

def test_cosine_schedule_examples():
    s = Schedule(base_lr=1.0, total_steps=120, warmup_steps=20, floor_lr=0.1)
    assert cosine_lr(0, s) == pytest.approx(1.0 / 20)
    assert cosine_lr(20, s) == 1.0
    assert cosine_lr(120, s) == pytest.approx(0.1)
    assert cosine_lr(70, s) == pytest.approx(0.55)
    after = [cosine_lr(t, s) for t in range(20, 121)]
    assert all(x >= y for x, y in zip(after, after[1:]))
    warm = [cosine_lr(t, s) for t in range(20)]
    assert all(x < y for x, y in zip(warm, warm[1:]))


def test_schedule_rejects_long_warmup():
    with pytest.raises(ValueError):
        Schedule(1.0, 10, warmup_steps=11)


# ---- loss ---------------------------------------------------------------------

def test_uniform_logits_give_log_k():
    loss = cross_entropy(Tensor(np.zeros((3, 7))), [0, 3, 6])
    assert loss.item() == pytest.approx(math.log(7), abs=1e-15)


def test_large_margin_drives_loss_to_zero():
    losses = [cross_entropy(Tensor(np.eye(4) * m), [0, 1, 2, 3]).item() for m in (1, 10, 40)]
    assert losses[0] > losses[1] > losses[2] and losses[2] < 1e-15


def test_label_smoothing_value():
    eps, k = 0.1, 4
    loss = cross_entropy(Tensor(np.zeros((1, k))), [2], label_smoothing=eps).item()
    assert loss == pytest.approx(math.log(k))
    logits = np.array([[2.0, 0.0, -1.0, 0.5]])
    logp = logits - np.log(np.exp(logits).sum())
    q = np.full(k, eps / k)
    q[0] += 1 - eps
    assert cross_entropy(Tensor(logits), [0], eps).item() == pytest.approx(-(q * logp).sum())


def test_cross_entropy_gradient():
    rng = np.random.default_rng(0)
    x = Tensor(rng.standard_normal((5, 4)), requires_grad=True)
    y = rng.integers(0, 4, 5)
    report = finite_diff_check(lambda: cross_entropy(x, y, 0.1), {"logits": x})
    assert report.passed, report.lines()


def test_labels_out_of_range():
    with pytest.raises(ValueError, match="labels"):
        cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])
    with pytest.raises(ValueError):
        cross_entropy(Tensor(np.zeros((2, 3))), [-1, 0])


def test_accuracy():
    assert accuracy(np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 1.0]]), [0, 1, 1]) == pytest.approx(2 / 3)


# ---- data -----------------------------------------------------------------

@pytest.mark.parametrize("kind", ["chunk-parity", "frame-order"])
def test_streams_are_deterministic(kind):
    spec = DatasetSpec(kind=kind, batch_size=4, seed=3)
    a = list(itertools.islice(batches(spec), 3))
    b = list(itertools.islice(batches(spec), 3))
    for (xa, ya), (xb, yb) in zip(a, b):
        assert np.array_equal(xa, xb) and np.array_equal(ya, yb)
    val = next(batches(DatasetSpec(kind=kind, batch_size=4, seed=3, split="val")))
    assert not np.array_equal(val[0], a[0][0])


def _motion_score(x):
    """Column centroid of the second half of the clip minus that of the first half."""
    b = x.mean(axis=(1, 4))
    cols = np.arange(x.shape[2])
    h = x.shape[3] // 2
    return (b[:, :, h:].sum(-1) @ cols) - (b[:, :, :h].sum(-1) @ cols)


def test_shuffled_frames_decorrelate_labels():
    x, y = frame_order_batch(np.random.default_rng(0), 2000)
    assert np.mean((_motion_score(x) > 0) == y) == 1.0
    xs, ys = frame_order_batch(np.random.default_rng(0), 2000, shuffle_frames=True)
    assert abs(np.corrcoef(_motion_score(xs), ys)[0, 1]) < 0.1


def test_frame_order_classes_are_time_reversals():
    x, y = frame_order_batch(np.random.default_rng(1), 64, noise=0.0)
    for clip, label in zip(x, y):
        reversed_clip = clip[:, :, ::-1]
        assert _motion_score(reversed_clip[None])[0] * _motion_score(clip[None])[0] < 0
        assert (_motion_score(clip[None])[0] > 0) == bool(label)


def test_chunk_parity_is_linearly_separable():
    from sklearn.linear_model import LogisticRegression

    x, y = chunk_parity_batch(np.random.default_rng(0), 2000)
    probe = LogisticRegression(max_iter=2000).fit(x.reshape(len(x), -1), y)
    assert probe.score(x.reshape(len(x), -1), y) >= 0.99
    assert set(np.unique(y)) == {0, 1, 2, 3}


def test_dataset_file_round_trip(tmp_path):
    x, y = chunk_parity_batch(np.random.default_rng(2), 10, size=8)
    path = tmp_path / "d.mdat"
    write_dataset(path, x, y)
    assert path.read_bytes()[:5] == b"MDAT1"
    x2, y2 = read_dataset(path)
    assert x2.dtype == np.float32 and np.array_equal(x2, x) and np.array_equal(y2, y)
    spec = DatasetSpec(source="file", path=str(path), batch_size=5)
    bx, by = next(batches(spec))
    assert bx.shape == (5, 8, 8, 3) and spec.num_classes == int(y.max()) + 1
    path.write_bytes(path.read_bytes()[:-2])
    with pytest.raises(ValueError):
        read_dataset(path)


# ---- training loop --------------------------------------------------------

def toy_image_model(seed=0):
    return build_model(custom_config([2], [16], [4], num_classes=4, height=16, width=16), seed=seed)


def _train(model, spec, steps, lr=3e-3, seed=0):
    opt = AdamW(model.named_parameters(), lr=lr, weight_decay=0.05)
    sched = Schedule(lr, steps, min(20, steps))
    return train_loop(model, spec, opt, sched, steps, seed=seed)


def test_zero_learning_rate_keeps_loss_constant():
    batch = chunk_parity_batch(np.random.default_rng(0), 8)
    records = _train(toy_image_model(), itertools.repeat(batch), 5, lr=0.0)
    assert len({r.loss for r in records}) == 1


def test_training_log_is_bitwise_reproducible():
    spec = DatasetSpec(kind="chunk-parity", batch_size=8, seed=1)
    cfg = custom_config([2], [16], [4], num_classes=4, height=16, width=16, stoch_depth_max=0.2)
    runs = [[r.to_line() for r in _train(build_model(cfg, seed=4), spec, 15, seed=4)]
            for _ in range(2)]
    assert runs[0] == runs[1]


def test_divergence_aborts_with_step_index():
    good = chunk_parity_batch(np.random.default_rng(0), 4)
    bad = (np.full_like(good[0], np.nan), good[1])
    stream = iter([good, good, good, bad, good])
    with pytest.raises(DivergenceError) as info:
        _train(toy_image_model(), stream, 5)
    assert info.value.step == 3


@pytest.fixture(scope="module")
def image_run():
    return _train(toy_image_model(), DatasetSpec(kind="chunk-parity", batch_size=32), 300)


def test_loss_decreases_on_chunk_parity(image_run):
    losses = [r.loss for r in image_run]
    assert np.median(losses[200:300]) < np.median(losses[0:100])
    assert tail_accuracy(image_run) >= 0.95


def test_metrics_log_round_trip(tmp_path, image_run):
    path = tmp_path / "metrics.log"
    write_metrics(image_run[:20], path)
    lines = path.read_text(encoding="ascii").splitlines()
    assert lines[0].startswith("step=0 lr=") and len(lines) == 20
    assert read_metrics(path) == image_run[:20]


def test_record_line_format():
    r = StepRecord(3, 1e-3, 0.1 + 0.2, 0.5)
    assert r.to_line() == "step=3 lr=0.001 loss=0.30000000000000004 acc=0.5"
    assert StepRecord.from_line(r.to_line()) == r
