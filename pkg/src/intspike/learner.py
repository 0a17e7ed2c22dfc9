"""The online training loop: integer loss, feedback, gradient, update.

A sequence is presented for t_s timesteps while output spikes accumulate
into per-class counts.  The error is a shifted integer difference between
scaled counts and the scaled one-hot label; it reaches the head directly
and the hidden layer through the head's transposed low-precision weights.
Weights update once per batch, after the last timestep, from the fully
accumulated correlation traces.  Floats never appear on this path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import convrec
from .costs import OpCounter, charge_gradient_reduce
from .network import ConvLifLayer, Network
from .tensor import IntTensor, ShapeError, matmul_counted


@dataclass(frozen=True)
class PredictionState:
    """Output spikes accumulated over one sequence."""

    spike_counts: IntTensor  # [batch, classes]


def compute_error(pred: PredictionState, labels_onehot: IntTensor, cfg,
                  counter=None) -> IntTensor:
    """error = (counts * alpha) >> ts_shift  -  onehot * alpha.

    alpha is required to be a power of two so both scalings are shifts.
    """
    counts = pred.spike_counts.data
    if counts.shape != labels_onehot.shape:
        raise ShapeError(f"counts {counts.shape} vs labels {labels_onehot.shape}")
    err = ((counts << cfg.alpha_shift) >> cfg.ts_shift) \
        - (labels_onehot.data << cfg.alpha_shift)
    if counter is not None:
        n = counts.size
        counter.record("shift", 3 * n)
        counter.record("add", n)
    return IntTensor(err, 32, validate=False)


def classify(pred: PredictionState) -> np.ndarray:
    """Predicted class per batch element; ties go to the lowest index."""
    return np.argmax(pred.spike_counts.data, axis=1)


def hidden_feedback(error: IntTensor, next_layer_lp: IntTensor,
                    counter=None) -> IntTensor:
    """v_fb = error through the transposed LP weights of the next layer.

    `next_layer_lp` is that layer's [out, in] LP matrix; multiplying the
    error by it directly applies the transpose.  At the output layer the
    feedback is the error itself and this function is not involved.
    """
    if error.shape[1] != next_layer_lp.shape[0]:
        raise ShapeError(
            f"error width {error.shape[1]} != weight rows {next_layer_lp.shape[0]}")
    return matmul_counted(error, next_layer_lp, counter, out_bits=32)


def batch_gradient(v_fb: IntTensor, t_corr: IntTensor, counter=None) -> IntTensor:
    """delta[n,i] = sum_b v_fb[b,n] * t_corr[b,n,i], exact wide accumulation."""
    if v_fb.shape != t_corr.shape[:2]:
        raise ShapeError(f"feedback {v_fb.shape} vs trace {t_corr.shape}")
    if counter is not None:
        charge_gradient_reduce(counter, t_corr.size)
    delta = np.einsum("bn,bni->ni", v_fb.data, t_corr.data)
    return IntTensor(delta, 32, validate=False)


@dataclass
class BatchResult:
    batch: int
    correct: int
    loss: int


def _feedbacks(net: Network, error: IntTensor, counter):
    """Feedback voltages for (body, head), all from pre-update weights."""
    if isinstance(net.body, ConvLifLayer):
        fb_map = convrec.conv_error_feedback(
            error, net.head.w, net.body.spec, net.body.oh, net.body.ow,
            counter)
        body_fb = fb_map.data.reshape(error.shape[0], net.body.n_out)
    else:
        body_fb = hidden_feedback(
            error, IntTensor(net.head.w.lp.data, net.head.w.lp.bits,
                             validate=False), counter).data
    return body_fb, error.data


def train_batch(net: Network, spikes_seq: IntTensor, labels_onehot: IntTensor,
                cfg, counter: OpCounter) -> BatchResult:
    """One full training step over an encoded batch.

    spikes_seq: [t_s, batch, inputs]; labels_onehot: [batch, classes].
    Forward for t_s steps, then error, feedback, gradients, clipped
    updates, and LP requantization, in that order.
    """
    t_s, batch = spikes_seq.shape[0], spikes_seq.shape[1]
    net.begin_sequence(batch, t_s, train=True)
    counts = np.zeros((batch, net.classes), dtype=np.int64)
    with counter.phase("forward"):
        for t in range(t_s):
            s_t = IntTensor(spikes_seq.data[t], spikes_seq.bits,
                            spikes_seq.binary, validate=False)
            out = net.step(s_t, counter)
            counts += out.data
            counter.record("add", int(np.count_nonzero(out.data))
                           if counter.mode == "event" else out.size)
    pred = PredictionState(IntTensor(counts, 32, validate=False))
    with counter.phase("backward"):
        error = compute_error(pred, labels_onehot, cfg, counter)
        body_fb, head_fb = _feedbacks(net, error, counter)
        deltas = [net.body.gradient(body_fb, counter),
                  net.head.gradient(head_fb, counter)]
    with counter.phase("update"):
        for layer, delta in zip(net.layers, deltas):
            layer.update(delta, counter)
    preds = classify(pred)
    truth = np.argmax(labels_onehot.data, axis=1)
    loss = int(np.abs(error.data).sum())
    return BatchResult(batch=batch, correct=int((preds == truth).sum()),
                       loss=loss)


def train_batch_per_step(net: Network, spikes_seq: IntTensor,
                         labels_onehot: IntTensor, cfg,
                         counter: OpCounter) -> BatchResult:
    """Experimental variant: update after every timestep.

    The error at step t is computed from the counts accumulated so far;
    gradients come from the traces as of step t.  Requires the explicit
    trace (the factored identity covers only end-of-sequence updates).
    """
    if cfg.trace_mode != "explicit":
        raise ValueError("per-timestep updates require trace_mode=explicit")
    t_s, batch = spikes_seq.shape[0], spikes_seq.shape[1]
    net.begin_sequence(batch, t_s, train=True)
    counts = np.zeros((batch, net.classes), dtype=np.int64)
    loss = 0
    for t in range(t_s):
        with counter.phase("forward"):
            s_t = IntTensor(spikes_seq.data[t], spikes_seq.bits,
                            spikes_seq.binary, validate=False)
            out = net.step(s_t, counter)
            counts += out.data
            counter.record("add", int(np.count_nonzero(out.data))
                           if counter.mode == "event" else out.size)
        pred = PredictionState(IntTensor(counts.copy(), 32, validate=False))
        with counter.phase("backward"):
            error = compute_error(pred, labels_onehot, cfg, counter)
            body_fb, head_fb = _feedbacks(net, error, counter)
            deltas = [net.body.gradient(body_fb, counter),
                      net.head.gradient(head_fb, counter)]
        with counter.phase("update"):
            for layer, delta in zip(net.layers, deltas):
                layer.update(delta, counter)
        loss += int(np.abs(error.data).sum())
    pred = PredictionState(IntTensor(counts, 32, validate=False))
    preds = classify(pred)
    truth = np.argmax(labels_onehot.data, axis=1)
    return BatchResult(batch=batch, correct=int((preds == truth).sum()),
                       loss=loss)


def evaluate(net: Network, dataset, cfg, epoch: int, seed: int,
             counter: OpCounter) -> float:
    """Accuracy over the test split with frozen LP weights."""
    correct = 0
    total = 0
    for bi, start in enumerate(range(0, dataset.n_test, cfg.batch_size)):
        idx = np.arange(start, min(start + cfg.batch_size, dataset.n_test))
        spikes, onehot, labels = dataset.encode_batch(
            idx, split="test", epoch=epoch, batch_index=bi, cfg=cfg, seed=seed)
        batch = len(idx)
        net.begin_sequence(batch, cfg.t_s, train=False)
        counts = np.zeros((batch, net.classes), dtype=np.int64)
        with counter.phase("forward"):
            for t in range(cfg.t_s):
                s_t = IntTensor(spikes.data[t], spikes.bits, spikes.binary,
                                validate=False)
                out = net.step(s_t, counter)
                counts += out.data
        pred = classify(PredictionState(IntTensor(counts, 32, validate=False)))
        correct += int((pred == labels).sum())
        total += batch
    return correct / total


@dataclass
class EpochRecord:
    epoch: int
    train_acc: float
    test_acc: float
    loss: int
    ops: dict[str, int]


def run_training(net: Network, dataset, cfg, counter: OpCounter,
                 seed: int) -> list[EpochRecord]:
    """Epoch loop: seeded shuffle, per-batch updates, frozen-weight eval."""
    from .network import PURPOSE_SHUFFLE, seeded_rng
    step_fn = train_batch_per_step if cfg.update_timing == "timestep" \
        else train_batch
    records = []
    for epoch in range(cfg.epochs):
        order = seeded_rng(seed, PURPOSE_SHUFFLE, epoch).permutation(
            dataset.n_train)
        seen = correct = loss = 0
        for bi, start in enumerate(range(0, dataset.n_train, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            spikes, onehot, _ = dataset.encode_batch(
                idx, split="train", epoch=epoch, batch_index=bi, cfg=cfg,
                seed=seed)
            result = step_fn(net, spikes, onehot, cfg, counter)
            seen += result.batch
            correct += result.correct
            loss += result.loss
        test_acc = evaluate(net, dataset, cfg, epoch, seed, counter)
        records.append(EpochRecord(
            epoch=epoch, train_acc=correct / max(seen, 1), test_acc=test_acc,
            loss=loss, ops=counter.snapshot()))
    net.check_fixed_weights()
    return records
