"""Integer leaky integrate-and-fire dynamics and eligibility traces.

All arithmetic is integer-only.  Voltage decay multiplies by beta through
an arithmetic right shift of beta_shift = floor(log2(1/beta)) bits, the
spike derivative is replaced by a 0/1 window around the threshold, and
credit assignment runs on two traces: a presynaptic trace of recent input
activity and a per-synapse correlation trace gated by the surrogate.

The canonical per-timestep order, which every other implementation path
(and the test oracles) must match bit for bit:

1. t_pre  <- sat(t_pre >> beta_shift + s(t))
2. v      <- sat(v >> beta_shift + current [+ recurrent tap])
3. spikes  = v >= v_th
4. sg      = |v - v_th| < grad_win        (pre-reset voltage)
5. v      <- sat(v - v_th * spikes)       (soft reset)
6. t_corr <- sat(t_corr + sg x t_pre)     (outer product)
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .costs import charge_corr_trace_step
from .tensor import IntTensor, ShapeError, matmul_counted, saturate

V_BITS_DEFAULT = 32
T_PRE_BITS_DEFAULT = 16
T_CORR_BITS_DEFAULT = 32


@dataclass(frozen=True)
class LifParams:
    v_th: int
    grad_win: int
    beta_shift: int

    def __post_init__(self):
        if self.v_th <= 0:
            raise ValueError("v_th must be positive")
        if self.grad_win <= 0:
            raise ValueError("grad_win must be positive")
        if not (0 <= self.beta_shift < 32):
            raise ValueError("beta_shift must be in [0, 32)")


def decay_shift(beta: float) -> int:
    """beta in (0, 1] -> floor(log2(1/beta)), computed exactly."""
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    inv = 1 / Fraction(float(beta))
    k = 0
    while Fraction(2) ** (k + 1) <= inv:
        k += 1
    return k


class LifLayerState:
    """Per-batch state of one fully-connected LIF layer.

    `track_corr=False` skips materializing the per-synapse correlation
    trace for callers that compute gradients by the factored identity
    instead (see the learner); the trace semantics are unchanged.
    """

    def __init__(self, batch: int, n_in: int, n_out: int, params: LifParams,
                 v_bits: int = V_BITS_DEFAULT,
                 t_pre_bits: int = T_PRE_BITS_DEFAULT,
                 t_corr_bits: int = T_CORR_BITS_DEFAULT,
                 track_corr: bool = True):
        self.batch = batch
        self.n_in = n_in
        self.n_out = n_out
        self.params = params
        self.v_bits = v_bits
        self.t_pre_bits = t_pre_bits
        self.t_corr_bits = t_corr_bits
        self.track_corr = track_corr
        self.reset_state()

    def reset_state(self) -> None:
        self.v = IntTensor(np.zeros((self.batch, self.n_out), dtype=np.int64),
                           self.v_bits, validate=False)
        self.t_pre = IntTensor(np.zeros((self.batch, self.n_in), dtype=np.int64),
                               self.t_pre_bits, validate=False)
        if self.track_corr:
            self.t_corr = IntTensor(
                np.zeros((self.batch, self.n_out, self.n_in), dtype=np.int64),
                self.t_corr_bits, validate=False)
        else:
            self.t_corr = None
        self.v_pre_reset = self.v


def update_pre_trace(state: LifLayerState, spikes_in: IntTensor,
                     counter=None) -> None:
    """t_pre <- sat(t_pre >> beta_shift + s(t))."""
    if spikes_in.shape != state.t_pre.shape:
        raise ShapeError(
            f"input shape {spikes_in.shape} != trace shape {state.t_pre.shape}")
    decayed = (state.t_pre.data >> state.params.beta_shift) + spikes_in.data
    state.t_pre = saturate(IntTensor(decayed, 32, validate=False),
                           state.t_pre_bits, counter)
    if counter is not None:
        n = state.t_pre.size
        counter.record("shift", n)
        counter.record("add", n)


def integrate_voltage(state: LifLayerState, drive: np.ndarray,
                      counter=None) -> IntTensor:
    """Decay, integrate `drive`, threshold, soft reset; returns spikes.

    The pre-reset voltage needed by the surrogate window is kept on the
    state as `v_pre_reset`.
    """
    p = state.params
    v_new = (state.v.data >> p.beta_shift) + drive
    v_new = saturate(IntTensor(v_new, 32, validate=False), state.v_bits, counter)
    spikes = (v_new.data >= p.v_th).astype(np.int64)
    state.v_pre_reset = v_new
    reset = v_new.data - p.v_th * spikes
    state.v = saturate(IntTensor(reset, 32, validate=False), state.v_bits, counter)
    if counter is not None:
        n = v_new.size
        counter.record("shift", n)   # decay
        counter.record("add", n)     # integrate drive
        counter.record("bmul", n)    # v_th * spike
        counter.record("add", n)     # reset subtract
    return IntTensor(spikes, 2, binary=True, validate=False)


def lif_step(state: LifLayerState, spikes_in: IntTensor,
             w, counter=None, extra_current: np.ndarray | None = None
             ) -> IntTensor:
    """One fully-connected voltage update against the layer's LP weights.

    `extra_current` lets recurrent layers inject their tap; the extra add
    it costs is charged by the caller.
    """
    lp_t = IntTensor(w.lp.data.T, w.lp.bits, validate=False)
    current = matmul_counted(spikes_in, lp_t, counter, out_bits=32)
    drive = current.data if extra_current is None \
        else current.data + extra_current
    return integrate_voltage(state, drive, counter)


def surrogate_grad(v: IntTensor, params: LifParams) -> IntTensor:
    """0/1 window: 1 where |v - v_th| < grad_win.  Comparisons are free."""
    sg = (np.abs(v.data - params.v_th) < params.grad_win).astype(np.int64)
    return IntTensor(sg, 2, binary=True, validate=False)


def update_corr_trace(state: LifLayerState, sg: IntTensor,
                      counter=None) -> None:
    """t_corr[b,n,i] <- sat(t_corr[b,n,i] + t_pre[b,i] * sg[b,n])."""
    if state.t_corr is None:
        raise ValueError("layer state was built with track_corr=False")
    if sg.shape != (state.batch, state.n_out):
        raise ShapeError(
            f"surrogate shape {sg.shape} != ({state.batch}, {state.n_out})")
    grown = state.t_corr.data + sg.data[:, :, None] * state.t_pre.data[:, None, :]
    state.t_corr = saturate(IntTensor(grown, 32, validate=False),
                            state.t_corr_bits, counter)
    if counter is not None:
        charge_corr_trace_step(counter, state.batch, state.n_out, state.n_in,
                               int(np.count_nonzero(sg.data)))
