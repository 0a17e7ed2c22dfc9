"""Convolutional and recurrent extensions of the integer LIF layer.

The convolution path is built entirely from unfold (im2col) plus the
counted integer matmul: forward, trace accumulation, and error feedback
all reuse the fully-connected machinery on patch matrices, so kernel
weights share one update rule with FC weights.

The recurrent path adds a fixed random integer matrix on a truncated view
of the previous voltage: only the top 16 bits of the accumulator feed
back, via an arithmetic shift by (v_bits - 16) and saturation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .costs import charge_corr_trace_step
from .neuron import LifLayerState, lif_step
from .tensor import IntTensor, ShapeError, matmul_counted, saturate
from .weights import quantize_global


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.kernel,
               self.stride) < 1 or self.padding < 0:
            raise ValueError(f"invalid convolution geometry {self}")

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        oh = (h + 2 * self.padding - self.kernel) // self.stride + 1
        ow = (w + 2 * self.padding - self.kernel) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ShapeError(
                f"input {h}x{w} too small for kernel {self.kernel} "
                f"stride {self.stride} padding {self.padding}")
        return oh, ow

    @property
    def patch_len(self) -> int:
        return self.in_channels * self.kernel * self.kernel


def unfold(t: IntTensor, spec: ConvSpec) -> IntTensor:
    """[B, C, H, W] -> [B, H', W', C, k, k] patches; pure data movement."""
    x = t.data
    if x.ndim != 4 or x.shape[1] != spec.in_channels:
        raise ShapeError(f"expected [B, {spec.in_channels}, H, W], got {x.shape}")
    b, c, h, w = x.shape
    oh, ow = spec.out_hw(h, w)
    if spec.padding:
        pad = spec.padding
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (spec.kernel, spec.kernel),
                                                   axis=(2, 3))
    win = win[:, :, ::spec.stride, ::spec.stride]  # [B, C, H', W', k, k]
    patches = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    assert patches.shape == (b, oh, ow, c, spec.kernel, spec.kernel)
    return IntTensor(patches, t.bits, t.binary, validate=False)


def conv_forward(spikes_in: IntTensor, w, spec: ConvSpec,
                 counter=None) -> IntTensor:
    """Integer cross-correlation with the layer's LP kernel weights.

    Identical to unfold followed by the counted matmul; under event
    counting each input spike is charged once per window that reads it.
    """
    b = spikes_in.shape[0]
    oh, ow = spec.out_hw(spikes_in.shape[2], spikes_in.shape[3])
    patches = unfold(spikes_in, spec)
    flat = IntTensor(patches.data.reshape(b * oh * ow, spec.patch_len),
                     patches.bits, patches.binary, validate=False)
    kernel_t = IntTensor(
        w.lp.data.reshape(spec.out_channels, spec.patch_len).T,
        w.lp.bits, validate=False)
    out = matmul_counted(flat, kernel_t, counter, out_bits=32)
    maps = out.data.reshape(b, oh, ow, spec.out_channels).transpose(0, 3, 1, 2)
    return IntTensor(np.ascontiguousarray(maps), out.bits, validate=False)


@dataclass
class ConvCorrTrace:
    """Explicit correlation trace of a conv layer, one slab per window."""

    data: IntTensor  # [B, Co, H', W', C, k, k]

    @classmethod
    def zeros(cls, batch: int, spec: ConvSpec, oh: int, ow: int,
              bits: int) -> "ConvCorrTrace":
        shape = (batch, spec.out_channels, oh, ow, spec.in_channels,
                 spec.kernel, spec.kernel)
        return cls(IntTensor(np.zeros(shape, dtype=np.int64), bits,
                             validate=False))


def conv_corr_update(trace: ConvCorrTrace, t_pre_spatial: IntTensor,
                     sg: IntTensor, spec: ConvSpec, counter=None) -> None:
    """trace[b,co,y,x,:,:,:] += patch[b,y,x,:,:,:] where sg[b,co,y,x] = 1."""
    patches = unfold(t_pre_spatial, spec)
    b, co, oh, ow = sg.shape
    grown = trace.data.data + sg.data[:, :, :, :, None, None, None] \
        * patches.data[:, None, :, :, :, :, :]
    trace.data = saturate(IntTensor(grown, 32, validate=False),
                          trace.data.bits, counter)
    if counter is not None:
        charge_corr_trace_step(counter, b * oh * ow, co, spec.patch_len,
                               int(np.count_nonzero(sg.data)))


def conv_error_feedback(error_pred: IntTensor, fc_weights, spec: ConvSpec,
                        oh: int, ow: int, counter=None) -> IntTensor:
    """Project the prediction error back onto the conv output map.

    Uses the transposed LP weights of the FC head that consumed the
    flattened conv output; result shape [B, Co, H', W'].
    """
    n_flat = spec.out_channels * oh * ow
    if fc_weights.lp.shape[1] != n_flat:
        raise ShapeError(
            f"head expects {fc_weights.lp.shape[1]} inputs, conv map has {n_flat}")
    fb = matmul_counted(error_pred,
                        IntTensor(fc_weights.lp.data, fc_weights.lp.bits,
                                  validate=False),
                        counter, out_bits=32)
    maps = fb.data.reshape(error_pred.shape[0], spec.out_channels, oh, ow)
    return IntTensor(maps, fb.bits, validate=False)


REC_TAP_BITS = 16


@dataclass
class RecurrentWeights:
    """Fixed random integer recurrence; never updated after construction."""

    w_rec: IntTensor
    _digest: str = field(default="", repr=False)

    def __post_init__(self):
        if self.w_rec.data.ndim != 2 or \
                self.w_rec.shape[0] != self.w_rec.shape[1]:
            raise ShapeError(f"recurrent matrix must be square, got "
                             f"{self.w_rec.shape}")
        if not self._digest:
            self._digest = self.digest()

    def digest(self) -> str:
        return hashlib.sha256(
            np.ascontiguousarray(self.w_rec.data).tobytes()).hexdigest()

    def check_unchanged(self) -> None:
        if self.digest() != self._digest:
            raise RuntimeError("fixed recurrent weights were mutated")


def init_recurrent(n: int, lp_bits: int, rng: np.random.Generator,
                   global_max: float) -> RecurrentWeights:
    """Random fixed recurrence through the shared quantization pipeline.

    Reals are drawn at 1/sqrt(n) of the feedforward scale so the
    recurrent drive stays bounded, then quantized directly at LP width
    against the network's global max.
    """
    bound = 1.0 / n
    reals = rng.uniform(-bound, bound, size=(n, n))
    codes = quantize_global(reals, global_max, lp_bits)
    return RecurrentWeights(IntTensor(codes, lp_bits))


def voltage_tap(v: IntTensor, counter=None) -> IntTensor:
    """Top 16 bits of the voltage accumulator, as a saturated 16-bit value."""
    k = v.bits - REC_TAP_BITS
    if k < 0:
        raise ValueError(f"voltage width {v.bits} below tap width {REC_TAP_BITS}")
    tap = saturate(IntTensor(v.data >> k, 32, validate=False),
                   REC_TAP_BITS, counter)
    if counter is not None:
        counter.record("shift", v.size)
    return tap


def recurrent_step(state: LifLayerState, spikes_in: IntTensor, w_ff,
                   w_rec: RecurrentWeights, counter=None) -> IntTensor:
    """LIF step plus w_rec applied to the truncated previous voltage."""
    tap = voltage_tap(state.v, counter)
    rec_t = IntTensor(w_rec.w_rec.data.T, w_rec.w_rec.bits, validate=False)
    rec = matmul_counted(tap, rec_t, counter, out_bits=32)
    if counter is not None:
        counter.record("add", rec.size)  # inject the tap into the drive
    return lif_step(state, spikes_in, w_ff, counter,
                    extra_current=rec.data)
