"""Shadow / low-precision integer weight pairs and their update rule.

Each trainable layer owns two integer views of the same weights: a wide
shadow tensor that absorbs gradient updates, and the low-precision tensor
actually used in forward and feedback passes, regenerated from the shadow
by an arithmetic right shift of (shadow_bits - lp_bits).

Initialization draws reals uniformly in +-1/sqrt(fan_in), then quantizes
against the single largest absolute value across all layers of the network
(global-max quantization).  Quantization is evaluated in exact rational
arithmetic so ties round away from zero deterministically; the reals are
discarded afterwards and never touch training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .tensor import (IntTensor, ShapeError, WidthError, int_bounds, saturate,
                     shift_right_arith)

CHECKPOINT_MAGIC = b"ISNW"
CHECKPOINT_VERSION = 1


@dataclass
class MixedPrecisionLayerWeights:
    shadow: IntTensor
    lp: IntTensor
    eta_shift: int
    decay_shift: int
    clip: int

    @property
    def shift(self) -> int:
        return self.shadow.bits - self.lp.bits

    def __post_init__(self):
        if self.shift < 0:
            raise WidthError(
                f"shadow width {self.shadow.bits} below lp width {self.lp.bits}")
        if self.clip <= 0:
            raise ValueError("gradient clip must be positive")


def real_init(shape, fan_in: int, rng: np.random.Generator) -> np.ndarray:
    """Standard real-valued init: uniform in +-1/sqrt(fan_in)."""
    bound = 1.0 / float(np.sqrt(fan_in))
    return rng.uniform(-bound, bound, size=shape)


def quantize_global(reals: np.ndarray, global_max: float, bits: int) -> np.ndarray:
    """Map reals onto `bits`-wide codes: round_half_away(w * M / global_max).

    Evaluated per element with exact rationals (floats are exact binary
    rationals), so half-way cases round away from zero with no float
    round-off.  Init-time only; cost is irrelevant.
    """
    if global_max <= 0:
        raise ValueError("global_max must be positive")
    m = (1 << (bits - 1)) - 1
    scale = Fraction(m) / Fraction(float(global_max))
    lo, hi = int_bounds(bits)
    flat = reals.reshape(-1)
    out = np.empty(flat.shape[0], dtype=np.int64)
    for idx, w in enumerate(flat):
        x = Fraction(float(w)) * scale
        num, den = abs(x.numerator), x.denominator
        q = (2 * num + den) // (2 * den)
        if x < 0:
            q = -q
        out[idx] = min(max(q, lo), hi)
    return out.reshape(reals.shape)


def init_weights(shape, fan_in: int, shadow_bits: int, lp_bits: int,
                 rng: np.random.Generator, global_max: float,
                 eta_shift: int = 8, decay_shift: int = 12,
                 clip: int = 1 << 10,
                 reals: np.ndarray | None = None) -> MixedPrecisionLayerWeights:
    """Build one layer's weight pair.

    `global_max` must be the maximum absolute real init value across every
    layer of the network, computed before any quantization.  Callers that
    already drew the reals (to compute that maximum) pass them in.
    """
    if shadow_bits < lp_bits:
        raise WidthError(f"shadow width {shadow_bits} below lp width {lp_bits}")
    if reals is None:
        reals = real_init(shape, fan_in, rng)
    codes = quantize_global(reals, global_max, shadow_bits)
    shadow = IntTensor(codes, shadow_bits)
    w = MixedPrecisionLayerWeights(
        shadow=shadow, lp=IntTensor(np.zeros(shape, dtype=np.int64), lp_bits),
        eta_shift=eta_shift, decay_shift=decay_shift, clip=clip)
    requantize(w)
    return w


def clip_gradient(delta: IntTensor, clip: int) -> IntTensor:
    if clip <= 0:
        raise ValueError("gradient clip must be positive")
    return IntTensor(np.clip(delta.data, -clip, clip), delta.bits, validate=False)


def apply_update(w: MixedPrecisionLayerWeights, delta: IntTensor,
                 counter=None) -> None:
    """shadow <- sat(shadow - (delta >> eta) - (shadow >> rho)); refresh lp.

    Both subtracted terms read the pre-update shadow.  Charges 2 shifts and
    2 adds per weight, plus the requantization shift.
    """
    if delta.shape != w.shadow.shape:
        raise ShapeError(
            f"gradient shape {delta.shape} != weight shape {w.shadow.shape}")
    stepped = w.shadow.data - (delta.data >> w.eta_shift) \
        - (w.shadow.data >> w.decay_shift)
    w.shadow = saturate(IntTensor(stepped, 32, validate=False),
                        w.shadow.bits, counter)
    if counter is not None:
        n = delta.size
        counter.record("shift", 2 * n)
        counter.record("add", 2 * n)
    requantize(w, counter)


def requantize(w: MixedPrecisionLayerWeights, counter=None) -> None:
    w.lp = saturate(shift_right_arith(w.shadow, w.shift), w.lp.bits, counter)
    if counter is not None:
        counter.record("shift", w.shadow.size)


def save_checkpoint(path, layers) -> None:
    """Write shadow weights for a list of layers.

    Layout, little-endian: magic "ISNW", version u32, layer count u32; per
    layer shadow_bits u8, lp_bits u8, rank u8, dims u32 each, then the
    shadow values as i32.  LP weights are derived state and never stored.
    """
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(layers)))
        for w in layers:
            shape = w.shadow.shape
            f.write(struct.pack("<BBB", w.shadow.bits, w.lp.bits, len(shape)))
            f.write(struct.pack(f"<{len(shape)}I", *shape))
            f.write(w.shadow.data.astype("<i4").tobytes())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path):
    """Read back (shadow IntTensor, lp_bits) records written by save_checkpoint."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 12
    records = []
    for _ in range(count):
        if off + 3 > len(blob):
            raise CheckpointError("truncated checkpoint header")
        shadow_bits, lp_bits, rank = struct.unpack_from("<BBB", blob, off)
        off += 3
        dims = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        numel = int(np.prod(dims)) if rank else 1
        end = off + 4 * numel
        if end > len(blob):
            raise CheckpointError(
                f"truncated checkpoint: expected {end} bytes, have {len(blob)}")
        data = np.frombuffer(blob, dtype="<i4", count=numel, offset=off)
        off = end
        shadow = IntTensor(data.astype(np.int64).reshape(dims), shadow_bits)
        records.append((shadow, lp_bits))
    if off != len(blob):
        raise CheckpointError(f"{len(blob) - off} trailing bytes in checkpoint")
    return records


def restore_layer(record, eta_shift: int, decay_shift: int,
                  clip: int) -> MixedPrecisionLayerWeights:
    """Rebuild a full weight pair from a checkpoint record plus hyperparameters."""
    shadow, lp_bits = record
    w = MixedPrecisionLayerWeights(
        shadow=shadow,
        lp=IntTensor(np.zeros(shadow.shape, dtype=np.int64), lp_bits),
        eta_shift=eta_shift, decay_shift=decay_shift, clip=clip)
    requantize(w)
    return w
