"""Fixed-width signed integer tensors and the exact arithmetic they allow.

Every quantity in the training engine lives in an :class:`IntTensor`: an
``int64`` ndarray tagged with the bit width it is *declared* to occupy.
Arithmetic runs wide (64-bit or better) and values are saturated back into
the declared range only when written to a width-tagged tensor.

The one performance-critical primitive is the exact integer matmul.  When
operand magnitudes allow, it runs on the float64 BLAS: products and every
partial sum stay below 2**53, where float64 arithmetic on integers is exact
regardless of summation order, so the result is deterministic and bit-exact
even with a threaded BLAS.  Larger cases fall back to int64 and finally to
Python big-int object arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_BITS = 2
MAX_BITS = 32

# Largest product-sum magnitude safe for the float64 path / the int64 path.
_F64_EXACT = 1 << 53
_I64_SAFE = 1 << 62


class WidthError(ValueError):
    pass


class ShapeError(ValueError):
    pass


def check_bits(bits: int) -> int:
    if not (MIN_BITS <= bits <= MAX_BITS):
        raise WidthError(f"bit width must be in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    return bits


def int_bounds(bits: int) -> tuple[int, int]:
    """Inclusive (lo, hi) range of a signed `bits`-wide integer."""
    check_bits(bits)
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


@dataclass
class IntTensor:
    """An int64 ndarray plus the bit width its values are declared to fit.

    ``binary=True`` additionally declares values are 0/1 (spikes, surrogate
    gradients); such tensors are priced at one bit by the memory model and
    let counted matmuls skip multiplications.
    """

    data: np.ndarray
    bits: int
    binary: bool = False
    validate: bool = True

    def __post_init__(self):
        check_bits(self.bits)
        self.data = np.asarray(self.data, dtype=np.int64)
        if self.validate:
            lo, hi = int_bounds(self.bits)
            if self.data.size and (self.data.min() < lo or self.data.max() > hi):
                raise WidthError(
                    f"values outside {self.bits}-bit range [{lo}, {hi}]")
            if self.binary and self.data.size and (
                    self.data.min() < 0 or self.data.max() > 1):
                raise WidthError("binary tensor holds values outside {0, 1}")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def copy(self) -> "IntTensor":
        return IntTensor(self.data.copy(), self.bits, self.binary, validate=False)


def shift_right_arith(t: IntTensor, k: int) -> IntTensor:
    """Element-wise floor(e / 2**k); arithmetic shift, width unchanged."""
    if not (0 <= k < 32):
        raise ValueError(f"shift amount must be in [0, 32), got {k}")
    return IntTensor(t.data >> k, t.bits, validate=False)


def saturate(t: IntTensor, bits: int, counter=None) -> IntTensor:
    """Clamp into the signed `bits` range; result declared at that width."""
    lo, hi = int_bounds(bits)
    out = np.clip(t.data, lo, hi)
    if counter is not None:
        clipped = int(np.count_nonzero(out != t.data))
        if clipped:
            counter.note_saturation(clipped)
    return IntTensor(out, bits, validate=False)


def exact_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact integer a @ b for int64 inputs, int64 result.

    Chooses the fastest substrate whose exactness is guaranteed by the
    worst-case partial-sum bound max|a| * max|b| * K.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    k = a.shape[-1]
    if k == 0 or a.size == 0 or b.size == 0:
        return np.zeros(a.shape[:-1] + b.shape[1:], dtype=np.int64)
    amax = int(np.abs(a).max())
    bmax = int(np.abs(b).max())
    bound = amax * bmax * k
    if bound < _F64_EXACT:
        c = a.astype(np.float64) @ b.astype(np.float64)
        return np.rint(c).astype(np.int64)
    if bound < _I64_SAFE:
        return a.astype(np.int64) @ b.astype(np.int64)
    c = a.astype(object) @ b.astype(object)
    return c


def matmul_counted(a: IntTensor, b: IntTensor, counter, out_bits: int = 32,
                   data_operand: str = "a") -> IntTensor:
    """Exact integer matmul with operation accounting.

    The result is accumulated wide and saturated to ``out_bits``.  Counting
    follows the counter's mode: in ``dense`` mode every scalar
    multiply-accumulate is charged (as B-MUL + ADD when one operand is
    binary); in ``event`` mode work is charged per nonzero of the data
    operand, and binary data costs additions only, since a 0/1 factor
    selects rather than multiplies.
    """
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul_counted expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {a.shape} @ {b.shape}")
    wide = exact_matmul(a.data, b.data)
    if counter is not None:
        data = a if data_operand == "a" else b
        other_dim = b.shape[1] if data_operand == "a" else a.shape[0]
        if counter.mode == "dense":
            macs = a.shape[0] * a.shape[1] * b.shape[1]
        else:
            macs = int(np.count_nonzero(data.data)) * other_dim
        counter.record("add", macs)
        if a.binary or b.binary:
            if counter.mode == "dense":
                counter.record("bmul", macs)
        else:
            counter.record("mul", macs)
    if wide.dtype == object:
        lo, hi = int_bounds(out_bits)
        clipped = np.clip(wide, lo, hi).astype(np.int64)
        return IntTensor(clipped, out_bits, validate=False)
    return saturate(IntTensor(wide, MAX_BITS, validate=False), out_bits)
