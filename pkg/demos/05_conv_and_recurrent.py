"""The two non-trivial architectures: spatial kernels and fixed recurrence.

The convolutional layer is unfold + the same counted integer matmul the
dense layers use, so one kernel weight is shared by every window that
reads it, and one input spike is charged once per window.  The recurrent
layer feeds the previous step's voltage, truncated to 16 bits, back
through a fixed random integer matrix that never trains.

Run:  python3 demos/05_conv_and_recurrent.py
"""

import numpy as np

from intspike import IntTensor, LifParams, OpCounter
from intspike.convrec import (ConvSpec, RecurrentWeights, conv_forward,
                              recurrent_step, unfold)
from intspike.neuron import LifLayerState, lif_step
from intspike.weights import MixedPrecisionLayerWeights, requantize


def kernel_pair(vals: np.ndarray) -> MixedPrecisionLayerWeights:
    w = MixedPrecisionLayerWeights(
        shadow=IntTensor(vals.astype(np.int64) << 8, 16),
        lp=IntTensor(np.zeros(vals.shape, dtype=np.int64), 8),
        eta_shift=8, decay_shift=12, clip=1 << 10)
    requantize(w)
    return w


def conv_story():
    spec = ConvSpec(in_channels=1, out_channels=1, kernel=3, stride=2,
                    padding=0)
    print("3x3 kernel, stride 2, on a 9x9 frame:")
    oh, ow = spec.out_hw(9, 9)
    print(f"  output grid {oh}x{ow}, patch length {spec.patch_len}")

    # One lone spike in the middle of the frame.
    frame = np.zeros((1, 1, 9, 9), dtype=np.int64)
    frame[0, 0, 4, 4] = 1
    x = IntTensor(frame, 2, binary=True)
    patches = unfold(x, spec)
    touched = int(np.count_nonzero(patches.data.reshape(oh * ow, -1)
                                   .any(axis=1)))
    print(f"  a single centred spike lands in {touched} of the "
          f"{oh * ow} windows")

    w = kernel_pair(np.ones((1, 1, 3, 3)))
    counter = OpCounter(mode="event")
    maps = conv_forward(x, w, spec, counter)
    print(f"  ones-kernel response: {maps.data[0, 0].tolist()}")
    print(f"  adds charged: {counter.total('add')} "
          "(one per window that reads the spike), multiplies: "
          f"{counter.total('mul')}\n")


def recurrent_story():
    # Two neurons, each driven by its own input channel, voltage kept in
    # 17 bits so the 16-bit tap is the voltage halved.  The loop matrix
    # lets neuron B's voltage excite neuron A; nothing flows back.
    params = LifParams(v_th=150, grad_win=75, beta_shift=1)
    w_ff = kernel_pair(np.diag([120, 120]))
    w_rec = RecurrentWeights(IntTensor(np.array([[0, 2], [0, 0]]), 8))
    zero_rec = RecurrentWeights(IntTensor(np.zeros((2, 2), dtype=np.int64), 8))

    def fresh():
        return LifLayerState(1, 2, 2, params, v_bits=17)

    plain, looped = fresh(), fresh()
    print("two input channels; channel A goes quiet after two steps:")
    drive = [(1, 1), (1, 1), (0, 1), (0, 1), (0, 1), (0, 1), (0, 1)]
    print(f"  {'t':>2} {'in':>8} {'plain A,B':>11} {'recurrent A,B':>15}")
    for t, row in enumerate(drive):
        s = IntTensor(np.array([row]), 2, binary=True)
        a = lif_step(plain, s, w_ff)
        b = recurrent_step(looped, s, w_ff, w_rec)
        print(f"  {t:>2} {str(row):>8} {str(a.data[0].tolist()):>11} "
              f"{str(b.data[0].tolist()):>15}")
    print("  with the loop, B's standing voltage keeps A firing after")
    print("  A's own input stops; the plain A falls silent.")

    a, b = fresh(), fresh()
    s = IntTensor(np.array([[1, 1]]), 2, binary=True)
    same = np.array_equal(recurrent_step(a, s, w_ff, zero_rec).data,
                          lif_step(b, s, w_ff).data)
    print(f"  an all-zero loop matrix reproduces the plain layer: {same}")


def main():
    conv_story()
    recurrent_story()


if __name__ == "__main__":
    main()
