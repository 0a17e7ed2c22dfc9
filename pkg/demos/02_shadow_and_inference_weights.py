"""Why every weight lives twice: a wide shadow and a narrow inference copy.

Updates land on the 16-bit shadow value, scaled down by a learning-rate
shift and nudged toward zero by a decay shift.  The 8-bit inference
weight is just the shadow's top bits, so it only moves when the shadow
crosses a 256-wide tick boundary.  Small gradients therefore accumulate
instead of vanishing, which is the whole trick: an 8-bit weight trained
directly would round almost every update to zero.

Run:  python3 demos/02_shadow_and_inference_weights.py
"""

import numpy as np

from intspike import IntTensor
from intspike.weights import (MixedPrecisionLayerWeights, apply_update,
                              requantize)


def fresh_pair(shadow_value: int) -> MixedPrecisionLayerWeights:
    w = MixedPrecisionLayerWeights(
        shadow=IntTensor(np.array([[shadow_value]]), 16),
        lp=IntTensor(np.array([[0]]), 8),
        eta_shift=6, decay_shift=14, clip=1 << 12)
    requantize(w)
    return w


def main():
    w = fresh_pair(shadow_value=5 * 256 + 100)
    print("16-bit shadow, 8-bit inference: one inference tick = 256")
    print("learning-rate shift 6 (gradient / 64), decay shift 14\n")
    print(f"{'step':>4} {'gradient':>9} {'shadow':>7} {'inference':>10}")
    print(f"{'':>4} {'':>9} {int(w.shadow.data[0, 0]):>7} "
          f"{int(w.lp.data[0, 0]):>10}")

    # A steady gradient of -800 shifts to -12 per step (plus decay):
    # ~21 steps per inference tick.
    for step in range(1, 61):
        grad = np.array([[-800]])
        apply_update(w, IntTensor(grad, 32, validate=False))
        if step % 6 == 0 or step == 1:
            print(f"{step:>4} {-800:>9} {int(w.shadow.data[0, 0]):>7} "
                  f"{int(w.lp.data[0, 0]):>10}")

    print("\nSixty tiny updates moved the shadow by ~780 and the inference")
    print("weight by three ticks.  Rounding each update straight into 8")
    print("bits would have produced exactly zero movement.")

    # Decay subtracts shadow >> decay_shift, so it scales with the weight
    # itself.  A heavier shift-8 decay makes that visible in a few steps.
    heavy = MixedPrecisionLayerWeights(
        shadow=IntTensor(np.array([[20000]]), 16),
        lp=IntTensor(np.array([[0]]), 8),
        eta_shift=6, decay_shift=8, clip=1 << 12)
    requantize(heavy)
    print("\nWith no gradient, the decay term alone pulls a big weight in")
    print("(shadow 20000, decay shift 8, i.e. minus ~0.4% per step):")
    for step in range(1, 31):
        apply_update(heavy, IntTensor(np.array([[0]]), 32, validate=False))
        if step % 10 == 0:
            print(f"after {step:>2} idle steps: shadow "
                  f"{int(heavy.shadow.data[0, 0]):>6}, inference "
                  f"{int(heavy.lp.data[0, 0]):>3}")


if __name__ == "__main__":
    main()
