"""A single integer LIF neuron, step by step.

Everything the neuron does is integer arithmetic: the leak is an
arithmetic right shift (beta = 1/2 per step here), input current is an
integer sum, the threshold is an integer compare, and the soft reset
subtracts the threshold.  The learning signal is a 0/1 window around the
threshold, evaluated on the voltage before the reset.

Run:  python3 demos/01_integer_lif_dynamics.py
"""

import numpy as np

from intspike import IntTensor, LifParams
from intspike.network import FcLifLayer
from intspike.weights import MixedPrecisionLayerWeights, requantize


def single_input_layer(weight: int) -> FcLifLayer:
    w = MixedPrecisionLayerWeights(
        shadow=IntTensor(np.array([[weight << 8]]), 16),
        lp=IntTensor(np.array([[0]]), 8),
        eta_shift=8, decay_shift=12, clip=1 << 10)
    requantize(w)  # lp becomes `weight`
    params = LifParams(v_th=64, grad_win=32, beta_shift=1)
    return FcLifLayer(w, params, n_in=1, n_out=1, v_bits=32, t_pre_bits=16,
                      t_corr_bits=32, explicit_trace=True)


def main():
    layer = single_input_layer(weight=40)
    layer.begin_sequence(batch=1, t_s=16)

    # A burst of four input spikes, a gap, then two more.
    drive = [1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0]
    print("threshold 64, surrogate window |v-64| < 32, decay v >>= 1\n")
    print(f"{'t':>2} {'in':>3} {'v':>5} {'spike':>6} {'window':>7} {'t_pre':>6}")
    for t, s in enumerate(drive):
        spikes_in = IntTensor(np.array([[s]]), 2, binary=True)
        out = layer.step(spikes_in)
        v = int(layer.state.v.data[0, 0])
        sg = int(layer.sg_log[t, 0, 0])
        tp = int(layer.state.t_pre.data[0, 0])
        print(f"{t:>2} {s:>3} {v:>5} {int(out.data[0, 0]):>6} "
              f"{sg:>7} {tp:>6}")

    print("\nThe voltage climbs by the 8-bit weight (40) per input spike,")
    print("halves each step it gets nothing, and drops by 64 on firing.")
    print("The window bit marks the steps where a weight change could have")
    print("flipped the outcome; only those steps bind input traces to the")
    print("neuron's eligibility.")


if __name__ == "__main__":
    main()
