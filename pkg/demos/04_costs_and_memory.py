"""What a training iteration costs, in operations and in bytes.

The engine meters itself: every shift, add, multiply, and binary
multiply is tallied as it happens, split by phase, and the memory
accountant prices every tensor of an iteration at its declared bit
width, rounding up to whole bytes per tensor.  Repricing the identical
inventory at 32 bits shows what the mixed-precision layout saves.

Run:  python3 demos/04_costs_and_memory.py
"""

import numpy as np

from intspike import OpCounter, build_network, parse_config, train_batch
from intspike.data import _onehot
from intspike.network import memory_report
from intspike.tensor import IntTensor

EVENT_MODEL = """
[experiment]
dataset = shd

[model]
hidden = 256
"""


def main():
    cfg = parse_config(EVENT_MODEL)

    mp = memory_report(cfg)
    fp32 = memory_report(cfg, fp32=True)
    print("memory for one iteration of the 175-input event model, batch 128")
    print(f"  mixed precision: {mp.static_bytes:>10,} static + "
          f"{mp.dynamic_bytes:>11,} dynamic = {mp.total_bytes:>11,} bytes")
    print(f"  32-bit layout:   {fp32.static_bytes:>10,} static + "
          f"{fp32.dynamic_bytes:>11,} dynamic = {fp32.total_bytes:>11,} bytes")
    print(f"  ratio: {mp.total_bytes / fp32.total_bytes:.3f}\n")

    # One synthetic iteration to exercise the counter.  Binary multiplies
    # and shifts depend only on shapes; adds and multiplies also scale
    # with how busy the input channels are.
    rng = np.random.default_rng(3)
    spikes = IntTensor(rng.integers(0, 4, size=(cfg.t_s, cfg.batch_size,
                                                cfg.model.inputs)),
                       8, validate=False)
    onehot = _onehot(rng.integers(0, cfg.model.classes, size=cfg.batch_size),
                     cfg.model.classes)
    counter = OpCounter(mode="event")
    train_batch(build_network(cfg, seed=0), spikes, onehot, cfg, counter)

    print("operation tallies for one training iteration, by phase:")
    print(f"{'':>10} {'forward':>12} {'backward':>12} {'update':>12}")
    for kind in ("add", "mul", "bmul", "shift"):
        row = [counter.phase_total(p, kind)
               for p in ("forward", "backward", "update")]
        print(f"{kind:>10} " + " ".join(f"{v:>12,}" for v in row))
    print(f"\nfloat ops: {counter.total('float_ops')}, "
          f"exponentials: {counter.total('exp')}")
    print("\nNearly every multiply in the backward phase pairs a feedback")
    print("voltage with an eligibility trace; the update phase is mostly")
    print("shifts, which is the point of shift-encoded learning rates.")


if __name__ == "__main__":
    main()
